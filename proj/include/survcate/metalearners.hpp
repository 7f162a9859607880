#pragma once
// Pseudo-outcome meta-learners for the survival-probability CATE
// tau(x; t*) = S1(t*|x) - S0(t*|x).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "survcate/data_model.hpp"
#include "survcate/forest.hpp"
#include "survcate/nuisance.hpp"

namespace survcate {

enum class LearnerKind { X, M, DR, D, DEA, R };

inline constexpr LearnerKind kAllLearners[] = {LearnerKind::X, LearnerKind::M,   LearnerKind::DR,
                                               LearnerKind::D, LearnerKind::DEA, LearnerKind::R};

std::string_view learner_name(LearnerKind kind);
std::optional<LearnerKind> parse_learner(std::string_view name);

// First-stage quantities each learner consumes.
NuisanceNeeds learner_needs(LearnerKind kind);

// Complete-case training rows for the second stage. For the X-learner, `arm` says which
// arm-specific regression a row feeds; otherwise it is the row's treatment.
struct PseudoOutcomeSet {
    LearnerKind learner = LearnerKind::R;
    std::vector<std::size_t> rows;  // cohort indices
    std::vector<int> arm;
    std::vector<double> indicator;  // I(T > t*)
    std::vector<double> y;          // Y*
    std::vector<double> w_m;        // learner weight
    std::vector<double> w_c;        // censoring weight
    std::size_t n_dropped = 0;      // R-learner rows with |A - e| < epsilon

    std::size_t size() const { return rows.size(); }
};

PseudoOutcomeSet build_pseudo_outcomes(const NuisanceBundle& bundle, const CompleteCaseView& view,
                                       LearnerKind learner, double r_epsilon = 0.01);

// Per-row w^M (Y* - tau)^2 for candidate values tau (one per row).
std::vector<double> pseudo_loss_terms(const PseudoOutcomeSet& pseudo, std::span<const double> tau);

// Weighted ridge regression; the lightweight second-stage backend.
struct RidgeModel {
    double intercept = 0.0;
    std::vector<double> coef;

    double predict(std::span<const double> x) const;
    static RidgeModel fit(const DesignView& x, std::span<const double> y, std::span<const double> w,
                          double lambda);
};

enum class RegressorKind { Forest, Ridge };

struct RegressorParams {
    RegressorKind kind = RegressorKind::Forest;
    ForestParams forest;  // mtry 0 -> ceil(p/3); min_leaf_weight <= 0 -> factor * median(w)
    double min_leaf_weight_factor = 10.0;
    double ridge_lambda = 1e-3;

    RegressorParams() { forest.min_leaf_weight = 0.0; }
};

using CateRegressor = std::variant<RegressionForest, RidgeModel>;

class CateModel {
public:
    CateModel() = default;
    CateModel(LearnerKind learner, double t_star, CovariateSchema schema,
              std::vector<CateRegressor> regressors, std::optional<PropensityForest> propensity);

    LearnerKind learner() const { return learner_; }
    double t_star() const { return t_star_; }
    const CovariateSchema& schema() const { return schema_; }
    const std::vector<CateRegressor>& regressors() const { return regressors_; }
    const std::optional<PropensityForest>& propensity() const { return propensity_; }

    // Covariates in schema order (categorical as level index); clamped to [-1, 1].
    double predict(std::span<const double> x) const;
    // Covariates already one-hot expanded.
    double predict_design(std::span<const double> design_row) const;
    // Unclamped output of the second stage.
    double predict_raw(std::span<const double> design_row) const;

    // Combines per-regressor outputs (and, for X, the raw propensity) into tau-hat.
    // Input order matches ensemble_parts().
    double combine(std::span<const double> part_values) const;
    // Tree ensembles whose outputs feed combine(), or empty if any part is not a forest.
    std::vector<const RegressionForest*> ensemble_parts() const;

    nlohmann::json to_json() const;
    static CateModel from_json(const nlohmann::json& j);

private:
    LearnerKind learner_ = LearnerKind::R;
    double t_star_ = 0.0;
    CovariateSchema schema_;
    std::vector<CateRegressor> regressors_;
    std::optional<PropensityForest> propensity_;
};

// Second stage: minimizes sum w^C w^M (Y* - tau(x))^2 over the pseudo-outcome rows.
// `propensity` is required for the X-learner blend.
CateModel fit_cate(const Cohort& cohort, const TargetTime& t, const PseudoOutcomeSet& pseudo,
                   const RegressorParams& params, std::uint64_t seed,
                   const PropensityForest* propensity = nullptr);

struct MetaLearnerConfig {
    NuisanceConfig nuisance;
    RegressorParams regressor;
    double r_epsilon = 0.01;
    std::uint64_t seed = 1;
};

struct MetaLearnerFit {
    CateModel model;
    NuisanceBundle bundle;
    PseudoOutcomeSet pseudo;
};

// Both stages on the same data.
MetaLearnerFit fit_metalearner(const Cohort& cohort, const TargetTime& t, LearnerKind learner,
                               const MetaLearnerConfig& config);

struct CrossFitResult {
    std::vector<double> tau_hat;                // out-of-fold, one per subject
    std::vector<std::vector<std::size_t>> folds;  // held-out rows per fold
    std::vector<CateModel> models;
};

// Folds are stratified by (A, delta).
std::vector<std::vector<std::size_t>> stratified_folds(const Cohort& cohort, std::size_t k,
                                                       std::uint64_t seed);

CrossFitResult cross_fit_cate(const Cohort& cohort, const TargetTime& t, LearnerKind learner,
                              std::size_t k_folds, const MetaLearnerConfig& config);

}  // namespace survcate
