#pragma once
// First-stage estimators: propensity, conditional survival, and censoring weights.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "survcate/data_model.hpp"
#include "survcate/forest.hpp"
#include "survcate/kaplan_meier.hpp"
#include "survcate/survival_forest.hpp"
#include "survcate/weibull.hpp"

namespace survcate {

// Classification forest for P(A = 1 | x). With 0/1 labels and unit weights the
// variance-reduction criterion equals Gini decrease, and leaf means are leaf frequencies.
class PropensityForest {
public:
    PropensityForest() = default;

    static PropensityForest fit(const DesignView& x, std::span<const int> treatment,
                                const ForestParams& params, double clip);

    double predict(std::span<const double> x) const;
    std::vector<double> oob_predictions() const;
    double clip() const { return clip_; }
    const RegressionForest& forest() const { return forest_; }

    nlohmann::json to_json() const;
    static PropensityForest from_json(const nlohmann::json& j);

private:
    double clamp(double e) const;

    RegressionForest forest_;
    double clip_ = 0.01;
};

double predict_survival(const SurvivalForest& model, std::span<const double> x, double t);
double predict_survival(const WeibullAftModel& model, std::span<const double> x, double t);
double predict_survival(const KaplanMeierCurve& curve, double t);

enum class OutcomeModel { SurvivalForest, Weibull };

ForestParams default_propensity_params();

struct NuisanceConfig {
    OutcomeModel outcome_model = OutcomeModel::SurvivalForest;
    SurvivalForestParams survival_forest;
    ForestParams propensity_forest = default_propensity_params();
    double propensity_clip = 0.01;
    double weight_cap = 20.0;
    bool stratify_censoring = true;
    // Training rows get out-of-bag forest predictions.
    bool out_of_bag = true;
    std::uint64_t seed = 1;
};

struct NuisanceNeeds {
    bool propensity = true;
    bool arm_survival = true;
    bool pooled_survival = true;
};

struct NuisanceDiagnostics {
    std::size_t n = 0;
    std::size_t n_complete = 0;
    std::size_t n_propensity_clipped = 0;
    std::size_t n_weight_capped = 0;
    std::size_t n_censoring_zero = 0;

    nlohmann::json to_json() const;
};

// Per-subject first-stage values. Quantities that were not requested are NaN;
// censoring quantities are NaN / 0 outside the complete-case view.
struct NuisanceBundle {
    double t_star = 0.0;
    std::vector<int> treatment;
    std::vector<double> propensity;
    std::vector<double> surv0;
    std::vector<double> surv1;
    std::vector<double> surv_pooled;
    std::vector<double> censoring_prob;    // G(min(U, t*)- | A)
    std::vector<double> censoring_weight;  // w^C, capped
    NuisanceDiagnostics diagnostics;

    std::size_t size() const { return treatment.size(); }
};

struct NuisanceModels {
    std::optional<PropensityForest> propensity;
    std::optional<SurvivalForest> surv_forest[2];
    std::optional<SurvivalForest> pooled_forest;
    std::optional<WeibullAftModel> surv_weibull[2];
    std::optional<WeibullAftModel> pooled_weibull;
    CensoringModel censoring;
};

struct NuisanceFit {
    NuisanceModels models;
    NuisanceBundle bundle;
};

// Fills w^C for complete-case rows: min(1 / G(min(U, t*)-), cap); G == 0 engages the cap.
void apply_censoring_weights(const Cohort& cohort, const TargetTime& t,
                             const CensoringModel& censoring, double cap, NuisanceBundle& bundle);

NuisanceFit build_nuisance_bundle(const Cohort& cohort, const TargetTime& t,
                                  const NuisanceConfig& config, NuisanceNeeds needs = {});

}  // namespace survcate
