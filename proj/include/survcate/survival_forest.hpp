#pragma once
// Random survival forest with log-rank splitting and Nelson-Aalen leaves.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "survcate/forest.hpp"

namespace survcate {

struct SurvivalForestParams {
    std::size_t n_trees = 500;
    std::size_t mtry = 0;             // 0 -> ceil(sqrt(p))
    std::size_t min_leaf_events = 5;
    std::size_t max_depth = 0;        // 0 -> unlimited
    // Random candidate thresholds per feature and node; 0 tries every gap.
    std::size_t split_candidates = 10;
    std::uint64_t seed = 1;
};

struct SurvivalTree {
    std::vector<TreeNode> nodes;
    // Leaf l owns event times / CHF values in [leaf_offsets[l], leaf_offsets[l+1]).
    std::vector<std::uint32_t> leaf_offsets;
    std::vector<double> leaf_times;
    std::vector<double> leaf_chf;

    std::size_t leaf_index(std::span<const double> x) const;
    double cumulative_hazard(std::size_t leaf, double t) const;
};

class SurvivalForest {
public:
    SurvivalForest() = default;

    static SurvivalForest fit(const DesignView& x, std::span<const double> times,
                              const std::vector<bool>& events, const SurvivalForestParams& params);

    // exp(-mean_t CHF_t(t | x)).
    double predict_survival(std::span<const double> x, double t) const;
    // Out-of-bag survival at t for training row i (full ensemble if never out of bag).
    std::vector<double> oob_survival(double t) const;

    const std::vector<SurvivalTree>& trees() const { return trees_; }
    const SurvivalForestParams& params() const { return params_; }
    const std::vector<std::uint32_t>& inbag_counts(std::size_t t) const { return inbag_[t]; }
    std::size_t n_features() const { return n_features_; }

    nlohmann::json to_json() const;
    static SurvivalForest from_json(const nlohmann::json& j);

private:
    std::vector<SurvivalTree> trees_;
    SurvivalForestParams params_;
    std::size_t n_features_ = 0;
    std::vector<std::vector<std::uint32_t>> inbag_;
    std::vector<double> train_x_;  // retained for out-of-bag evaluation
};

// Harrell's concordance index for risk scores (higher score = earlier failure).
double concordance_index(std::span<const double> times, const std::vector<bool>& events,
                         std::span<const double> risk);

// Drop in held-out concordance when column j is permuted, for every column.
std::vector<double> permutation_importance(const SurvivalForest& forest, const DesignView& x,
                                           std::span<const double> times,
                                           const std::vector<bool>& events, double t,
                                           std::uint64_t seed);

}  // namespace survcate
