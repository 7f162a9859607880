#pragma once
// Axis-aligned binary trees and the weighted regression forest.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace survcate {

// A node routes x to `left` when x[feature] <= threshold. Leaves have feature == -1
// and `leaf` indexing the owning tree's payload.
struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t leaf = -1;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;
    std::vector<double> leaf_values;

    double predict(std::span<const double> x) const;
    std::size_t leaf_index(std::span<const double> x) const;
};

struct ForestParams {
    std::size_t n_trees = 500;
    std::size_t mtry = 0;               // 0 -> ceil(p/3), or ceil(sqrt(p)) with mtry_sqrt
    bool mtry_sqrt = false;
    double min_leaf_weight = 0.0;       // minimum total weight per child
    std::size_t min_leaf_size = 1;      // minimum bootstrap sample count per child
    std::size_t max_depth = 0;          // 0 means unlimited
    std::uint64_t seed = 1;
};

// Row-major design matrix plus the column names used for canonical ordering.
struct DesignView {
    std::span<const double> values;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::span<const std::string> names;

    double at(std::size_t i, std::size_t j) const { return values[i * n_cols + j]; }
    std::span<const double> row(std::size_t i) const {
        return values.subspan(i * n_cols, n_cols);
    }
};

// Bagged trees minimizing sum_i w_i (y_i - f(x_i))^2 with weighted variance-reduction
// splits and weighted leaf means. Rows with zero weight are ignored.
class RegressionForest {
public:
    RegressionForest() = default;

    static RegressionForest fit(const DesignView& x, std::span<const double> y,
                                std::span<const double> w, const ForestParams& params);

    double predict(std::span<const double> x) const;
    // Out-of-bag prediction per training row; rows in-bag for every tree fall back to
    // the full ensemble.
    const std::vector<double>& oob_predictions() const { return oob_; }

    const std::vector<RegressionTree>& trees() const { return trees_; }
    std::size_t n_features() const { return n_features_; }
    const std::vector<std::string>& feature_names() const { return names_; }
    const ForestParams& params() const { return params_; }
    // Bootstrap multiplicity of each training row (input order) for tree t.
    const std::vector<std::uint32_t>& inbag_counts(std::size_t t) const { return inbag_[t]; }

    nlohmann::json to_json() const;
    static RegressionForest from_json(const nlohmann::json& j);

private:
    std::vector<RegressionTree> trees_;
    std::vector<std::string> names_;
    std::size_t n_features_ = 0;
    ForestParams params_;
    std::vector<double> oob_;
    std::vector<std::vector<std::uint32_t>> inbag_;
};

}  // namespace survcate
