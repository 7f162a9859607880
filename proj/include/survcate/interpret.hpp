#pragma once
// KernelSHAP attributions for CATE predictions and the summaries built on them.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "survcate/metalearners.hpp"

namespace survcate {

struct ShapConfig {
    // Row-major background rows in design space (one-hot expanded).
    std::vector<double> background;
    std::size_t coalition_budget = 2048;
    std::size_t exact_threshold = 10;  // at most 15
    std::uint64_t seed = 1;
    // Evaluate coalitions of tree-ensemble models by joint tree traversal instead of
    // predicting every masked composite. Results are identical up to rounding.
    bool tree_traversal = true;
};

// Players are design columns. `groups` maps each column to its original covariate.
struct ShapMatrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> values;  // row-major n_rows x n_cols
    double base_value = 0.0;
    std::vector<double> predictions;
    std::vector<std::size_t> subjects;
    std::vector<std::string> columns;
    std::vector<std::size_t> groups;
    std::vector<std::string> covariates;
    bool exact = true;

    double at(std::size_t i, std::size_t j) const { return values[i * n_cols + j]; }
    // Row-major n_rows x covariates.size(), one-hot columns summed per covariate.
    std::vector<double> grouped() const;
    // max_i |base + sum_j v_ij - prediction_i|
    double max_additivity_error() const;
};

// Predicts rows.size() / p composite rows into out.
using BatchPredictor = std::function<void(std::span<const double> rows, std::span<double> out)>;

// `subjects` is row-major with p columns; subject ids default to 0..n-1.
ShapMatrix kernel_shap(const BatchPredictor& predict, std::size_t p,
                       std::span<const double> subjects, const ShapConfig& config);

ShapMatrix kernel_shap(const CateModel& model, std::span<const double> subjects,
                       const ShapConfig& config);

// Seeded subsample of min(count, n) row indices, sorted.
std::vector<std::size_t> sample_rows(std::size_t n, std::size_t count, std::uint64_t seed);
// Gathers row-major rows.
std::vector<double> gather_rows(std::span<const double> matrix, std::size_t p,
                                std::span<const std::size_t> rows);

struct AttributionScore {
    double score = 0.0;
    std::vector<std::size_t> predictive_set;
    std::size_t n_used = 0;
    std::size_t n_zero = 0;  // rows with all-zero attributions, excluded
};

// Indices refer to original covariates.
AttributionScore attribution_score(const ShapMatrix& shap,
                                   std::span<const std::size_t> predictive_set);

struct VipEntry {
    std::size_t covariate = 0;
    std::string name;
    double median_abs = 0.0;
    double mean_abs = 0.0;
};

// Ranked by median |v|, then mean |v|, then covariate order.
std::vector<VipEntry> vip_summary(const ShapMatrix& shap);

void write_shap_wide_csv(std::ostream& out, const ShapMatrix& shap);
void write_shap_long_csv(std::ostream& out, const ShapMatrix& shap);
nlohmann::json shap_summary_json(const ShapMatrix& shap);

}  // namespace survcate
