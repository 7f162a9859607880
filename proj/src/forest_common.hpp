#pragma once
// Training-frame canonicalization shared by the forest learners.
//
// Rows are visited in lexicographic content order and candidate features in name order,
// so fitted forests do not depend on input row or column order. Columns that are constant
// over the training rows are never split candidates.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "survcate/forest.hpp"
#include "survcate/rng.hpp"

namespace survcate::detail {

struct CanonicalFrame {
    std::vector<std::size_t> rows;      // canonical position -> input row
    std::vector<std::size_t> features;  // candidate input columns in name order
    // Column-major copy: values[f * rows.size() + r] = x(rows[r], features[f]).
    std::vector<double> values;

    double at(std::size_t f, std::size_t r) const { return values[f * rows.size() + r]; }
};

inline std::vector<std::size_t> name_order(const DesignView& x) {
    std::vector<std::size_t> cols(x.n_cols);
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    if (x.names.size() == x.n_cols) {
        std::stable_sort(cols.begin(), cols.end(),
                         [&](std::size_t a, std::size_t b) { return x.names[a] < x.names[b]; });
    }
    return cols;
}

// `keep` lists the input rows used for training; `responses` break ties between rows
// with identical covariates.
inline CanonicalFrame canonical_frame(const DesignView& x, std::vector<std::size_t> keep,
                                      const std::vector<std::span<const double>>& responses) {
    CanonicalFrame frame;
    const auto cols = name_order(x);
    std::sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
        for (std::size_t c : cols) {
            const double va = x.at(a, c), vb = x.at(b, c);
            if (va != vb) return va < vb;
        }
        for (const auto& r : responses) {
            if (r[a] != r[b]) return r[a] < r[b];
        }
        return false;
    });
    frame.rows = std::move(keep);
    for (std::size_t c : cols) {
        if (frame.rows.empty()) break;
        const double first = x.at(frame.rows.front(), c);
        const bool constant = std::all_of(frame.rows.begin(), frame.rows.end(),
                                          [&](std::size_t i) { return x.at(i, c) == first; });
        if (!constant) frame.features.push_back(c);
    }
    const std::size_t n = frame.rows.size();
    frame.values.resize(frame.features.size() * n);
    for (std::size_t f = 0; f < frame.features.size(); ++f) {
        for (std::size_t r = 0; r < n; ++r) {
            frame.values[f * n + r] = x.at(frame.rows[r], frame.features[f]);
        }
    }
    return frame;
}

inline std::size_t resolve_mtry(std::size_t requested, bool use_sqrt, std::size_t p) {
    if (p == 0) return 0;
    std::size_t m = requested;
    if (m == 0) {
        m = use_sqrt ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))))
                     : (p + 2) / 3;
    }
    return std::clamp<std::size_t>(m, 1, p);
}

// Draws `m` distinct entries of [0, p) into `out` (partial Fisher-Yates over `pool`).
inline void sample_features(Rng& rng, std::vector<std::size_t>& pool, std::size_t m,
                            std::vector<std::size_t>& out) {
    out.clear();
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t j = k + uniform_index(rng, pool.size() - k);
        std::swap(pool[k], pool[j]);
        out.push_back(pool[k]);
    }
}

// Threshold strictly separating a < b with `x <= threshold` going left.
inline double split_point(double a, double b) {
    const double mid = a + (b - a) / 2.0;
    return mid < b ? mid : a;
}

// Bootstrap multiplicities over canonical positions.
inline std::vector<std::uint32_t> bootstrap_counts(Rng& rng, std::size_t n) {
    std::vector<std::uint32_t> counts(n, 0);
    for (std::size_t k = 0; k < n; ++k) ++counts[uniform_index(rng, n)];
    return counts;
}

}  // namespace survcate::detail

#include <json.hpp>

namespace survcate::detail {
std::vector<TreeNode> nodes_from_json(const nlohmann::json& j);
nlohmann::json nodes_json(const std::vector<TreeNode>& nodes);
}  // namespace survcate::detail
