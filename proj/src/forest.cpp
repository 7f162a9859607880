#include "survcate/forest.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "forest_common.hpp"
#include "survcate/error.hpp"
#include "survcate/kernels.hpp"
#include "survcate/parallel.hpp"

namespace survcate {

std::size_t RegressionTree::leaf_index(std::span<const double> x) const {
    std::size_t k = 0;
    while (nodes[k].feature >= 0) {
        const auto& node = nodes[k];
        k = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                         ? node.left
                                         : node.right);
    }
    return static_cast<std::size_t>(nodes[k].leaf);
}

double RegressionTree::predict(std::span<const double> x) const {
    return leaf_values[leaf_index(x)];
}

namespace {


class TreeBuilder {
public:
    TreeBuilder(const detail::CanonicalFrame& frame, std::span<const double> y,
                std::span<const double> w, const ForestParams& params, std::size_t mtry)
        : frame_(frame), y_(y), w_(w), params_(params), mtry_(mtry) {}

    RegressionTree build(Rng& rng, std::vector<std::uint32_t> samples) {
        RegressionTree tree;
        pool_.resize(frame_.features.size());
        std::iota(pool_.begin(), pool_.end(), std::size_t{0});
        struct Task {
            std::size_t node, begin, end, depth;
        };
        std::vector<Task> stack;
        tree.nodes.emplace_back();
        stack.push_back({0, 0, samples.size(), 0});
        while (!stack.empty()) {
            const Task task = stack.back();
            stack.pop_back();
            const auto split = find_split(rng, samples, task.begin, task.end, task.depth);
            if (!split) {
                tree.nodes[task.node].leaf = static_cast<std::int32_t>(tree.leaf_values.size());
                tree.leaf_values.push_back(leaf_mean(samples, task.begin, task.end));
                continue;
            }
            const std::size_t f = split->feature;
            const auto mid_it = std::partition(
                samples.begin() + static_cast<std::ptrdiff_t>(task.begin),
                samples.begin() + static_cast<std::ptrdiff_t>(task.end),
                [&](std::uint32_t r) { return frame_.at(f, r) <= split->threshold; });
            const std::size_t mid = static_cast<std::size_t>(mid_it - samples.begin());
            const std::size_t left = tree.nodes.size();
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            auto& node = tree.nodes[task.node];
            node.feature = static_cast<std::int32_t>(frame_.features[f]);
            node.threshold = split->threshold;
            node.left = static_cast<std::int32_t>(left);
            node.right = static_cast<std::int32_t>(left + 1);
            // Right pushed first so the left subtree is expanded first.
            stack.push_back({left + 1, mid, task.end, task.depth + 1});
            stack.push_back({left, task.begin, mid, task.depth + 1});
        }
        return tree;
    }

private:
    struct Split {
        std::size_t feature;
        double threshold;
    };

    kernels::WeightedSums node_sums(const std::vector<std::uint32_t>& s, std::size_t b,
                                    std::size_t e) {
        ys_.resize(e - b);
        ws_.resize(e - b);
        for (std::size_t i = b; i < e; ++i) {
            ys_[i - b] = y_[s[i]];
            ws_[i - b] = w_[s[i]];
        }
        return kernels::weighted_sums(ys_, ws_);
    }

    double leaf_mean(const std::vector<std::uint32_t>& s, std::size_t b, std::size_t e) {
        const auto sums = node_sums(s, b, e);
        return sums.w > 0.0 ? sums.wy / sums.w : 0.0;
    }

    std::optional<Split> find_split(Rng& rng, const std::vector<std::uint32_t>& s, std::size_t b,
                                    std::size_t e, std::size_t depth) {
        const std::size_t count = e - b;
        if (params_.max_depth > 0 && depth >= params_.max_depth) return std::nullopt;
        if (count < 2 * std::max<std::size_t>(1, params_.min_leaf_size)) return std::nullopt;
        if (frame_.features.empty()) return std::nullopt;
        const auto total = node_sums(s, b, e);
        if (total.w < 2.0 * params_.min_leaf_weight || !(total.w > 0.0)) return std::nullopt;
        const double mean = total.wy / total.w;
        const double min_gain = 1e-14 * total.w * (1.0 + mean * mean);

        detail::sample_features(rng, pool_, mtry_, chosen_);
        std::optional<Split> best;
        double best_gain = min_gain;
        const std::size_t min_size = std::max<std::size_t>(1, params_.min_leaf_size);
        for (std::size_t f : chosen_) {
            order_.clear();
            for (std::size_t i = b; i < e; ++i) order_.push_back({frame_.at(f, s[i]), s[i]});
            std::sort(order_.begin(), order_.end(), [](const auto& a, const auto& c) {
                return a.first < c.first || (a.first == c.first && a.second < c.second);
            });
            if (order_.front().first == order_.back().first) continue;
            double wl = 0.0, wyl = 0.0;
            for (std::size_t k = 0; k + 1 < count; ++k) {
                const std::uint32_t r = order_[k].second;
                wl += w_[r];
                wyl += w_[r] * y_[r];
                if (order_[k].first == order_[k + 1].first) continue;
                if (k + 1 < min_size || count - k - 1 < min_size) continue;
                const double wr = total.w - wl;
                if (wl < params_.min_leaf_weight || wr < params_.min_leaf_weight) continue;
                if (!(wl > 0.0) || !(wr > 0.0)) continue;
                const double diff = wyl / wl - (total.wy - wyl) / wr;
                const double gain = wl * wr / total.w * diff * diff;
                if (gain > best_gain) {
                    best_gain = gain;
                    best = Split{f, detail::split_point(order_[k].first, order_[k + 1].first)};
                }
            }
        }
        return best;
    }

    const detail::CanonicalFrame& frame_;
    std::span<const double> y_;
    std::span<const double> w_;
    const ForestParams& params_;
    std::size_t mtry_;
    std::vector<std::size_t> pool_;
    std::vector<std::size_t> chosen_;
    std::vector<std::pair<double, std::uint32_t>> order_;
    std::vector<double> ys_, ws_;
};

}  // namespace

RegressionForest RegressionForest::fit(const DesignView& x, std::span<const double> y,
                                       std::span<const double> w, const ForestParams& params) {
    if (y.size() != x.n_rows || w.size() != x.n_rows) {
        throw DataError("regression forest: response, weight and design row counts differ");
    }
    if (params.n_trees == 0) throw ConfigError("regression forest needs at least one tree");
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < x.n_rows; ++i) {
        if (!std::isfinite(y[i]) || !std::isfinite(w[i]) || w[i] < 0.0) {
            throw DataError("regression forest: row " + std::to_string(i + 1) +
                            " has a non-finite response or invalid weight");
        }
        if (w[i] > 0.0) keep.push_back(i);
    }
    if (keep.empty()) throw DataError("regression forest: all weights are zero");

    RegressionForest forest;
    forest.params_ = params;
    forest.n_features_ = x.n_cols;
    forest.names_.assign(x.names.begin(), x.names.end());

    const auto frame = detail::canonical_frame(x, keep, {y, w});
    const std::size_t n = frame.rows.size();
    // Canonical copies of the response and weights.
    std::vector<double> yc(n), wc(n);
    for (std::size_t r = 0; r < n; ++r) {
        yc[r] = y[frame.rows[r]];
        wc[r] = w[frame.rows[r]];
    }
    const std::size_t mtry = detail::resolve_mtry(params.mtry, params.mtry_sqrt,
                                                  frame.features.size());

    forest.trees_.resize(params.n_trees);
    forest.inbag_.assign(params.n_trees, std::vector<std::uint32_t>(x.n_rows, 0));
    parallel_for(params.n_trees, [&](std::size_t t) {
        Rng rng(derive_seed(params.seed, t));
        const auto counts = detail::bootstrap_counts(rng, n);
        std::vector<std::uint32_t> samples;
        samples.reserve(n);
        for (std::size_t r = 0; r < n; ++r) {
            samples.insert(samples.end(), counts[r], static_cast<std::uint32_t>(r));
            forest.inbag_[t][frame.rows[r]] = counts[r];
        }
        TreeBuilder builder(frame, yc, wc, params, mtry);
        forest.trees_[t] = builder.build(rng, std::move(samples));
    });

    forest.oob_.assign(x.n_rows, 0.0);
    parallel_for(x.n_rows, [&](std::size_t i) {
        const auto row = x.row(i);
        double sum = 0.0;
        std::size_t m = 0;
        for (std::size_t t = 0; t < forest.trees_.size(); ++t) {
            if (forest.inbag_[t][i] != 0) continue;
            sum += forest.trees_[t].predict(row);
            ++m;
        }
        forest.oob_[i] = m > 0 ? sum / static_cast<double>(m) : forest.predict(row);
    });
    return forest;
}

double RegressionForest::predict(std::span<const double> x) const {
    if (trees_.empty()) throw std::logic_error("regression forest is not fitted");
    if (x.size() != n_features_) {
        throw DataError("regression forest expects " + std::to_string(n_features_) +
                        " features, got " + std::to_string(x.size()));
    }
    double sum = 0.0;
    for (const auto& tree : trees_) sum += tree.predict(x);
    return sum / static_cast<double>(trees_.size());
}

namespace {

nlohmann::json nodes_to_json(const std::vector<TreeNode>& nodes) {
    std::vector<std::int32_t> feature, left, right, leaf;
    std::vector<double> threshold;
    for (const auto& n : nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        leaf.push_back(n.leaf);
    }
    return {{"feature", feature}, {"threshold", threshold}, {"left", left},
            {"right", right},     {"leaf", leaf}};
}

}  // namespace

namespace detail {

std::vector<TreeNode> nodes_from_json(const nlohmann::json& j) {
    const auto feature = j.at("feature").get<std::vector<std::int32_t>>();
    const auto threshold = j.at("threshold").get<std::vector<double>>();
    const auto left = j.at("left").get<std::vector<std::int32_t>>();
    const auto right = j.at("right").get<std::vector<std::int32_t>>();
    const auto leaf = j.at("leaf").get<std::vector<std::int32_t>>();
    std::vector<TreeNode> nodes(feature.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        nodes[k] = {feature[k], threshold.at(k), left.at(k), right.at(k), leaf.at(k)};
    }
    return nodes;
}

nlohmann::json nodes_json(const std::vector<TreeNode>& nodes) { return nodes_to_json(nodes); }

}  // namespace detail

nlohmann::json RegressionForest::to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) {
        auto j = nodes_to_json(t.nodes);
        j["values"] = t.leaf_values;
        trees.push_back(std::move(j));
    }
    return {{"kind", "regression_forest"},
            {"n_features", n_features_},
            {"names", names_},
            {"params",
             {{"n_trees", params_.n_trees},
              {"mtry", params_.mtry},
              {"mtry_sqrt", params_.mtry_sqrt},
              {"min_leaf_weight", params_.min_leaf_weight},
              {"min_leaf_size", params_.min_leaf_size},
              {"max_depth", params_.max_depth},
              {"seed", params_.seed}}},
            {"trees", std::move(trees)}};
}

RegressionForest RegressionForest::from_json(const nlohmann::json& j) {
    if (j.at("kind") != "regression_forest") throw DataError("not a regression forest");
    RegressionForest f;
    f.n_features_ = j.at("n_features").get<std::size_t>();
    f.names_ = j.at("names").get<std::vector<std::string>>();
    const auto& p = j.at("params");
    f.params_.n_trees = p.at("n_trees").get<std::size_t>();
    f.params_.mtry = p.at("mtry").get<std::size_t>();
    f.params_.mtry_sqrt = p.at("mtry_sqrt").get<bool>();
    f.params_.min_leaf_weight = p.at("min_leaf_weight").get<double>();
    f.params_.min_leaf_size = p.at("min_leaf_size").get<std::size_t>();
    f.params_.max_depth = p.at("max_depth").get<std::size_t>();
    f.params_.seed = p.at("seed").get<std::uint64_t>();
    for (const auto& tj : j.at("trees")) {
        RegressionTree t;
        t.nodes = detail::nodes_from_json(tj);
        t.leaf_values = tj.at("values").get<std::vector<double>>();
        f.trees_.push_back(std::move(t));
    }
    return f;
}

}  // namespace survcate
