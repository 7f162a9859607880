#include "survcate/survival_forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "forest_common.hpp"
#include "survcate/error.hpp"
#include "survcate/kernels.hpp"
#include "survcate/parallel.hpp"

namespace survcate {

std::size_t SurvivalTree::leaf_index(std::span<const double> x) const {
    std::size_t k = 0;
    while (nodes[k].feature >= 0) {
        const auto& node = nodes[k];
        k = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                         ? node.left
                                         : node.right);
    }
    return static_cast<std::size_t>(nodes[k].leaf);
}

double SurvivalTree::cumulative_hazard(std::size_t leaf, double t) const {
    const auto first = leaf_times.begin() + leaf_offsets[leaf];
    const auto last = leaf_times.begin() + leaf_offsets[leaf + 1];
    const auto it = std::upper_bound(first, last, t);
    if (it == first) return 0.0;
    return leaf_chf[static_cast<std::size_t>(it - leaf_times.begin()) - 1];
}

namespace {

class SurvivalTreeBuilder {
public:
    SurvivalTreeBuilder(const detail::CanonicalFrame& frame, std::span<const double> times,
                        const std::vector<char>& events, const SurvivalForestParams& params,
                        std::size_t mtry)
        : frame_(frame), times_(times), events_(events), params_(params), mtry_(mtry) {}

    SurvivalTree build(Rng& rng, std::vector<std::uint32_t> samples) {
        SurvivalTree tree;
        tree.leaf_offsets.push_back(0);
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
            prepare_node(samples, task.begin, task.end);
            const auto split = find_split(rng, samples, task.begin, task.end, task.depth);
            if (!split) {
                tree.nodes[task.node].leaf = static_cast<std::int32_t>(tree.leaf_offsets.size() - 1);
                append_leaf(tree);
                continue;
            }
            const std::size_t f = split->first;
            const double thr = split->second;
            const auto mid_it = std::partition(
                samples.begin() + static_cast<std::ptrdiff_t>(task.begin),
                samples.begin() + static_cast<std::ptrdiff_t>(task.end),
                [&](std::uint32_t r) { return frame_.at(f, r) <= thr; });
            const std::size_t mid = static_cast<std::size_t>(mid_it - samples.begin());
            const std::size_t left = tree.nodes.size();
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            auto& node = tree.nodes[task.node];
            node.feature = static_cast<std::int32_t>(frame_.features[f]);
            node.threshold = thr;
            node.left = static_cast<std::int32_t>(left);
            node.right = static_cast<std::int32_t>(left + 1);
            stack.push_back({left + 1, mid, task.end, task.depth + 1});
            stack.push_back({left, task.begin, mid, task.depth + 1});
        }
        return tree;
    }

private:
    // Distinct event times of the node, bucket of every sample, and risk-set sizes.
    void prepare_node(const std::vector<std::uint32_t>& s, std::size_t b, std::size_t e) {
        event_times_.clear();
        for (std::size_t i = b; i < e; ++i) {
            if (events_[s[i]]) event_times_.push_back(times_[s[i]]);
        }
        std::sort(event_times_.begin(), event_times_.end());
        total_events_ = event_times_.size();
        event_times_.erase(std::unique(event_times_.begin(), event_times_.end()),
                           event_times_.end());
        const std::size_t k = event_times_.size();
        bucket_.resize(e - b);
        bucket_count_.assign(k + 1, 0.0);
        at_risk_.assign(k, 0.0);
        deaths_.assign(k, 0.0);
        for (std::size_t i = b; i < e; ++i) {
            const std::size_t bk = static_cast<std::size_t>(
                std::upper_bound(event_times_.begin(), event_times_.end(), times_[s[i]]) -
                event_times_.begin());
            bucket_[i - b] = static_cast<std::uint32_t>(bk);
            bucket_count_[bk] += 1.0;
            if (events_[s[i]]) deaths_[bk - 1] += 1.0;
        }
        double running = 0.0;
        for (std::size_t kk = k; kk-- > 0;) {
            running += bucket_count_[kk + 1];
            at_risk_[kk] = running;
        }
    }

    void append_leaf(SurvivalTree& tree) const {
        double h = 0.0;
        for (std::size_t k = 0; k < event_times_.size(); ++k) {
            h += deaths_[k] / at_risk_[k];
            tree.leaf_times.push_back(event_times_[k]);
            tree.leaf_chf.push_back(h);
        }
        tree.leaf_offsets.push_back(static_cast<std::uint32_t>(tree.leaf_times.size()));
    }

    std::optional<std::pair<std::size_t, double>> find_split(Rng& rng,
                                                             const std::vector<std::uint32_t>& s,
                                                             std::size_t b, std::size_t e,
                                                             std::size_t depth) {
        const std::size_t min_events = std::max<std::size_t>(1, params_.min_leaf_events);
        if (params_.max_depth > 0 && depth >= params_.max_depth) return std::nullopt;
        if (total_events_ < 2 * min_events || frame_.features.empty()) return std::nullopt;
        if (event_times_.size() < 2 && total_events_ == e - b) return std::nullopt;

        const std::size_t k_times = event_times_.size();
        risk_left_.resize(k_times);
        deaths_left_.resize(k_times);
        detail::sample_features(rng, pool_, mtry_, chosen_);
        std::optional<std::pair<std::size_t, double>> best;
        double best_stat = 0.0;
        for (std::size_t f : chosen_) {
            order_.clear();
            for (std::size_t i = b; i < e; ++i) order_.push_back({frame_.at(f, s[i]), i - b});
            std::sort(order_.begin(), order_.end(), [](const auto& x, const auto& y) {
                return x.first < y.first || (x.first == y.first && x.second < y.second);
            });
            gaps_.clear();
            for (std::size_t k = 0; k + 1 < order_.size(); ++k) {
                if (order_[k].first < order_[k + 1].first) gaps_.push_back(k);
            }
            if (gaps_.empty()) continue;
            if (params_.split_candidates > 0 && gaps_.size() > params_.split_candidates) {
                for (std::size_t k = 0; k < params_.split_candidates; ++k) {
                    const std::size_t j = k + uniform_index(rng, gaps_.size() - k);
                    std::swap(gaps_[k], gaps_[j]);
                }
                gaps_.resize(params_.split_candidates);
                std::sort(gaps_.begin(), gaps_.end());
            }
            bucket_left_.assign(k_times + 1, 0.0);
            std::fill(deaths_left_.begin(), deaths_left_.end(), 0.0);
            std::size_t events_left = 0;
            std::size_t pos = 0;
            for (std::size_t g : gaps_) {
                for (; pos <= g; ++pos) {
                    const std::size_t local = order_[pos].second;
                    const std::uint32_t bk = bucket_[local];
                    bucket_left_[bk] += 1.0;
                    if (events_[s[b + local]]) {
                        deaths_left_[bk - 1] += 1.0;
                        ++events_left;
                    }
                }
                if (events_left < min_events || total_events_ - events_left < min_events) continue;
                double running = 0.0;
                for (std::size_t kk = k_times; kk-- > 0;) {
                    running += bucket_left_[kk + 1];
                    risk_left_[kk] = running;
                }
                const auto terms =
                    kernels::logrank_terms(at_risk_, deaths_, risk_left_, deaths_left_);
                if (!(terms.variance > 0.0)) continue;
                const double stat = terms.numerator * terms.numerator / terms.variance;
                if (stat > best_stat) {
                    best_stat = stat;
                    best = std::pair{f, detail::split_point(order_[g].first, order_[g + 1].first)};
                }
            }
        }
        return best;
    }

    const detail::CanonicalFrame& frame_;
    std::span<const double> times_;
    const std::vector<char>& events_;
    const SurvivalForestParams& params_;
    std::size_t mtry_;
    std::vector<std::size_t> pool_, chosen_, gaps_;
    std::vector<std::pair<double, std::size_t>> order_;
    std::vector<double> event_times_;
    std::size_t total_events_ = 0;
    std::vector<std::uint32_t> bucket_;
    std::vector<double> bucket_count_, at_risk_, deaths_;
    std::vector<double> bucket_left_, risk_left_, deaths_left_;
};

double mean_chf(const std::vector<SurvivalTree>& trees, std::span<const double> x, double t) {
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.cumulative_hazard(tree.leaf_index(x), t);
    return sum / static_cast<double>(trees.size());
}

}  // namespace

SurvivalForest SurvivalForest::fit(const DesignView& x, std::span<const double> times,
                                   const std::vector<bool>& events,
                                   const SurvivalForestParams& params) {
    if (times.size() != x.n_rows || events.size() != x.n_rows) {
        throw DataError("survival forest: times, events and design row counts differ");
    }
    if (x.n_rows == 0) throw DataError("survival forest: no rows");
    if (std::none_of(events.begin(), events.end(), [](bool e) { return e; })) {
        throw DataError("survival forest: training subset has no events");
    }
    if (params.n_trees == 0) throw ConfigError("survival forest needs at least one tree");

    std::vector<double> event_values(x.n_rows);
    for (std::size_t i = 0; i < x.n_rows; ++i) event_values[i] = events[i] ? 1.0 : 0.0;
    std::vector<std::size_t> all(x.n_rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto frame = detail::canonical_frame(x, all, {times, event_values});
    const std::size_t n = frame.rows.size();
    std::vector<double> tc(n);
    std::vector<char> ec(n);
    for (std::size_t r = 0; r < n; ++r) {
        tc[r] = times[frame.rows[r]];
        ec[r] = events[frame.rows[r]] ? 1 : 0;
    }
    const std::size_t mtry = detail::resolve_mtry(params.mtry, true, frame.features.size());

    SurvivalForest forest;
    forest.params_ = params;
    forest.n_features_ = x.n_cols;
    forest.train_x_.assign(x.values.begin(), x.values.end());
    forest.trees_.resize(params.n_trees);
    forest.inbag_.assign(params.n_trees, std::vector<std::uint32_t>(n, 0));
    parallel_for(params.n_trees, [&](std::size_t t) {
        Rng rng(derive_seed(params.seed, t));
        const auto counts = detail::bootstrap_counts(rng, n);
        std::vector<std::uint32_t> samples;
        samples.reserve(n);
        for (std::size_t r = 0; r < n; ++r) {
            samples.insert(samples.end(), counts[r], static_cast<std::uint32_t>(r));
            forest.inbag_[t][frame.rows[r]] = counts[r];
        }
        SurvivalTreeBuilder builder(frame, tc, ec, params, mtry);
        forest.trees_[t] = builder.build(rng, std::move(samples));
    });
    return forest;
}

double SurvivalForest::predict_survival(std::span<const double> x, double t) const {
    if (trees_.empty()) throw std::logic_error("survival forest is not fitted");
    if (x.size() != n_features_) {
        throw DataError("survival forest expects " + std::to_string(n_features_) +
                        " features, got " + std::to_string(x.size()));
    }
    if (t <= 0.0) return 1.0;
    return std::exp(-mean_chf(trees_, x, t));
}

std::vector<double> SurvivalForest::oob_survival(double t) const {
    if (train_x_.empty()) throw std::logic_error("out-of-bag data unavailable for this forest");
    const std::size_t n = train_x_.size() / n_features_;
    std::vector<double> out(n, 1.0);
    parallel_for(n, [&](std::size_t i) {
        const std::span<const double> row(train_x_.data() + i * n_features_, n_features_);
        double sum = 0.0;
        std::size_t m = 0;
        for (std::size_t k = 0; k < trees_.size(); ++k) {
            if (inbag_[k][i] != 0) continue;
            sum += trees_[k].cumulative_hazard(trees_[k].leaf_index(row), t);
            ++m;
        }
        out[i] = m > 0 ? std::exp(-sum / static_cast<double>(m)) : predict_survival(row, t);
    });
    return out;
}

nlohmann::json SurvivalForest::to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) {
        auto j = detail::nodes_json(t.nodes);
        j["leaf_offsets"] = t.leaf_offsets;
        j["leaf_times"] = t.leaf_times;
        j["leaf_chf"] = t.leaf_chf;
        trees.push_back(std::move(j));
    }
    return {{"kind", "survival_forest"},
            {"n_features", n_features_},
            {"params",
             {{"n_trees", params_.n_trees},
              {"mtry", params_.mtry},
              {"min_leaf_events", params_.min_leaf_events},
              {"max_depth", params_.max_depth},
              {"split_candidates", params_.split_candidates},
              {"seed", params_.seed}}},
            {"trees", std::move(trees)}};
}

SurvivalForest SurvivalForest::from_json(const nlohmann::json& j) {
    if (j.at("kind") != "survival_forest") throw DataError("not a survival forest");
    SurvivalForest f;
    f.n_features_ = j.at("n_features").get<std::size_t>();
    const auto& p = j.at("params");
    f.params_.n_trees = p.at("n_trees").get<std::size_t>();
    f.params_.mtry = p.at("mtry").get<std::size_t>();
    f.params_.min_leaf_events = p.at("min_leaf_events").get<std::size_t>();
    f.params_.max_depth = p.at("max_depth").get<std::size_t>();
    f.params_.split_candidates = p.at("split_candidates").get<std::size_t>();
    f.params_.seed = p.at("seed").get<std::uint64_t>();
    for (const auto& tj : j.at("trees")) {
        SurvivalTree t;
        t.nodes = detail::nodes_from_json(tj);
        t.leaf_offsets = tj.at("leaf_offsets").get<std::vector<std::uint32_t>>();
        t.leaf_times = tj.at("leaf_times").get<std::vector<double>>();
        t.leaf_chf = tj.at("leaf_chf").get<std::vector<double>>();
        f.trees_.push_back(std::move(t));
    }
    return f;
}

double concordance_index(std::span<const double> times, const std::vector<bool>& events,
                         std::span<const double> risk) {
    double concordant = 0.0;
    double comparable = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!events[i]) continue;
        for (std::size_t j = 0; j < times.size(); ++j) {
            if (!(times[i] < times[j])) continue;
            comparable += 1.0;
            if (risk[i] > risk[j]) {
                concordant += 1.0;
            } else if (risk[i] == risk[j]) {
                concordant += 0.5;
            }
        }
    }
    if (comparable == 0.0) throw DataError("concordance undefined: no comparable pairs");
    return concordant / comparable;
}

std::vector<double> permutation_importance(const SurvivalForest& forest, const DesignView& x,
                                           std::span<const double> times,
                                           const std::vector<bool>& events, double t,
                                           std::uint64_t seed) {
    auto risk_of = [&](const std::vector<double>& values) {
        std::vector<double> risk(x.n_rows);
        for (std::size_t i = 0; i < x.n_rows; ++i) {
            risk[i] = 1.0 - forest.predict_survival(
                                std::span<const double>(values.data() + i * x.n_cols, x.n_cols), t);
        }
        return risk;
    };
    std::vector<double> base_values(x.values.begin(), x.values.end());
    const double base = concordance_index(times, events, risk_of(base_values));
    std::vector<double> out(x.n_cols);
    for (std::size_t j = 0; j < x.n_cols; ++j) {
        Rng rng(derive_seed(seed, j));
        std::vector<std::size_t> perm(x.n_rows);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = perm.size(); i > 1; --i) {
            std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
        }
        auto values = base_values;
        for (std::size_t i = 0; i < x.n_rows; ++i) values[i * x.n_cols + j] = x.at(perm[i], j);
        out[j] = base - concordance_index(times, events, risk_of(values));
    }
    return out;
}

}  // namespace survcate
