#include "survcate/interpret.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include "survcate/error.hpp"
#include "survcate/io.hpp"
#include "survcate/kernels.hpp"
#include "survcate/parallel.hpp"
#include "survcate/rng.hpp"

namespace survcate {

namespace {

constexpr std::size_t kMaxTraversalWidth = 12;

struct Coalition {
    std::uint64_t mask;
    double weight;
};

double binomial(std::size_t n, std::size_t k) {
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) {
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    }
    return r;
}

std::vector<Coalition> all_coalitions(std::size_t p) {
    std::vector<Coalition> out;
    const std::uint64_t full = (std::uint64_t{1} << p) - 1;
    out.reserve(full - 1);
    for (std::uint64_t m = 1; m < full; ++m) {
        const auto s = static_cast<std::size_t>(std::popcount(m));
        const double k = static_cast<double>(p - 1) /
                         (binomial(p, s) * static_cast<double>(s) * static_cast<double>(p - s));
        out.push_back({m, k});
    }
    return out;
}

// Paired sampling with coalition sizes drawn in proportion to their total kernel mass.
std::vector<Coalition> sampled_coalitions(std::size_t p, std::size_t budget, Rng& rng) {
    std::vector<double> size_cdf(p - 1);
    double total = 0.0;
    for (std::size_t s = 1; s < p; ++s) {
        total += static_cast<double>(p - 1) / (static_cast<double>(s) * static_cast<double>(p - s));
        size_cdf[s - 1] = total;
    }
    const std::uint64_t full = (std::uint64_t{1} << p) - 1;
    std::map<std::uint64_t, double> counts;
    std::vector<std::size_t> perm(p);
    const std::size_t max_draws = 64 * budget;
    for (std::size_t draw = 0; draw < max_draws && counts.size() + 2 <= budget; ++draw) {
        const double u = uniform01(rng) * total;
        const std::size_t s =
            static_cast<std::size_t>(std::upper_bound(size_cdf.begin(), size_cdf.end(), u) -
                                     size_cdf.begin()) + 1;
        for (std::size_t j = 0; j < p; ++j) perm[j] = j;
        std::uint64_t m = 0;
        for (std::size_t j = 0; j < std::min(s, p - 1); ++j) {
            std::swap(perm[j], perm[j + uniform_index(rng, p - j)]);
            m |= std::uint64_t{1} << perm[j];
        }
        counts[m] += 1.0;
        counts[full & ~m] += 1.0;
    }
    std::vector<Coalition> out;
    for (const auto& [m, c] : counts) out.push_back({m, c});
    return out;
}

// Weighted least squares for phi with phi_0 = v(empty) and sum(phi) = v(full) - v(empty)
// enforced by eliminating the last player.
std::vector<double> solve_shapley(std::size_t p, const std::vector<Coalition>& coalitions,
                                  std::span<const double> values, double v_empty,
                                  double v_full) {
    const double delta = v_full - v_empty;
    if (p == 1) return {delta};
    const auto q = static_cast<Eigen::Index>(p - 1);
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(q, q);
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(q);
    Eigen::VectorXd z(q);
    const std::uint64_t last = std::uint64_t{1} << (p - 1);
    for (std::size_t k = 0; k < coalitions.size(); ++k) {
        const std::uint64_t m = coalitions[k].mask;
        const double zl = (m & last) ? 1.0 : 0.0;
        for (Eigen::Index j = 0; j < q; ++j) z[j] = (((m >> j) & 1U) ? 1.0 : 0.0) - zl;
        const double target = values[k] - v_empty - zl * delta;
        const double w = coalitions[k].weight;
        ata.selfadjointView<Eigen::Lower>().rankUpdate(z, w);
        atb.noalias() += (w * target) * z;
    }
    ata.triangularView<Eigen::StrictlyUpper>() = ata.transpose();
    const Eigen::VectorXd sol = ata.ldlt().solve(atb);
    if (!sol.allFinite()) throw NumericalError("KernelSHAP regression is singular");
    std::vector<double> phi(p);
    double rest = 0.0;
    for (Eigen::Index j = 0; j < q; ++j) {
        phi[static_cast<std::size_t>(j)] = sol[j];
        rest += sol[j];
    }
    phi[p - 1] = delta - rest;
    return phi;
}

// With every coalition available the regression solution equals the subset-sum formula
// phi_j = sum_S |S|! (p - |S| - 1)! / p! (v(S + j) - v(S)), which is evaluated directly so that
// a player with no marginal effect gets exactly zero. `table` is indexed by mask.
std::vector<double> exact_shapley(std::size_t p, std::span<const double> table) {
    std::vector<double> weight(p);
    for (std::size_t s = 0; s < p; ++s) {
        weight[s] = 1.0 / (static_cast<double>(p) * binomial(p - 1, s));
    }
    const std::uint64_t count = std::uint64_t{1} << p;
    std::vector<double> phi(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        const std::uint64_t bit = std::uint64_t{1} << j;
        double sum = 0.0;
        for (std::uint64_t m = 0; m < count; ++m) {
            if (m & bit) continue;
            const double d = table[m | bit] - table[m];
            if (d != 0.0) sum += weight[static_cast<std::size_t>(std::popcount(m))] * d;
        }
        phi[j] = sum;
    }
    return phi;
}

// Mean prediction over the background for each coalition mask (bit j: column j from x).
std::vector<double> masked_values(const BatchPredictor& predict, std::size_t p,
                                  std::span<const double> x, std::span<const double> background,
                                  std::span<const std::uint64_t> masks) {
    const std::size_t nb = background.size() / p;
    const std::size_t chunk = std::max<std::size_t>(1, 4096 / nb);
    std::vector<double> out(masks.size());
    std::vector<double> rows, preds;
    for (std::size_t start = 0; start < masks.size(); start += chunk) {
        const std::size_t end = std::min(masks.size(), start + chunk);
        rows.assign((end - start) * nb * p, 0.0);
        double* r = rows.data();
        for (std::size_t k = start; k < end; ++k) {
            for (std::size_t b = 0; b < nb; ++b, r += p) {
                for (std::size_t j = 0; j < p; ++j) {
                    r[j] = ((masks[k] >> j) & 1U) ? x[j] : background[b * p + j];
                }
            }
        }
        preds.assign((end - start) * nb, 0.0);
        predict(rows, preds);
        for (std::size_t k = start; k < end; ++k) {
            double s = 0.0;
            for (std::size_t b = 0; b < nb; ++b) s += preds[(k - start) * nb + b];
            out[k] = s / static_cast<double>(nb);
        }
    }
    return out;
}

// Coalition values of a combination of tree ensembles. For each (x, b) pair every tree is
// walked once, branching wherever x and b disagree; leaf values land in a table indexed by
// the state (untouched / from x / from b) of each disagreeing column, which is then folded
// into per-coalition values.
class TreeCoalitionEvaluator {
public:
    TreeCoalitionEvaluator(const CateModel& model, std::vector<const RegressionForest*> parts,
                           std::size_t p)
        : model_(model), parts_(std::move(parts)), p_(p) {
        pow3_.assign(p + 1, 1);
        for (std::size_t k = 1; k <= p; ++k) pow3_[k] = pow3_[k - 1] * 3;
    }

    std::vector<double> values(std::span<const double> x, std::span<const double> background) {
        const std::size_t nb = background.size() / p_;
        const std::size_t n_masks = std::size_t{1} << p_;
        std::vector<double> total(n_masks, 0.0);
        std::vector<std::int32_t> dpos(p_);
        std::vector<std::size_t> dcols;
        std::vector<std::vector<double>> part_coalitions(parts_.size());
        std::vector<double> combined, part_values(parts_.size());
        for (std::size_t b = 0; b < nb; ++b) {
            const double* bg = background.data() + b * p_;
            dcols.clear();
            for (std::size_t j = 0; j < p_; ++j) {
                dpos[j] = -1;
                if (x[j] != bg[j]) {
                    dpos[j] = static_cast<std::int32_t>(dcols.size());
                    dcols.push_back(j);
                }
            }
            const std::size_t d = dcols.size();
            for (std::size_t part = 0; part < parts_.size(); ++part) {
                table_.assign(pow3_[d], 0.0);
                state_.assign(d, 0);
                for (const auto& tree : parts_[part]->trees()) {
                    walk(tree, 0, x.data(), bg, dpos.data(), 0);
                }
                fold(d, part_coalitions[part]);
                const double scale = 1.0 / static_cast<double>(parts_[part]->trees().size());
                for (double& v : part_coalitions[part]) v *= scale;
            }
            const std::size_t nd = std::size_t{1} << d;
            combined.resize(nd);
            for (std::size_t s = 0; s < nd; ++s) {
                for (std::size_t part = 0; part < parts_.size(); ++part) {
                    part_values[part] = part_coalitions[part][s];
                }
                combined[s] = model_.combine(part_values);
            }
            for (std::size_t m = 0; m < n_masks; ++m) {
                std::size_t s = 0;
                for (std::size_t k = 0; k < d; ++k) s |= ((m >> dcols[k]) & 1U) << k;
                total[m] += combined[s];
            }
        }
        for (double& v : total) v /= static_cast<double>(nb);
        return total;
    }

private:
    void walk(const RegressionTree& tree, std::size_t node, const double* x, const double* b,
              const std::int32_t* dpos, std::size_t idx) {
        while (tree.nodes[node].feature >= 0) {
            const TreeNode& n = tree.nodes[node];
            const auto f = static_cast<std::size_t>(n.feature);
            const bool gx = x[f] <= n.threshold;
            const bool gb = b[f] <= n.threshold;
            const auto xside = static_cast<std::size_t>(gx ? n.left : n.right);
            if (gx == gb) {
                node = xside;
                continue;
            }
            const auto bside = static_cast<std::size_t>(gb ? n.left : n.right);
            const auto k = static_cast<std::size_t>(dpos[f]);
            if (state_[k] == 1) {
                node = xside;
            } else if (state_[k] == 2) {
                node = bside;
            } else {
                state_[k] = 1;
                walk(tree, xside, x, b, dpos, idx + pow3_[k]);
                state_[k] = 2;
                walk(tree, bside, x, b, dpos, idx + 2 * pow3_[k]);
                state_[k] = 0;
                return;
            }
        }
        table_[idx] += tree.leaf_values[static_cast<std::size_t>(tree.nodes[node].leaf)];
    }

    // 3^d ternary table -> 2^d coalition table; the top digit is folded first so each step
    // adds contiguous blocks.
    void fold(std::size_t d, std::vector<double>& out) {
        std::vector<double>* src = &table_;
        std::vector<double>* dst = &scratch_;
        std::size_t groups = 1;
        for (std::size_t level = d; level > 0; --level) {
            const std::size_t block = pow3_[level - 1];
            dst->resize(groups * 2 * block);
            for (std::size_t g = 0; g < groups; ++g) {
                const std::span<const double> s(src->data() + g * 3 * block, 3 * block);
                const auto free = s.subspan(0, block);
                kernels::add(free, s.subspan(2 * block, block),
                             std::span<double>(dst->data() + (2 * g) * block, block));
                kernels::add(free, s.subspan(block, block),
                             std::span<double>(dst->data() + (2 * g + 1) * block, block));
            }
            groups *= 2;
            std::swap(src, dst);
        }
        // Group index bit k now holds dimension k.
        out.assign(src->begin(), src->begin() + static_cast<std::ptrdiff_t>(groups));
    }

    const CateModel& model_;
    std::vector<const RegressionForest*> parts_;
    std::size_t p_;
    std::vector<std::size_t> pow3_;
    std::vector<double> table_, scratch_;
    std::vector<std::uint8_t> state_;
};

struct Explainer {
    const BatchPredictor& predict;
    const CateModel* model = nullptr;
    std::vector<const RegressionForest*> parts;
};

ShapMatrix explain(const Explainer& ex, std::size_t p, std::span<const double> subjects,
                   const ShapConfig& config) {
    if (p == 0) throw ConfigError("KernelSHAP needs at least one covariate");
    if (p > 62) throw ConfigError("KernelSHAP supports at most 62 covariates");
    if (config.exact_threshold > 15) throw ConfigError("exact_threshold must be at most 15");
    if (config.background.empty() || config.background.size() % p != 0) {
        throw ConfigError("KernelSHAP background must be a nonempty set of rows of width " +
                          std::to_string(p));
    }
    if (subjects.size() % p != 0) throw DataError("subject rows do not match covariate width");
    const std::size_t n = subjects.size() / p;
    const std::uint64_t full = (std::uint64_t{1} << p) - 1;

    bool exact = p <= config.exact_threshold;
    if (!exact) {
        if (config.coalition_budget < p + 2) {
            throw ConfigError("coalition_budget must be at least p + 2 = " +
                              std::to_string(p + 2));
        }
        if (p <= 20 && config.coalition_budget >= full - 1) exact = true;
    }
    const bool traverse = exact && config.tree_traversal && !ex.parts.empty() &&
                          p <= kMaxTraversalWidth;

    ShapMatrix out;
    out.n_rows = n;
    out.n_cols = p;
    out.exact = exact;
    out.values.assign(n * p, 0.0);
    out.predictions.assign(n, 0.0);
    out.subjects.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.subjects[i] = i;

    const std::uint64_t ends[2] = {0, full};
    {
        const auto v = masked_values(ex.predict, p, std::span<const double>(config.background).subspan(0, p),
                                     config.background,
                                     std::span<const std::uint64_t>(ends, 1));
        out.base_value = v[0];
    }
    ex.predict(subjects, out.predictions);

    const std::vector<Coalition> enumerated = exact ? all_coalitions(p) : std::vector<Coalition>{};
    parallel_for(n, [&](std::size_t i) {
        const auto x = subjects.subspan(i * p, p);
        std::vector<Coalition> sampled;
        if (!exact) {
            Rng rng(derive_seed(config.seed, i));
            sampled = sampled_coalitions(p, config.coalition_budget, rng);
        }
        const std::vector<Coalition>& coalitions = exact ? enumerated : sampled;
        std::vector<double> values(coalitions.size());
        double v_full = 0.0;
        double v_empty = out.base_value;
        if (traverse) {
            TreeCoalitionEvaluator eval(*ex.model, ex.parts, p);
            const auto all = eval.values(x, config.background);
            for (std::size_t k = 0; k < coalitions.size(); ++k) values[k] = all[coalitions[k].mask];
            v_full = all[full];
            v_empty = all[0];
        } else {
            std::vector<std::uint64_t> masks(coalitions.size() + 2);
            for (std::size_t k = 0; k < coalitions.size(); ++k) masks[k] = coalitions[k].mask;
            masks[coalitions.size()] = 0;
            masks.back() = full;
            auto v = masked_values(ex.predict, p, x, config.background, masks);
            v_full = v.back();
            v.pop_back();
            v_empty = v.back();
            v.pop_back();
            values = std::move(v);
        }
        std::vector<double> phi;
        if (exact) {
            // all_coalitions lists masks 1 .. full - 1 in order.
            std::vector<double> table(full + 1);
            table[0] = v_empty;
            std::copy(values.begin(), values.end(), table.begin() + 1);
            table[full] = v_full;
            phi = exact_shapley(p, table);
        } else {
            phi = solve_shapley(p, coalitions, values, out.base_value, v_full);
        }
        std::copy(phi.begin(), phi.end(), out.values.begin() + static_cast<std::ptrdiff_t>(i * p));
    });
    return out;
}

}  // namespace

std::vector<double> ShapMatrix::grouped() const {
    std::size_t n_groups = covariates.size();
    if (n_groups == 0) n_groups = groups.empty() ? n_cols : 0;
    for (std::size_t g : groups) n_groups = std::max(n_groups, g + 1);
    std::vector<double> out(n_rows * n_groups, 0.0);
    for (std::size_t i = 0; i < n_rows; ++i) {
        for (std::size_t j = 0; j < n_cols; ++j) {
            const std::size_t g = groups.empty() ? j : groups[j];
            out[i * n_groups + g] += at(i, j);
        }
    }
    return out;
}

double ShapMatrix::max_additivity_error() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < n_rows; ++i) {
        double s = base_value;
        for (std::size_t j = 0; j < n_cols; ++j) s += at(i, j);
        worst = std::max(worst, std::abs(s - predictions[i]));
    }
    return worst;
}

ShapMatrix kernel_shap(const BatchPredictor& predict, std::size_t p,
                       std::span<const double> subjects, const ShapConfig& config) {
    Explainer ex{predict, nullptr, {}};
    auto out = explain(ex, p, subjects, config);
    for (std::size_t j = 0; j < p; ++j) {
        out.columns.push_back("x" + std::to_string(j + 1));
        out.groups.push_back(j);
    }
    out.covariates = out.columns;
    return out;
}

ShapMatrix kernel_shap(const CateModel& model, std::span<const double> subjects,
                       const ShapConfig& config) {
    const std::size_t p = model.schema().design_width();
    const BatchPredictor predict = [&model, p](std::span<const double> rows,
                                               std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = model.predict_design(rows.subspan(i * p, p));
        }
    };
    Explainer ex{predict, &model, model.ensemble_parts()};
    auto out = explain(ex, p, subjects, config);
    out.columns = model.schema().design_names();
    out.groups = model.schema().design_groups();
    for (const auto& c : model.schema().covariates()) out.covariates.push_back(c.name);
    return out;
}

std::vector<std::size_t> sample_rows(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (count >= n) return idx;
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<double> gather_rows(std::span<const double> matrix, std::size_t p,
                                std::span<const std::size_t> rows) {
    std::vector<double> out;
    out.reserve(rows.size() * p);
    for (std::size_t r : rows) {
        const auto row = matrix.subspan(r * p, p);
        out.insert(out.end(), row.begin(), row.end());
    }
    return out;
}

AttributionScore attribution_score(const ShapMatrix& shap,
                                   std::span<const std::size_t> predictive_set) {
    const auto g = shap.grouped();
    const std::size_t m = shap.n_rows == 0 ? 0 : g.size() / shap.n_rows;
    if (predictive_set.empty()) throw ConfigError("predictive set must be nonempty");
    std::vector<char> in_set(m, 0);
    for (std::size_t j : predictive_set) {
        if (j >= m) throw ConfigError("predictive set index " + std::to_string(j) + " out of range");
        in_set[j] = 1;
    }
    AttributionScore out;
    out.predictive_set.assign(predictive_set.begin(), predictive_set.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < shap.n_rows; ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double a = std::abs(g[i * m + j]);
            den += a;
            if (in_set[j]) num += a;
        }
        if (den == 0.0) {
            ++out.n_zero;
            continue;
        }
        sum += num / den;
        ++out.n_used;
    }
    if (out.n_used == 0) throw DataError("every row has zero total attribution");
    out.score = sum / static_cast<double>(out.n_used);
    return out;
}

std::vector<VipEntry> vip_summary(const ShapMatrix& shap) {
    const auto g = shap.grouped();
    const std::size_t m = shap.n_rows == 0 ? 0 : g.size() / shap.n_rows;
    std::vector<VipEntry> out;
    std::vector<double> col(shap.n_rows);
    for (std::size_t j = 0; j < m; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < shap.n_rows; ++i) {
            col[i] = std::abs(g[i * m + j]);
            sum += col[i];
        }
        std::sort(col.begin(), col.end());
        const std::size_t n = col.size();
        const double median = n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
        out.push_back({j, j < shap.covariates.size() ? shap.covariates[j] : "x" + std::to_string(j + 1),
                       median, sum / static_cast<double>(n)});
    }
    std::stable_sort(out.begin(), out.end(), [](const VipEntry& a, const VipEntry& b) {
        if (a.median_abs != b.median_abs) return a.median_abs > b.median_abs;
        return a.mean_abs > b.mean_abs;
    });
    return out;
}

void write_shap_wide_csv(std::ostream& out, const ShapMatrix& shap) {
    out << "subject,base_value,prediction";
    for (const auto& c : shap.columns) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < shap.n_rows; ++i) {
        out << shap.subjects[i] << ',' << io::format_double(shap.base_value) << ','
            << io::format_double(shap.predictions[i]);
        for (std::size_t j = 0; j < shap.n_cols; ++j) out << ',' << io::format_double(shap.at(i, j));
        out << '\n';
    }
}

void write_shap_long_csv(std::ostream& out, const ShapMatrix& shap) {
    const auto g = shap.grouped();
    const std::size_t m = shap.n_rows == 0 ? 0 : g.size() / shap.n_rows;
    out << "subject,covariate,shap\n";
    for (std::size_t i = 0; i < shap.n_rows; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            out << shap.subjects[i] << ',' << shap.covariates.at(j) << ','
                << io::format_double(g[i * m + j]) << '\n';
        }
    }
}

nlohmann::json shap_summary_json(const ShapMatrix& shap) {
    nlohmann::json ranking = nlohmann::json::array();
    std::size_t rank = 1;
    for (const auto& e : vip_summary(shap)) {
        ranking.push_back({{"rank", rank++},
                           {"covariate", e.name},
                           {"median_abs_shap", e.median_abs},
                           {"mean_abs_shap", e.mean_abs}});
    }
    return {{"n_subjects", shap.n_rows},
            {"base_value", shap.base_value},
            {"exact", shap.exact},
            {"max_additivity_error", shap.max_additivity_error()},
            {"ranking", std::move(ranking)}};
}

}  // namespace survcate
