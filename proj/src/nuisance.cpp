#include "survcate/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "survcate/error.hpp"
#include "survcate/parallel.hpp"
#include "survcate/rng.hpp"

namespace survcate {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

PropensityForest PropensityForest::fit(const DesignView& x, std::span<const int> treatment,
                                       const ForestParams& params, double clip) {
    if (!(clip > 0.0 && clip < 0.5)) throw ConfigError("propensity clip must lie in (0, 0.5)");
    bool has0 = false, has1 = false;
    for (int a : treatment) (a == 1 ? has1 : has0) = true;
    if (!has0 || !has1) throw DataError("propensity model needs both treatment arms");
    std::vector<double> y(treatment.begin(), treatment.end());
    std::vector<double> w(y.size(), 1.0);
    PropensityForest out;
    out.forest_ = RegressionForest::fit(x, y, w, params);
    out.clip_ = clip;
    return out;
}

double PropensityForest::clamp(double e) const { return std::clamp(e, clip_, 1.0 - clip_); }

double PropensityForest::predict(std::span<const double> x) const {
    return clamp(forest_.predict(x));
}

std::vector<double> PropensityForest::oob_predictions() const {
    std::vector<double> out = forest_.oob_predictions();
    for (double& e : out) e = clamp(e);
    return out;
}

nlohmann::json PropensityForest::to_json() const {
    return {{"kind", "propensity_forest"}, {"clip", clip_}, {"forest", forest_.to_json()}};
}

PropensityForest PropensityForest::from_json(const nlohmann::json& j) {
    if (j.at("kind") != "propensity_forest") throw DataError("not a propensity forest");
    PropensityForest p;
    p.clip_ = j.at("clip").get<double>();
    p.forest_ = RegressionForest::from_json(j.at("forest"));
    return p;
}

double predict_survival(const SurvivalForest& model, std::span<const double> x, double t) {
    return model.predict_survival(x, t);
}

double predict_survival(const WeibullAftModel& model, std::span<const double> x, double t) {
    return model.survival(x, t);
}

double predict_survival(const KaplanMeierCurve& curve, double t) { return curve.evaluate(t); }

ForestParams default_propensity_params() {
    ForestParams p;
    p.n_trees = 500;
    p.mtry_sqrt = true;
    p.min_leaf_size = 10;
    return p;
}

nlohmann::json NuisanceDiagnostics::to_json() const {
    return {{"n", n},
            {"n_complete", n_complete},
            {"n_propensity_clipped", n_propensity_clipped},
            {"n_weight_capped", n_weight_capped},
            {"n_censoring_zero", n_censoring_zero}};
}

void apply_censoring_weights(const Cohort& cohort, const TargetTime& t,
                             const CensoringModel& censoring, double cap, NuisanceBundle& bundle) {
    if (!(cap >= 1.0)) throw ConfigError("censoring weight cap must be at least 1");
    const auto view = complete_case_view(cohort, t);
    bundle.censoring_prob.assign(cohort.size(), kNaN);
    bundle.censoring_weight.assign(cohort.size(), 0.0);
    bundle.diagnostics.n_complete = view.n_complete();
    bundle.diagnostics.n_weight_capped = 0;
    bundle.diagnostics.n_censoring_zero = 0;
    for (std::size_t i : view.indices) {
        const auto& r = cohort[i];
        const double g = censoring.probability_uncensored(censoring_min_time(r, t), r.treatment);
        bundle.censoring_prob[i] = g;
        double w = cap;
        if (g <= 0.0) {
            ++bundle.diagnostics.n_censoring_zero;
            ++bundle.diagnostics.n_weight_capped;
        } else if (1.0 / g > cap) {
            ++bundle.diagnostics.n_weight_capped;
        } else {
            w = 1.0 / g;
        }
        bundle.censoring_weight[i] = w;
    }
}

NuisanceFit build_nuisance_bundle(const Cohort& cohort, const TargetTime& t,
                                  const NuisanceConfig& config, NuisanceNeeds needs) {
    NuisanceFit fit;
    auto& bundle = fit.bundle;
    const std::size_t n = cohort.size();
    const double ts = t.value();
    bundle.t_star = ts;
    bundle.treatment = cohort.treatments();
    bundle.propensity.assign(n, kNaN);
    bundle.surv0.assign(n, kNaN);
    bundle.surv1.assign(n, kNaN);
    bundle.surv_pooled.assign(n, kNaN);
    bundle.diagnostics.n = n;

    const auto design = cohort.design_matrix();
    const auto names = cohort.schema().design_names();
    const std::size_t p = cohort.schema().design_width();
    const DesignView all{design, n, p, names};
    auto row = [&](std::size_t i) { return all.row(i); };

    if (needs.propensity) {
        auto params = config.propensity_forest;
        params.seed = derive_seed(config.seed, 0);
        auto model = PropensityForest::fit(all, bundle.treatment, params, config.propensity_clip);
        std::vector<double> raw = config.out_of_bag ? model.forest().oob_predictions()
                                                    : std::vector<double>(n);
        if (!config.out_of_bag) {
            for (std::size_t i = 0; i < n; ++i) raw[i] = model.forest().predict(row(i));
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double clipped =
                std::clamp(raw[i], config.propensity_clip, 1.0 - config.propensity_clip);
            if (clipped != raw[i]) ++bundle.diagnostics.n_propensity_clipped;
            bundle.propensity[i] = clipped;
        }
        fit.models.propensity = std::move(model);
    }

    // Fits an outcome model on `rows` and fills `out` for every subject.
    auto outcome = [&](const std::vector<std::size_t>& rows, std::uint64_t seed,
                       std::optional<SurvivalForest>& forest_slot,
                       std::optional<WeibullAftModel>& weibull_slot, std::vector<double>& out) {
        std::vector<double> xs;
        xs.reserve(rows.size() * p);
        std::vector<double> times;
        std::vector<bool> events;
        std::vector<char> in_subset(n, 0);
        for (std::size_t i : rows) {
            const auto r = row(i);
            xs.insert(xs.end(), r.begin(), r.end());
            times.push_back(cohort[i].time);
            events.push_back(cohort[i].event);
            in_subset[i] = 1;
        }
        if (config.outcome_model == OutcomeModel::Weibull) {
            auto report = fit_weibull_aft(xs, p, times, events);
            for (std::size_t i = 0; i < n; ++i) out[i] = report.model.survival(row(i), ts);
            weibull_slot = std::move(report.model);
            return;
        }
        auto params = config.survival_forest;
        params.seed = seed;
        const DesignView sub{xs, rows.size(), p, names};
        auto forest = SurvivalForest::fit(sub, times, events, params);
        parallel_for(n, [&](std::size_t i) {
            if (!in_subset[i] || !config.out_of_bag) out[i] = forest.predict_survival(row(i), ts);
        });
        if (config.out_of_bag) {
            const auto oob = forest.oob_survival(ts);
            for (std::size_t k = 0; k < rows.size(); ++k) out[rows[k]] = oob[k];
        }
        forest_slot = std::move(forest);
    };

    if (needs.arm_survival) {
        for (int arm = 0; arm <= 1; ++arm) {
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < n; ++i) {
                if (cohort[i].treatment == arm) rows.push_back(i);
            }
            if (rows.empty()) {
                throw DataError("arm " + std::to_string(arm) + " has no rows for its survival model");
            }
            outcome(rows, derive_seed(config.seed, 1 + static_cast<std::uint64_t>(arm)),
                    fit.models.surv_forest[arm], fit.models.surv_weibull[arm],
                    arm == 0 ? bundle.surv0 : bundle.surv1);
        }
    }
    if (needs.pooled_survival) {
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = i;
        outcome(rows, derive_seed(config.seed, 3), fit.models.pooled_forest,
                fit.models.pooled_weibull, bundle.surv_pooled);
    }

    fit.models.censoring = fit_censoring_model(cohort, config.stratify_censoring);
    apply_censoring_weights(cohort, t, fit.models.censoring, config.weight_cap, bundle);
    return fit;
}

}  // namespace survcate
