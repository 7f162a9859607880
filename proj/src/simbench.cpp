#include "survcate/simbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "survcate/error.hpp"
#include "survcate/io.hpp"
#include "survcate/rng.hpp"
#include "survcate/weibull.hpp"

namespace survcate::sim {

std::string_view scenario_name(Scenario s) {
    switch (s) {
        case Scenario::S1: return "S1";
        case Scenario::S2: return "S2";
        case Scenario::S3: return "S3";
    }
    return "?";
}

std::string_view design_name(Design d) {
    switch (d) {
        case Design::Rct: return "rct";
        case Design::Balanced: return "balanced";
        case Design::Unbalanced: return "unbalanced";
    }
    return "?";
}

std::string_view target_rule_name(TargetRule r) { return r == TargetRule::Median ? "median" : "p75"; }
std::string_view coding_name(BinaryCoding c) { return c == BinaryCoding::Sign ? "sign" : "zero_one"; }

Scenario parse_scenario(std::string_view s) {
    for (Scenario v : {Scenario::S1, Scenario::S2, Scenario::S3}) {
        if (scenario_name(v) == s) return v;
    }
    throw ConfigError("unknown scenario '" + std::string(s) + "' (expected S1, S2 or S3)");
}

Design parse_design(std::string_view s) {
    for (Design v : {Design::Rct, Design::Balanced, Design::Unbalanced}) {
        if (design_name(v) == s) return v;
    }
    throw ConfigError("unknown design '" + std::string(s) +
                      "' (expected rct, balanced or unbalanced)");
}

TargetRule parse_target_rule(std::string_view s) {
    if (s == "median") return TargetRule::Median;
    if (s == "p75") return TargetRule::P75;
    throw ConfigError("unknown target-time rule '" + std::string(s) + "' (expected median or p75)");
}

BinaryCoding parse_coding(std::string_view s) {
    if (s == "sign") return BinaryCoding::Sign;
    if (s == "zero_one") return BinaryCoding::ZeroOne;
    throw ConfigError("unknown binary coding '" + std::string(s) + "' (expected sign or zero_one)");
}

void ScenarioSpec::validate() const {
    if (n_train < 1 || n_test < 1) throw ConfigError("n_train and n_test must be at least 1");
    if (!(censor_rate > 0.0 && censor_rate < 1.0)) throw ConfigError("censor_rate must lie in (0, 1)");
}

CovariateSchema simulation_schema() {
    std::vector<Covariate> cov;
    for (std::size_t j = 0; j < kNumCovariates; ++j) {
        cov.push_back({"X" + std::to_string(j + 1),
                       j < 5 ? CovariateKind::Continuous : CovariateKind::Binary,
                       {}});
    }
    return CovariateSchema(std::move(cov));
}

std::vector<double> generate_covariates(std::size_t n, std::uint64_t seed, BinaryCoding coding) {
    Rng rng(seed);
    std::vector<double> x(n * kNumCovariates);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = x.data() + i * kNumCovariates;
        for (std::size_t j = 0; j < kNumCovariates; ++j) {
            const double z = standard_normal(rng);
            if (j < 5) {
                row[j] = z;
            } else if (coding == BinaryCoding::Sign) {
                row[j] = z >= 0.0 ? 1.0 : -1.0;
            } else {
                row[j] = z >= 0.0 ? 1.0 : 0.0;
            }
        }
    }
    return x;
}

double true_propensity(Design design, std::span<const double> x) {
    if (design == Design::Rct) return 0.5;
    const double core = -0.8 * x[0] + 0.5 * x[1] - 0.9 * x[2] - 0.9 * x[3] + 0.6 * x[5] +
                        0.7 * x[6] - 0.8 * x[7] - 0.9 * x[8];
    const double logit = design == Design::Balanced ? 0.15 + core : 1.2 * (-1.2 + core);
    return 1.0 / (1.0 + std::exp(-logit));
}

TreatmentDraw assign_treatment(std::span<const double> x, Design design, std::uint64_t seed) {
    const std::size_t n = x.size() / kNumCovariates;
    Rng rng(seed);
    TreatmentDraw d;
    d.treatment.resize(n);
    d.propensity.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.propensity[i] = true_propensity(design, x.subspan(i * kNumCovariates, kNumCovariates));
        d.treatment[i] = uniform01(rng) < d.propensity[i] ? 1 : 0;
    }
    return d;
}

double baseline(Scenario s, std::span<const double> x) {
    if (s == Scenario::S1) {
        return 0.25 * x[0] + 0.7 * x[2] + 0.5 * x[5] + 0.4 * x[6] + 0.3 * x[9];
    }
    return 0.35 * std::exp(x[0]) + 0.4 * x[1] * x[1] + 0.7 * std::sin(x[2]) - 0.2 * x[4] +
           0.6 * std::sin(x[5]) + 0.5 * x[6] + 0.45 * x[0] * x[7] - 0.15 * x[9];
}

double modifier(Scenario s, std::span<const double> x) {
    if (s == Scenario::S3) {
        return -0.2 * x[0] * x[0] - 0.25 * x[1] * x[2] + 0.2 * std::exp(x[4]) - 0.3 * x[6] -
               0.4 * x[2] * x[7];
    }
    return -0.1 * x[1] + 0.95 * x[4] - 0.6 * x[7];
}

double linear_predictor(Scenario s, std::span<const double> x, int arm) {
    return baseline(s, x) + (arm == 1 ? modifier(s, x) : 0.0);
}

double generator_time(Scenario s, int arm, std::span<const double> x, double u) {
    const double f = linear_predictor(s, x, arm);
    return kScale[arm] * std::pow(-std::log(u) / std::exp(f), 1.0 / kShape);
}

double oracle_survival(Scenario s, int arm, std::span<const double> x, double t) {
    if (t <= 0.0) return 1.0;
    return std::exp(-std::pow(t / kScale[arm], kShape) * std::exp(linear_predictor(s, x, arm)));
}

double oracle_survival_numeric(Scenario s, int arm, std::span<const double> x, double t) {
    if (t <= 0.0) return 1.0;
    // T(u) decreases in u, so P(T > t) = P(U < u*) = u* where T(u*) = t.
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= 0.0 || generator_time(s, arm, x, mid) > t) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double oracle_cate(Scenario s, std::span<const double> x, double t) {
    return oracle_survival(s, 1, x, t) - oracle_survival(s, 0, x, t);
}

std::vector<std::size_t> predictive_set(Scenario s) {
    if (s == Scenario::S3) return {0, 1, 2, 4, 6, 7};
    return {1, 4, 7};
}

namespace {

double draw_uniform_open(Rng& rng) {
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    return u;
}

}  // namespace

SimulatedCohort simulate_cohort(const ScenarioSpec& spec, std::size_t n, double censor_rate_param,
                                std::uint64_t seed) {
    if (n < 1) throw ConfigError("cohort size must be at least 1");
    if (!(censor_rate_param > 0.0)) throw ConfigError("censoring rate must be positive");
    auto x = generate_covariates(n, derive_seed(seed, 0), spec.coding);
    auto draw = assign_treatment(x, spec.design, derive_seed(seed, 1));
    Rng rng(derive_seed(seed, 2));
    std::vector<double> t0(n), t1(n), censor(n);
    std::vector<SurvivalRecord> records(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::span<const double> xi(x.data() + i * kNumCovariates, kNumCovariates);
        t0[i] = generator_time(spec.scenario, 0, xi, draw_uniform_open(rng));
        t1[i] = generator_time(spec.scenario, 1, xi, draw_uniform_open(rng));
        censor[i] = -std::log(draw_uniform_open(rng)) / censor_rate_param;
        const int a = draw.treatment[i];
        const double ta = a == 1 ? t1[i] : t0[i];
        records[i] = {std::min(ta, censor[i]), ta < censor[i], a,
                      std::vector<double>(xi.begin(), xi.end())};
    }
    return {Cohort(simulation_schema(), std::move(records)), std::move(x),
            std::move(draw.propensity), std::move(t0), std::move(t1), std::move(censor),
            censor_rate_param};
}

double calibrate_censoring(Scenario s, Design d, double target_rate, std::uint64_t seed,
                           BinaryCoding coding) {
    if (!(target_rate >= 0.01 && target_rate <= 0.99)) {
        throw ConfigError("censoring target must lie in [0.01, 0.99]");
    }
    constexpr std::size_t probe = 100000;
    ScenarioSpec spec;
    spec.scenario = s;
    spec.design = d;
    spec.coding = coding;
    const auto x = generate_covariates(probe, derive_seed(seed, 0), coding);
    const auto draw = assign_treatment(x, d, derive_seed(seed, 1));
    Rng rng(derive_seed(seed, 2));
    std::vector<double> t(probe);
    for (std::size_t i = 0; i < probe; ++i) {
        const std::span<const double> xi(x.data() + i * kNumCovariates, kNumCovariates);
        t[i] = generator_time(s, draw.treatment[i], xi, draw_uniform_open(rng));
    }
    // Expected censored fraction given the probe's event times: mean P(C < T).
    auto fraction = [&](double rate) {
        double sum = 0.0;
        for (double ti : t) sum += -std::expm1(-rate * ti);
        return sum / static_cast<double>(probe);
    };
    double lo = std::log(1e-8), hi = std::log(1e3);
    if (fraction(std::exp(lo)) > target_rate || fraction(std::exp(hi)) < target_rate) {
        throw NumericalError("censoring calibration: target rate not bracketed");
    }
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (fraction(std::exp(mid)) < target_rate ? lo : hi) = mid;
    }
    return std::exp(0.5 * (lo + hi));
}

double target_time(std::span<const double> observed, TargetRule rule) {
    if (observed.empty()) throw DataError("target time: no observed times");
    std::vector<double> v(observed.begin(), observed.end());
    std::sort(v.begin(), v.end());
    const double q = rule == TargetRule::Median ? 0.5 : 0.75;
    auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()) - 1e-12));
    k = std::clamp<std::size_t>(k, 1, v.size());
    return v[k - 1];
}

Oracle oracle_at(Scenario s, std::span<const double> x, double t) {
    const std::size_t n = x.size() / kNumCovariates;
    Oracle o;
    o.surv0.resize(n);
    o.surv1.resize(n);
    o.tau.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = x.subspan(i * kNumCovariates, kNumCovariates);
        o.surv0[i] = oracle_survival(s, 0, xi, t);
        o.surv1[i] = oracle_survival(s, 1, xi, t);
        o.tau[i] = o.surv1[i] - o.surv0[i];
    }
    return o;
}

PredictionError evaluate_predictions(std::span<const double> tau_hat,
                                     std::span<const double> tau_true, std::size_t bins) {
    if (tau_hat.size() != tau_true.size()) throw DataError("prediction and truth lengths differ");
    if (tau_hat.empty()) throw DataError("no predictions to evaluate");
    if (bins < 1) throw ConfigError("bin count must be at least 1");
    const std::size_t n = tau_hat.size();
    PredictionError e;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += tau_hat[i] - tau_true[i];
    e.bias = s / static_cast<double>(n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return tau_true[a] < tau_true[b]; });
    const std::size_t q = std::min(bins, n);
    const std::size_t base = n / q, extra = n % q;
    std::size_t pos = 0;
    double total = 0.0;
    for (std::size_t b = 0; b < q; ++b) {
        const std::size_t size = base + (b < extra ? 1 : 0);
        double sq = 0.0;
        for (std::size_t k = pos; k < pos + size; ++k) {
            const double d = tau_hat[order[k]] - tau_true[order[k]];
            sq += d * d;
        }
        total += std::sqrt(sq / static_cast<double>(size));
        pos += size;
    }
    e.binned_rmse = total / static_cast<double>(q);
    return e;
}

ClassificationMetrics classification_metrics(std::span<const double> tau_hat,
                                             std::span<const double> tau_true) {
    if (tau_hat.size() != tau_true.size()) throw DataError("prediction and truth lengths differ");
    ClassificationMetrics m;
    for (std::size_t i = 0; i < tau_hat.size(); ++i) {
        const bool pred = tau_hat[i] > 0.0, truth = tau_true[i] > 0.0;
        if (pred && truth) ++m.tp;
        else if (pred) ++m.fp;
        else if (truth) ++m.fn;
        else ++m.tn;
    }
    auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    m.acc = ratio(m.tp + m.tn, m.tp + m.tn + m.fp + m.fn);
    m.ppv = ratio(m.tp, m.tp + m.fp);
    m.npv = ratio(m.tn, m.tn + m.fn);
    m.sensitivity = ratio(m.tp, m.tp + m.fn);
    m.specificity = ratio(m.tn, m.tn + m.fp);
    if (m.ppv && m.sensitivity) {
        m.f_score = (*m.ppv == 0.0 || *m.sensitivity == 0.0)
                        ? 0.0
                        : 2.0 / (1.0 / *m.ppv + 1.0 / *m.sensitivity);
    }
    return m;
}

std::vector<std::string> all_bench_learners() {
    std::vector<std::string> out;
    for (LearnerKind k : kAllLearners) out.emplace_back(learner_name(k));
    out.emplace_back("Weibull");
    out.emplace_back("Oracle");
    return out;
}

std::optional<double> metric_value(const ReplicateMetrics& r, std::string_view metric) {
    if (!r.error.empty()) return std::nullopt;
    if (metric == "bias") return r.error_metrics.bias;
    if (metric == "binned_rmse") return r.error_metrics.binned_rmse;
    if (metric == "acc") return r.classification.acc;
    if (metric == "ppv") return r.classification.ppv;
    if (metric == "npv") return r.classification.npv;
    if (metric == "sensitivity") return r.classification.sensitivity;
    if (metric == "specificity") return r.classification.specificity;
    if (metric == "f_score") return r.classification.f_score;
    if (metric == "attribution_score") return r.attribution;
    if (metric == "runtime_seconds") return r.runtime_seconds;
    throw ConfigError("unknown metric '" + std::string(metric) + "'");
}

std::optional<double> MetricReport::value(const std::string& learner, std::size_t rep,
                                          const std::string& metric) const {
    for (const auto& r : replicates) {
        if (r.rep == rep && r.learner == learner) return metric_value(r, metric);
    }
    return std::nullopt;
}

namespace {

struct Replicate {
    SimulatedCohort train;
    SimulatedCohort test;
    double t_star;
    Oracle truth;
};

using BatchFn = std::function<void(std::span<const double>, std::span<double>)>;

std::optional<double> attribution_for(const BenchConfig& cfg, const Replicate& rep,
                                      const CateModel* model, const BatchFn& generic,
                                      std::uint64_t seed) {
    if (cfg.shap_subjects == 0) return std::nullopt;
    const std::size_t p = kNumCovariates;
    const auto bg_rows = sample_rows(rep.train.cohort.size(), cfg.shap_background,
                                     derive_seed(seed, 0));
    const auto subj_rows = sample_rows(rep.test.cohort.size(), cfg.shap_subjects,
                                       derive_seed(seed, 1));
    ShapConfig sc;
    sc.background = gather_rows(rep.train.x, p, bg_rows);
    sc.exact_threshold = cfg.shap_exact_threshold;
    sc.coalition_budget = cfg.shap_budget;
    sc.seed = derive_seed(seed, 2);
    const auto subjects = gather_rows(rep.test.x, p, subj_rows);
    const ShapMatrix shap = model != nullptr ? kernel_shap(*model, subjects, sc)
                                             : kernel_shap(generic, p, subjects, sc);
    const auto set = predictive_set(cfg.spec.scenario);
    try {
        return attribution_score(shap, set).score;
    } catch (const DataError&) {
        return std::nullopt;  // every attribution zero, e.g. a constant model
    }
}

void fill_metrics(ReplicateMetrics& m, const BenchConfig& cfg, std::span<const double> tau_hat,
                  const Oracle& truth) {
    m.error_metrics = evaluate_predictions(tau_hat, truth.tau, cfg.bins);
    m.classification = classification_metrics(tau_hat, truth.tau);
}

AggregateMetric aggregate(std::vector<double> values, std::size_t n_undefined) {
    AggregateMetric a;
    a.n = values.size();
    a.n_undefined = n_undefined;
    if (values.empty()) return a;
    std::sort(values.begin(), values.end());
    double s = 0.0;
    for (double v : values) s += v;
    a.mean = s / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return a;
}

}  // namespace

MetricReport run_benchmark(const BenchConfig& config) {
    config.spec.validate();
    if (config.reps < 1) throw ConfigError("reps must be at least 1");
    std::vector<LearnerKind> meta;
    for (const auto& name : config.learners) {
        if (auto k = parse_learner(name)) {
            meta.push_back(*k);
        } else if (name != "Weibull" && name != "Oracle") {
            throw ConfigError("unknown benchmark learner '" + name + "'");
        }
    }
    MetricReport report;
    report.config = config;
    const ScenarioSpec& spec = config.spec;
    report.censor_rate_param = calibrate_censoring(spec.scenario, spec.design, spec.censor_rate,
                                                   derive_seed(spec.seed, 0xCA11B), spec.coding);
    const std::size_t p = kNumCovariates;
    using clock = std::chrono::steady_clock;

    for (std::size_t rep = 0; rep < config.reps; ++rep) {
        const std::uint64_t rep_seed = derive_seed(spec.seed, rep);
        Replicate r{simulate_cohort(spec, spec.n_train, report.censor_rate_param,
                                    derive_seed(rep_seed, 0)),
                    simulate_cohort(spec, spec.n_test, report.censor_rate_param,
                                    derive_seed(rep_seed, 1)),
                    0.0, {}};
        r.t_star = target_time(r.train.cohort.times(), spec.target_rule);
        r.truth = oracle_at(spec.scenario, r.test.x, r.t_star);
        const TargetTime t(r.t_star);

        // One bundle serves every meta-learner; the component seeds do not depend on which
        // quantities are requested, so each learner sees what a standalone fit would.
        std::optional<NuisanceFit> nuisance;
        std::string nuisance_error;
        double nuisance_seconds = 0.0;
        if (!meta.empty()) {
            const auto start = clock::now();
            try {
                NuisanceConfig nc = config.learner.nuisance;
                nc.seed = derive_seed(derive_seed(rep_seed, 2), 1);
                nuisance = build_nuisance_bundle(r.train.cohort, t, nc, {true, true, true});
            } catch (const std::exception& e) {
                nuisance_error = e.what();
            }
            nuisance_seconds = std::chrono::duration<double>(clock::now() - start).count();
        }
        const auto view = complete_case_view(r.train.cohort, t);

        for (std::size_t li = 0; li < config.learners.size(); ++li) {
            const std::string& name = config.learners[li];
            ReplicateMetrics m;
            m.rep = rep;
            m.learner = name;
            m.t_star = r.t_star;
            const std::uint64_t shap_seed = derive_seed(derive_seed(rep_seed, 3), li);
            const auto start = clock::now();
            try {
                std::vector<double> tau_hat(spec.n_test);
                if (name == "Oracle") {
                    tau_hat = r.truth.tau;
                    const Scenario s = spec.scenario;
                    const double ts = r.t_star;
                    fill_metrics(m, config, tau_hat, r.truth);
                    m.attribution = attribution_for(
                        config, r, nullptr,
                        [s, ts, p](std::span<const double> rows, std::span<double> out) {
                            for (std::size_t i = 0; i < out.size(); ++i) {
                                out[i] = oracle_cate(s, rows.subspan(i * p, p), ts);
                            }
                        },
                        shap_seed);
                } else if (name == "Weibull") {
                    const auto& c = r.train.cohort;
                    WeibullAftModel arm_model[2];
                    for (int a = 0; a <= 1; ++a) {
                        std::vector<double> xs, ts;
                        std::vector<bool> ev;
                        for (std::size_t i = 0; i < c.size(); ++i) {
                            if (c[i].treatment != a) continue;
                            xs.insert(xs.end(), c[i].x.begin(), c[i].x.end());
                            ts.push_back(c[i].time);
                            ev.push_back(c[i].event);
                        }
                        arm_model[a] = fit_weibull_aft(xs, p, ts, ev).model;
                    }
                    const double ts = r.t_star;
                    BatchFn f = [&arm_model, ts, p](std::span<const double> rows,
                                                    std::span<double> out) {
                        for (std::size_t i = 0; i < out.size(); ++i) {
                            const auto xi = rows.subspan(i * p, p);
                            out[i] = arm_model[1].survival(xi, ts) - arm_model[0].survival(xi, ts);
                        }
                    };
                    f(r.test.x, tau_hat);
                    fill_metrics(m, config, tau_hat, r.truth);
                    m.attribution = attribution_for(config, r, nullptr, f, shap_seed);
                } else {
                    if (!nuisance) throw DataError(nuisance_error);
                    const LearnerKind kind = *parse_learner(name);
                    const auto pseudo = build_pseudo_outcomes(nuisance->bundle, view, kind,
                                                              config.learner.r_epsilon);
                    const PropensityForest* prop =
                        nuisance->models.propensity ? &*nuisance->models.propensity : nullptr;
                    const CateModel model = fit_cate(r.train.cohort, t, pseudo,
                                                     config.learner.regressor,
                                                     derive_seed(derive_seed(rep_seed, 2), 2), prop);
                    for (std::size_t i = 0; i < spec.n_test; ++i) {
                        tau_hat[i] = model.predict(r.test.cohort[i].x);
                    }
                    fill_metrics(m, config, tau_hat, r.truth);
                    m.attribution = attribution_for(config, r, &model, {}, shap_seed);
                }
            } catch (const std::exception& e) {
                m.error = e.what();
                if (m.error.empty()) m.error = "failed";
            }
            m.runtime_seconds = std::chrono::duration<double>(clock::now() - start).count();
            if (parse_learner(name)) m.runtime_seconds += nuisance_seconds;
            report.replicates.push_back(std::move(m));
        }
    }

    for (const auto& name : config.learners) {
        auto& block = report.aggregate[name];
        std::vector<std::string> metrics(std::begin(kMetricNames), std::end(kMetricNames));
        if (config.record_runtime) metrics.emplace_back("runtime_seconds");
        for (const auto& metric : metrics) {
            std::vector<double> vals;
            std::size_t undefined = 0;
            for (const auto& r : report.replicates) {
                if (r.learner != name) continue;
                if (auto v = metric_value(r, metric)) {
                    vals.push_back(*v);
                } else {
                    ++undefined;
                }
            }
            block[metric] = aggregate(std::move(vals), undefined);
        }
    }
    return report;
}

void write_replicates_csv(std::ostream& out, const MetricReport& report) {
    out << "rep,learner,status,t_star";
    for (const char* m : kMetricNames) out << ',' << m;
    out << ",tp,fp,tn,fn";
    if (report.config.record_runtime) out << ",runtime_seconds";
    out << '\n';
    for (const auto& r : report.replicates) {
        out << r.rep << ',' << r.learner << ',' << (r.error.empty() ? "ok" : "failed") << ','
            << io::format_double(r.t_star);
        for (const char* m : kMetricNames) {
            const auto v = metric_value(r, m);
            out << ',' << (v ? io::format_double(*v) : "NA");
        }
        out << ',' << r.classification.tp << ',' << r.classification.fp << ','
            << r.classification.tn << ',' << r.classification.fn;
        if (report.config.record_runtime) out << ',' << io::format_double(r.runtime_seconds);
        out << '\n';
    }
}

nlohmann::json aggregate_json(const MetricReport& report) {
    const auto& spec = report.config.spec;
    nlohmann::json learners = nlohmann::json::object();
    for (const auto& [name, block] : report.aggregate) {
        nlohmann::json metrics = nlohmann::json::object();
        for (const auto& [metric, a] : block) {
            metrics[metric] = {{"mean", a.n ? nlohmann::json(a.mean) : nlohmann::json(nullptr)},
                               {"sd", a.n > 1 ? nlohmann::json(a.sd) : nlohmann::json(nullptr)},
                               {"n", a.n},
                               {"n_undefined", a.n_undefined}};
        }
        std::size_t failures = 0;
        nlohmann::json errors = nlohmann::json::array();
        for (const auto& r : report.replicates) {
            if (r.learner == name && !r.error.empty()) {
                ++failures;
                errors.push_back({{"rep", r.rep}, {"error", r.error}});
            }
        }
        learners[name] = {{"metrics", std::move(metrics)},
                          {"failures", failures},
                          {"errors", std::move(errors)}};
    }
    return {{"scenario", scenario_name(spec.scenario)},
            {"design", design_name(spec.design)},
            {"n_train", spec.n_train},
            {"n_test", spec.n_test},
            {"target_rule", target_rule_name(spec.target_rule)},
            {"censor_target", spec.censor_rate},
            {"censor_rate_param", report.censor_rate_param},
            {"binary_coding", coding_name(spec.coding)},
            {"reps", report.config.reps},
            {"seed", spec.seed},
            {"learners", std::move(learners)}};
}

void write_plot_table_csv(std::ostream& out, const MetricReport& report) {
    const auto& spec = report.config.spec;
    out << "scenario,design,learner,rep,metric,value\n";
    for (const auto& r : report.replicates) {
        for (const char* m : {"bias", "binned_rmse", "attribution_score"}) {
            const auto v = metric_value(r, m);
            out << scenario_name(spec.scenario) << ',' << design_name(spec.design) << ','
                << r.learner << ',' << r.rep << ',' << m << ','
                << (v ? io::format_double(*v) : "NA") << '\n';
        }
    }
}

}  // namespace survcate::sim
