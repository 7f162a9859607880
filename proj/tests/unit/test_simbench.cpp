#include <doctest.h>

#include <cmath>
#include <sstream>

#include "survcate/error.hpp"
#include "survcate/simbench.hpp"

using namespace survcate;
using namespace survcate::sim;

namespace {

std::span<const double> row_of(const std::vector<double>& x, std::size_t i) {
    return std::span<const double>(x).subspan(i * kNumCovariates, kNumCovariates);
}

}  // namespace

TEST_CASE("names parse and reject") {
    CHECK(parse_scenario("S2") == Scenario::S2);
    CHECK(parse_design(design_name(Design::Unbalanced)) == Design::Unbalanced);
    CHECK(parse_target_rule("p75") == TargetRule::P75);
    CHECK(parse_coding("zero_one") == BinaryCoding::ZeroOne);
    CHECK_THROWS_AS(parse_scenario("S4"), ConfigError);
    CHECK_THROWS_AS(parse_design("cluster"), ConfigError);
    ScenarioSpec spec;
    spec.censor_rate = 1.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("covariate moments") {
    const std::size_t n = 100000;
    const auto x = generate_covariates(n, 3);
    for (std::size_t j = 0; j < 5; ++j) {
        double m = 0.0, v = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += x[i * 10 + j];
        m /= n;
        for (std::size_t i = 0; i < n; ++i) v += (x[i * 10 + j] - m) * (x[i * 10 + j] - m);
        const double sd = std::sqrt(v / (n - 1));
        CHECK(std::abs(m) < 0.02);
        CHECK(std::abs(sd - 1.0) < 0.02);
    }
    for (std::size_t j = 5; j < 10; ++j) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = x[i * 10 + j];
            REQUIRE((v == 1.0 || v == -1.0));
            pos += v == 1.0;
        }
        CHECK(std::abs(static_cast<double>(pos) / n - 0.5) < 0.01);
    }
    CHECK(generate_covariates(50, 3) == generate_covariates(50, 3));
    const auto z = generate_covariates(50, 3, BinaryCoding::ZeroOne);
    for (std::size_t i = 0; i < 50; ++i) CHECK((z[i * 10 + 7] == 0.0 || z[i * 10 + 7] == 1.0));
}

TEST_CASE("treatment fractions") {
    const std::size_t n = 100000;
    const auto x = generate_covariates(n, 4);
    auto fraction = [&](Design d) {
        const auto draw = assign_treatment(x, d, 5);
        double s = 0.0;
        for (int a : draw.treatment) s += a;
        return s / n;
    };
    CHECK(std::abs(fraction(Design::Rct) - 0.5) < 0.01);
    CHECK(std::abs(fraction(Design::Balanced) - 0.5) < 0.03);
    // Monte Carlo mean of expit of the unbalanced logit, written out independently.
    double expected = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = x.data() + i * 10;
        const double core = -0.8 * r[0] + 0.5 * r[1] - 0.9 * r[2] - 0.9 * r[3] + 0.6 * r[5] +
                            0.7 * r[6] - 0.8 * r[7] - 0.9 * r[8];
        expected += 1.0 / (1.0 + std::exp(-1.2 * (-1.2 + core)));
    }
    expected /= n;
    CHECK(std::abs(fraction(Design::Unbalanced) - expected) < 0.01);
    CHECK(true_propensity(Design::Rct, row_of(x, 0)) == 0.5);
}

TEST_CASE("closed-form survival") {
    const std::vector<double> zero(10, 0.0);
    // With x = 0 every scenario's linear predictor is checked before relying on f = 0.
    for (Scenario s : {Scenario::S1, Scenario::S2, Scenario::S3}) {
        for (int a : {0, 1}) {
            const double f = linear_predictor(s, zero, a);
            CHECK(oracle_survival(s, a, zero, kScale[a]) == doctest::Approx(std::exp(-std::exp(f))));
        }
    }
    const auto x = generate_covariates(20, 6);
    for (Scenario s : {Scenario::S1, Scenario::S2, Scenario::S3}) {
        for (std::size_t i = 0; i < 20; ++i) {
            for (double t : {3.0, 10.0, 25.0}) {
                const double tau = oracle_cate(s, row_of(x, i), t);
                const double numeric = oracle_survival_numeric(s, 1, row_of(x, i), t) -
                                       oracle_survival_numeric(s, 0, row_of(x, i), t);
                CHECK(std::abs(tau - numeric) < 1e-6);
            }
        }
    }
}

TEST_CASE("Monte Carlo survival at a fixed covariate vector") {
    const auto x = generate_covariates(1, 7);
    const std::size_t n = 100000;
    std::vector<double> u(n);
    for (std::size_t k = 0; k < n; ++k) u[k] = (static_cast<double>(k) + 0.5) / n;
    // Stratified uniforms give a low-noise check; a random stream is used in the acceptance suite.
    for (int a : {0, 1}) {
        for (double t : {5.0, 12.0, 20.0}) {
            std::size_t alive = 0;
            for (double v : u) alive += generator_time(Scenario::S2, a, row_of(x, 0), v) > t;
            CHECK(std::abs(static_cast<double>(alive) / n - oracle_survival(Scenario::S2, a, row_of(x, 0), t)) < 0.01);
        }
    }
}

TEST_CASE("simulated cohorts are consistent and seeded") {
    ScenarioSpec spec;
    spec.scenario = Scenario::S3;
    spec.design = Design::Balanced;
    const auto a = simulate_cohort(spec, 300, 0.03, 9);
    const auto b = simulate_cohort(spec, 300, 0.03, 9);
    CHECK(a.cohort == b.cohort);
    CHECK(a.t0 == b.t0);
    for (std::size_t i = 0; i < 300; ++i) {
        const auto& r = a.cohort[i];
        const double ta = r.treatment == 1 ? a.t1[i] : a.t0[i];
        CHECK(r.time == std::min(ta, a.censor[i]));
        CHECK(r.event == (ta < a.censor[i]));
        CHECK(a.propensity[i] == true_propensity(spec.design, row_of(a.x, i)));
    }
    CHECK(!(simulate_cohort(spec, 300, 0.03, 10).cohort == a.cohort));
}

TEST_CASE("censoring calibration") {
    const double r20 = calibrate_censoring(Scenario::S1, Design::Rct, 0.2, 1);
    const double r30 = calibrate_censoring(Scenario::S1, Design::Rct, 0.3, 1);
    const double r40 = calibrate_censoring(Scenario::S1, Design::Rct, 0.4, 1);
    CHECK(r20 < r30);
    CHECK(r30 < r40);
    ScenarioSpec spec;
    const auto fresh = simulate_cohort(spec, 100000, r30, 77);
    std::size_t censored = 0;
    for (const auto& r : fresh.cohort.records()) censored += !r.event;
    CHECK(std::abs(static_cast<double>(censored) / 100000.0 - 0.3) < 0.01);
    CHECK_THROWS_AS(calibrate_censoring(Scenario::S1, Design::Rct, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(calibrate_censoring(Scenario::S1, Design::Rct, 0.005, 1), ConfigError);
}

TEST_CASE("target time rules") {
    const std::vector<double> u{5, 1, 4, 2, 3, 6};
    CHECK(target_time(u, TargetRule::Median) == 3.0);
    CHECK(target_time(u, TargetRule::P75) == 5.0);
    CHECK_THROWS_AS(target_time(std::vector<double>{}, TargetRule::Median), DataError);
}

TEST_CASE("prediction error examples") {
    const std::vector<double> truth{0.3, -0.1, 0.2, 0.05, -0.4, 0.0, 0.15};
    auto e = evaluate_predictions(truth, truth);
    CHECK(e.bias == 0.0);
    CHECK(e.binned_rmse == 0.0);
    std::vector<double> shifted = truth;
    for (double& v : shifted) v += 0.1;
    e = evaluate_predictions(shifted, truth, 3);
    CHECK(e.bias == doctest::Approx(0.1));
    CHECK(e.binned_rmse == doctest::Approx(0.1));

    std::vector<double> noisy{0.5, -0.1, 0.0, 0.05, -0.2, 0.3, 0.15};
    double sq = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) sq += (noisy[i] - truth[i]) * (noisy[i] - truth[i]);
    CHECK(evaluate_predictions(noisy, truth, 1).binned_rmse == doctest::Approx(std::sqrt(sq / 7)));

    // Bins of the truth ranking (sizes 3, 2, 2): {-0.4,-0.1,0.0}, {0.05,0.15}, {0.2,0.3}.
    const double b1 = std::sqrt((0.2 * 0.2 + 0.0 + 0.0 * 0.0 + 0.3 * 0.3) / 3.0);
    const double b2 = std::sqrt((0.0 + 0.0) / 2.0);
    const double b3 = std::sqrt((0.2 * 0.2 + 0.2 * 0.2) / 2.0);
    CHECK(evaluate_predictions(noisy, truth, 3).binned_rmse == doctest::Approx((b1 + b2 + b3) / 3.0));
    CHECK(evaluate_predictions(noisy, truth, 50).binned_rmse > 0.0);
    CHECK_THROWS(evaluate_predictions(noisy, std::vector<double>{0.1}, 3));
}

TEST_CASE("classification examples") {
    auto m = classification_metrics(std::vector<double>{0.2, -0.1, 0.3, -0.5},
                                    std::vector<double>{0.1, -0.2, 0.4, 0.0});
    CHECK(*m.acc == 1.0);
    CHECK(*m.ppv == 1.0);
    CHECK(*m.npv == 1.0);
    CHECK(*m.f_score == 1.0);

    m = classification_metrics(std::vector<double>{0.1, 0.2, 0.3, 0.4},
                               std::vector<double>{0.1, -0.2, 0.3, -0.4});
    CHECK(*m.sensitivity == 1.0);
    CHECK(*m.specificity == 0.0);
    CHECK(*m.acc == 0.5);
    CHECK(!m.npv);

    m = classification_metrics(std::vector<double>{0.1, 0.1, -0.1, -0.1},
                               std::vector<double>{0.1, -0.1, -0.1, 0.1});
    CHECK(m.tp == 1);
    CHECK(m.fp == 1);
    CHECK(m.tn == 1);
    CHECK(m.fn == 1);
    for (const auto& r : {m.acc, m.ppv, m.npv, m.sensitivity, m.specificity, m.f_score}) {
        CHECK(*r == 0.5);
    }
}

namespace {

BenchConfig small_bench(std::vector<std::string> learners) {
    BenchConfig c;
    c.spec.n_train = 500;
    c.spec.n_test = 400;
    c.spec.seed = 3;
    c.learners = std::move(learners);
    c.reps = 1;
    c.learner.nuisance.survival_forest.n_trees = 40;
    c.learner.nuisance.propensity_forest.n_trees = 40;
    c.learner.regressor.forest.n_trees = 40;
    c.shap_subjects = 10;
    c.shap_background = 20;
    return c;
}

}  // namespace

TEST_CASE("oracle learner plumbing") {
    const auto report = run_benchmark(small_bench({"Oracle"}));
    REQUIRE(report.replicates.size() == 1);
    const auto& r = report.replicates[0];
    CHECK(r.error.empty());
    CHECK(r.error_metrics.bias == 0.0);
    CHECK(r.error_metrics.binned_rmse == 0.0);
    for (const auto& v : {r.classification.acc, r.classification.ppv, r.classification.npv,
                          r.classification.sensitivity, r.classification.specificity,
                          r.classification.f_score}) {
        if (v) CHECK(*v == 1.0);
    }
    CHECK(r.classification.acc);
}

TEST_CASE("benchmark smoke run and determinism") {
    const auto cfg = small_bench({"R", "Weibull"});
    const auto a = run_benchmark(cfg);
    REQUIRE(a.replicates.size() == 2);
    for (const auto& r : a.replicates) {
        INFO(r.learner << ": " << r.error);
        CHECK(r.error.empty());
        CHECK(std::isfinite(r.error_metrics.bias));
        CHECK(std::isfinite(r.error_metrics.binned_rmse));
        CHECK(r.t_star > 0.0);
    }
    CHECK(a.value("R", 0, "attribution_score"));
    CHECK(a.aggregate.at("R").at("bias").n == 1);

    const auto b = run_benchmark(cfg);
    std::ostringstream sa, sb, pa, pb;
    write_replicates_csv(sa, a);
    write_replicates_csv(sb, b);
    write_plot_table_csv(pa, a);
    write_plot_table_csv(pb, b);
    CHECK(sa.str() == sb.str());
    CHECK(pa.str() == pb.str());
    CHECK(aggregate_json(a).dump() == aggregate_json(b).dump());
    CHECK(pa.str().rfind("scenario,design,learner,rep,metric,value\n", 0) == 0);

    auto bad = cfg;
    bad.learners = {"Q"};
    CHECK_THROWS_AS(run_benchmark(bad), ConfigError);
}
