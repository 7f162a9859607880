#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include "survcate/error.hpp"
#include "survcate/metalearners.hpp"
#include "survcate/rng.hpp"
#include "survcate/simbench.hpp"

using namespace survcate;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Row {
    int a;
    bool survived;
    double e, s0, s1, s;
};

// Bundle plus view for hand-built rows; every row is a complete case with w^C = 1.
struct Fixture {
    NuisanceBundle bundle;
    CompleteCaseView view;
};

Fixture fixture(const std::vector<Row>& rows) {
    Fixture f;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        f.bundle.treatment.push_back(r.a);
        f.bundle.propensity.push_back(r.e);
        f.bundle.surv0.push_back(r.s0);
        f.bundle.surv1.push_back(r.s1);
        f.bundle.surv_pooled.push_back(r.s);
        f.bundle.censoring_prob.push_back(1.0);
        f.bundle.censoring_weight.push_back(1.0);
        f.view.indices.push_back(i);
        f.view.survival_indicator.push_back(r.survived);
    }
    return f;
}

// Straight-line transcription of the (Y*, w^M) table, independent of the kernels.
std::pair<double, double> reference(LearnerKind k, const Row& r) {
    const double a = r.a, i = r.survived ? 1.0 : 0.0, e = r.e;
    const double sa = r.a == 1 ? r.s1 : r.s0;
    switch (k) {
        case LearnerKind::X:
            return {r.a == 1 ? i - r.s0 : r.s1 - i, 1.0};
        case LearnerKind::M:
            return {(a - e) / (e * (1 - e)) * i, 1.0};
        case LearnerKind::DR:
            return {(a - e) / (e * (1 - e)) * (i - sa) + r.s1 - r.s0, 1.0};
        case LearnerKind::D:
            return {2 * (2 * a - 1) * i, (2 * a - 1) * (a - e) / (4 * e * (1 - e))};
        case LearnerKind::DEA:
            return {2 * (2 * a - 1) * (i - r.s), (2 * a - 1) * (a - e) / (4 * e * (1 - e))};
        case LearnerKind::R:
            return {(i - r.s) / (a - e), (a - e) * (a - e)};
    }
    return {kNaN, kNaN};
}

std::vector<Row> random_rows(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Row> rows;
    for (std::size_t k = 0; k < n; ++k) {
        Row r;
        r.a = uniform01(rng) < 0.5 ? 1 : 0;
        r.survived = uniform01(rng) < 0.5;
        r.e = 0.02 + 0.96 * uniform01(rng);
        r.s0 = uniform01(rng);
        r.s1 = uniform01(rng);
        r.s = uniform01(rng);
        rows.push_back(r);
    }
    return rows;
}

CovariateSchema one_covariate() { return CovariateSchema({{"x", CovariateKind::Continuous, {}}}); }

RegressorParams small_forest(std::size_t trees = 50) {
    RegressorParams p;
    p.forest.n_trees = trees;
    return p;
}

MetaLearnerConfig fast_config() {
    MetaLearnerConfig c;
    c.nuisance.survival_forest.n_trees = 50;
    c.nuisance.propensity_forest.n_trees = 50;
    c.regressor.forest.n_trees = 50;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("learner names round-trip") {
    for (LearnerKind k : kAllLearners) CHECK(parse_learner(learner_name(k)) == k);
    CHECK(!parse_learner("T"));
}

TEST_CASE("pseudo-outcome examples") {
    SUBCASE("M") {
        auto f = fixture({{1, true, 0.5, kNaN, kNaN, kNaN}});
        const auto p = build_pseudo_outcomes(f.bundle, f.view, LearnerKind::M);
        CHECK(p.y[0] == doctest::Approx(2.0));
        CHECK(p.w_m[0] == doctest::Approx(1.0));
    }
    SUBCASE("D") {
        auto f = fixture({{0, true, 0.25, kNaN, kNaN, kNaN}});
        const auto p = build_pseudo_outcomes(f.bundle, f.view, LearnerKind::D);
        CHECK(p.y[0] == doctest::Approx(-2.0));
        CHECK(p.w_m[0] == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("R") {
        auto f = fixture({{1, true, 0.25, kNaN, kNaN, 0.4}});
        const auto p = build_pseudo_outcomes(f.bundle, f.view, LearnerKind::R);
        CHECK(p.y[0] == doctest::Approx(0.8));
        CHECK(p.w_m[0] == doctest::Approx(0.5625));
    }
    SUBCASE("DR equals DEA at e = 0.5 with matching survival") {
        for (int a : {0, 1}) {
            for (bool surv : {false, true}) {
                const double sa = 0.35;
                auto f = fixture({{a, surv, 0.5, sa, sa, sa}});
                const auto dr = build_pseudo_outcomes(f.bundle, f.view, LearnerKind::DR);
                const auto dea = build_pseudo_outcomes(f.bundle, f.view, LearnerKind::DEA);
                CHECK(dr.y[0] == doctest::Approx(dea.y[0]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("pseudo-outcomes match an independent transcription") {
    const auto rows = random_rows(500, 17);
    auto f = fixture(rows);
    for (LearnerKind k : kAllLearners) {
        const auto p = build_pseudo_outcomes(f.bundle, f.view, k, 0.0);
        REQUIRE(p.size() == rows.size());
        for (std::size_t j = 0; j < p.size(); ++j) {
            const auto [y, w] = reference(k, rows[p.rows[j]]);
            CHECK(std::abs(p.y[j] - y) <= 1e-12 * std::max(1.0, std::abs(y)));
            CHECK(std::abs(p.w_m[j] - w) <= 1e-12 * std::max(1.0, std::abs(w)));
            CHECK(p.w_c[j] == 1.0);
            CHECK(p.arm[j] == rows[p.rows[j]].a);
        }
    }
}

TEST_CASE("D and DEA weights are positive") {
    const auto rows = random_rows(300, 3);
    auto f = fixture(rows);
    for (LearnerKind k : {LearnerKind::D, LearnerKind::DEA}) {
        const auto p = build_pseudo_outcomes(f.bundle, f.view, k);
        for (double w : p.w_m) CHECK(w > 0.0);
    }
}

TEST_CASE("R-learner loss identity and row dropping") {
    auto rows = random_rows(400, 8);
    rows.push_back({1, true, 0.995, kNaN, kNaN, 0.3});
    rows.push_back({0, false, 0.005, kNaN, kNaN, 0.3});
    auto f = fixture(rows);
    const auto p = build_pseudo_outcomes(f.bundle, f.view, LearnerKind::R);
    CHECK(p.n_dropped >= 2);
    for (std::size_t i : p.rows) CHECK(std::abs(rows[i].a - rows[i].e) >= 0.01);
    Rng rng(99);
    std::vector<double> tau(p.size());
    for (double& t : tau) t = 2.0 * uniform01(rng) - 1.0;
    const auto loss = pseudo_loss_terms(p, tau);
    for (std::size_t j = 0; j < p.size(); ++j) {
        const auto& r = rows[p.rows[j]];
        const double direct = (static_cast<double>(r.survived) - r.s) - (r.a - r.e) * tau[j];
        CHECK(std::abs(loss[j] - direct * direct) < 1e-10);
    }
}

TEST_CASE("missing nuisances are reported") {
    auto f = fixture({{1, true, kNaN, 0.2, 0.3, 0.4}, {0, false, kNaN, 0.2, 0.3, 0.4}});
    CHECK_THROWS_AS(build_pseudo_outcomes(f.bundle, f.view, LearnerKind::M), DataError);
    auto g = fixture({{1, true, 0.5, 0.2, 0.3, kNaN}, {0, false, 0.5, 0.2, 0.3, kNaN}});
    CHECK_THROWS_AS(build_pseudo_outcomes(g.bundle, g.view, LearnerKind::R), DataError);
    CHECK_NOTHROW(build_pseudo_outcomes(g.bundle, g.view, LearnerKind::DR));
    auto h = fixture({{1, true, 0.5, kNaN, 0.3, 0.4}, {0, false, 0.5, 0.2, 0.3, 0.4}});
    CHECK_THROWS_AS(build_pseudo_outcomes(h.bundle, h.view, LearnerKind::X), DataError);
}

namespace {

// Cohort with one covariate and a hand-set pseudo-outcome set over all rows.
struct CateFixture {
    Cohort cohort;
    PseudoOutcomeSet pseudo;
};

CateFixture cate_fixture(std::size_t n, const std::function<double(double)>& y_of_x,
                         std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SurvivalRecord> recs;
    PseudoOutcomeSet p;
    p.learner = LearnerKind::R;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = uniform01(rng);
        recs.push_back({1.0 + static_cast<double>(i), true, static_cast<int>(i % 2), {x}});
        p.rows.push_back(i);
        p.arm.push_back(static_cast<int>(i % 2));
        p.indicator.push_back(1.0);
        p.y.push_back(y_of_x(x));
        p.w_m.push_back(1.0);
        p.w_c.push_back(1.0);
    }
    return {Cohort(one_covariate(), recs), p};
}

}  // namespace

TEST_CASE("constant pseudo-outcomes give a constant model") {
    auto f = cate_fixture(200, [](double) { return 0.37; }, 1);
    for (auto kind : {RegressorKind::Forest, RegressorKind::Ridge}) {
        auto params = small_forest();
        params.kind = kind;
        const auto m = fit_cate(f.cohort, TargetTime(5.0), f.pseudo, params, 3);
        for (double x : {-3.0, 0.0, 0.25, 0.9, 10.0}) {
            CHECK(m.predict(std::vector<double>{x}) == doctest::Approx(0.37).epsilon(1e-9));
        }
    }
}

TEST_CASE("zero-weight rows leave the fit unchanged") {
    auto f = cate_fixture(200, [](double x) { return x > 0.5 ? 0.4 : -0.2; }, 2);
    const auto base = fit_cate(f.cohort, TargetTime(5.0), f.pseudo, small_forest(), 4);

    // Same cohort plus 50 extra rows with w^M = 0 and wild pseudo-outcomes.
    auto records = f.cohort.records();
    auto pseudo = f.pseudo;
    Rng rng(77);
    for (std::size_t k = 0; k < 50; ++k) {
        const std::size_t i = records.size();
        records.push_back({500.0 + static_cast<double>(k), true, 1, {uniform01(rng)}});
        pseudo.rows.push_back(i);
        pseudo.arm.push_back(1);
        pseudo.indicator.push_back(0.0);
        pseudo.y.push_back(100.0);
        pseudo.w_m.push_back(0.0);
        pseudo.w_c.push_back(1.0);
    }
    const Cohort extended(one_covariate(), records);
    const auto more = fit_cate(extended, TargetTime(5.0), pseudo, small_forest(), 4);
    for (double x = 0.0; x <= 1.0; x += 0.05) {
        const std::vector<double> v{x};
        CHECK(more.predict(v) == base.predict(v));
    }
}

TEST_CASE("all-zero or single-row weights are errors") {
    auto f = cate_fixture(20, [](double) { return 0.1; }, 3);
    auto zero = f.pseudo;
    std::fill(zero.w_m.begin(), zero.w_m.end(), 0.0);
    CHECK_THROWS_AS(fit_cate(f.cohort, TargetTime(5.0), zero, small_forest(), 1), DataError);
    zero.w_m[4] = 1.0;
    CHECK_THROWS_AS(fit_cate(f.cohort, TargetTime(5.0), zero, small_forest(), 1), DataError);
    PseudoOutcomeSet empty;
    CHECK_THROWS_AS(fit_cate(f.cohort, TargetTime(5.0), empty, small_forest(), 1), DataError);
}

TEST_CASE("predictions are clamped") {
    const CateModel hi(LearnerKind::R, 5.0, one_covariate(), {RidgeModel{1.2, {0.0}}}, std::nullopt);
    CHECK(hi.predict(std::vector<double>{0.3}) == 1.0);
    CHECK(hi.predict_raw(std::vector<double>{0.3}) == doctest::Approx(1.2));
    const CateModel lo(LearnerKind::R, 5.0, one_covariate(), {RidgeModel{-3.0, {0.0}}}, std::nullopt);
    CHECK(lo.predict(std::vector<double>{0.3}) == -1.0);
    CHECK_THROWS_AS(hi.predict(std::vector<double>{0.3, 1.0}), DataError);
}

TEST_CASE("appending a constant covariate leaves predictions unchanged") {
    auto f = cate_fixture(300, [](double x) { return std::sin(6.0 * x) * 0.5; }, 4);
    const auto base = fit_cate(f.cohort, TargetTime(5.0), f.pseudo, small_forest(), 9);
    std::vector<SurvivalRecord> recs = f.cohort.records();
    for (auto& r : recs) r.x.push_back(2.5);
    const CovariateSchema wide({{"x", CovariateKind::Continuous, {}},
                                {"const", CovariateKind::Continuous, {}}});
    const Cohort c(wide, recs);
    const auto widened = fit_cate(c, TargetTime(5.0), f.pseudo, small_forest(), 9);
    for (double x = -0.1; x <= 1.1; x += 0.01) {
        CHECK(widened.predict(std::vector<double>{x, 2.5}) == base.predict(std::vector<double>{x}));
    }
}

TEST_CASE("fit_metalearner end to end: X blend, serialization, determinism") {
    sim::ScenarioSpec spec;
    spec.design = sim::Design::Balanced;
    const auto sc = sim::simulate_cohort(spec, 400, 0.02, 21);
    const TargetTime t(sim::target_time(sc.cohort.times(), sim::TargetRule::Median));
    const auto cfg = fast_config();

    const auto fit = fit_metalearner(sc.cohort, t, LearnerKind::X, cfg);
    const auto& m = fit.model;
    REQUIRE(m.regressors().size() == 2);
    REQUIRE(m.propensity());
    for (std::size_t i = 0; i < 50; ++i) {
        const auto row = expand_covariates(sc.cohort.schema(), sc.cohort[i].x);
        const double t0 = std::get<RegressionForest>(m.regressors()[0]).predict(row);
        const double t1 = std::get<RegressionForest>(m.regressors()[1]).predict(row);
        const double tau = m.predict_raw(row);
        CHECK(tau >= std::min(t0, t1) - 1e-12);
        CHECK(tau <= std::max(t0, t1) + 1e-12);
        std::vector<double> parts{t0, t1, m.propensity()->forest().predict(row)};
        CHECK(m.combine(parts) == doctest::Approx(m.predict_design(row)).epsilon(1e-12));
    }

    const auto again = fit_metalearner(sc.cohort, t, LearnerKind::X, cfg);
    const auto restored = CateModel::from_json(nlohmann::json::parse(m.to_json().dump()));
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(again.model.predict(sc.cohort[i].x) == m.predict(sc.cohort[i].x));
        CHECK(restored.predict(sc.cohort[i].x) == m.predict(sc.cohort[i].x));
    }
    CHECK(restored.learner() == LearnerKind::X);
    CHECK(restored.t_star() == t.value());
    CHECK_THROWS_AS(CateModel::from_json(nlohmann::json{{"format", "other"}}), DataError);
}

TEST_CASE("stratified folds partition the rows") {
    sim::ScenarioSpec spec;
    const auto sc = sim::simulate_cohort(spec, 203, 0.05, 2);
    const auto folds = stratified_folds(sc.cohort, 5, 11);
    REQUIRE(folds.size() == 5);
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& f : folds) {
        total += f.size();
        seen.insert(f.begin(), f.end());
        CHECK(f.size() >= 40);
        CHECK(f.size() <= 41);
    }
    CHECK(total == 203);
    CHECK(seen.size() == 203);
    CHECK_THROWS_AS(stratified_folds(sc.cohort, 1, 1), ConfigError);
    CHECK_THROWS_AS(stratified_folds(sc.cohort, 204, 1), ConfigError);
}

TEST_CASE("leave-one-out cross-fitting on a toy cohort") {
    const std::vector<SurvivalRecord> recs{{1.0, true, 0, {0.1}}, {2.0, true, 0, {0.4}},
                                           {5.0, true, 0, {0.7}}, {3.0, true, 1, {0.2}},
                                           {4.0, true, 1, {0.5}}, {6.0, true, 1, {0.9}}};
    const Cohort c(one_covariate(), recs);
    const TargetTime t(3.5);
    auto cfg = fast_config();
    cfg.regressor.kind = RegressorKind::Ridge;
    const auto cf = cross_fit_cate(c, t, LearnerKind::R, 6, cfg);
    REQUIRE(cf.folds.size() == 6);
    REQUIRE(cf.models.size() == 6);
    std::set<std::size_t> held;
    for (std::size_t f = 0; f < 6; ++f) {
        REQUIRE(cf.folds[f].size() == 1);
        const std::size_t i = cf.folds[f][0];
        held.insert(i);
        // Rebuild the fold model from the five other rows.
        std::vector<std::size_t> train;
        for (std::size_t j = 0; j < 6; ++j) {
            if (j != i) train.push_back(j);
        }
        auto fold_cfg = cfg;
        fold_cfg.seed = derive_seed(cfg.seed, 100 + f);
        const auto refit = fit_metalearner(c.subset(train), t, LearnerKind::R, fold_cfg);
        CHECK(cf.tau_hat[i] == refit.model.predict(recs[i].x));
    }
    CHECK(held.size() == 6);
}

TEST_CASE("five-fold cross-fit recovers the mean effect") {
    sim::ScenarioSpec spec;
    const double rate = sim::calibrate_censoring(spec.scenario, spec.design, 0.3, 4);
    const auto sc = sim::simulate_cohort(spec, 800, rate, 31);
    const double ts = sim::target_time(sc.cohort.times(), sim::TargetRule::Median);
    auto cfg = fast_config();
    const auto cf = cross_fit_cate(sc.cohort, TargetTime(ts), LearnerKind::R, 5, cfg);
    double est = 0.0, truth = 0.0;
    const std::size_t n = sc.cohort.size();
    for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(std::isfinite(cf.tau_hat[i]));
        est += cf.tau_hat[i];
        truth += sim::oracle_cate(spec.scenario, std::span<const double>(sc.x).subspan(i * 10, 10), ts);
    }
    CHECK(std::abs(est / n - truth / n) < 0.1);
}

TEST_CASE("true nuisances recover the mean effect for every learner") {
    sim::ScenarioSpec spec;
    const double rate = sim::calibrate_censoring(spec.scenario, spec.design, 0.3, 5);
    const auto sc = sim::simulate_cohort(spec, 5000, rate, 55);
    const auto test = sim::simulate_cohort(spec, 2000, rate, 56);
    const double ts = sim::target_time(sc.cohort.times(), sim::TargetRule::Median);
    const TargetTime t(ts);
    const std::size_t n = sc.cohort.size();

    NuisanceBundle b;
    b.t_star = ts;
    b.treatment = sc.cohort.treatments();
    const auto oracle = sim::oracle_at(spec.scenario, sc.x, ts);
    b.surv0 = oracle.surv0;
    b.surv1 = oracle.surv1;
    b.propensity = sc.propensity;
    b.surv_pooled.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        b.surv_pooled[i] = b.propensity[i] * b.surv1[i] + (1.0 - b.propensity[i]) * b.surv0[i];
    }
    // Exponential censoring: G(s-) = exp(-rate s).
    const auto view = complete_case_view(sc.cohort, t);
    b.censoring_prob.assign(n, kNaN);
    b.censoring_weight.assign(n, 0.0);
    for (std::size_t i : view.indices) {
        const double g = std::exp(-rate * std::min(sc.cohort[i].time, ts));
        b.censoring_prob[i] = g;
        b.censoring_weight[i] = std::min(1.0 / g, 20.0);
    }

    std::vector<int> treat = sc.cohort.treatments();
    const auto design = sc.cohort.design_matrix();
    const auto names = sc.cohort.schema().design_names();
    ForestParams pp = default_propensity_params();
    pp.n_trees = 50;
    const auto prop = PropensityForest::fit({design, n, 10, names}, treat, pp, 0.01);

    const auto truth = sim::oracle_at(spec.scenario, test.x, ts).tau;
    for (LearnerKind k : kAllLearners) {
        const auto pseudo = build_pseudo_outcomes(b, view, k);
        const auto m = fit_cate(sc.cohort, t, pseudo, small_forest(100), 7, &prop);
        double err = 0.0;
        for (std::size_t i = 0; i < test.cohort.size(); ++i) {
            err += m.predict(test.cohort[i].x) - truth[i];
        }
        err /= static_cast<double>(test.cohort.size());
        INFO("learner " << learner_name(k) << " mean error " << err);
        CHECK(std::abs(err) < 0.03);
    }
}
