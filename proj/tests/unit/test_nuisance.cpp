#include <doctest.h>

#include <cmath>

#include "survcate/error.hpp"
#include "survcate/nuisance.hpp"
#include "survcate/simbench.hpp"

using namespace survcate;

namespace {

NuisanceConfig fast_config() {
    NuisanceConfig c;
    c.survival_forest.n_trees = 40;
    c.propensity_forest.n_trees = 40;
    return c;
}

sim::SimulatedCohort cohort_for(sim::Design design, std::size_t n, double rate, std::uint64_t seed) {
    sim::ScenarioSpec spec;
    spec.design = design;
    return sim::simulate_cohort(spec, n, rate, seed);
}

}  // namespace

TEST_CASE("no censoring gives unit weights") {
    // A vanishing censoring rate leaves every subject uncensored.
    const auto sc = cohort_for(sim::Design::Rct, 300, 1e-12, 1);
    for (const auto& r : sc.cohort.records()) REQUIRE(r.event);
    const TargetTime t(sim::target_time(sc.cohort.times(), sim::TargetRule::Median));
    const auto fit = build_nuisance_bundle(sc.cohort, t, fast_config());
    for (std::size_t i = 0; i < sc.cohort.size(); ++i) CHECK(fit.bundle.censoring_weight[i] == 1.0);
    CHECK(fit.bundle.diagnostics.n_complete == sc.cohort.size());
}

TEST_CASE("bundle values respect their ranges") {
    const double rate = sim::calibrate_censoring(sim::Scenario::S1, sim::Design::Balanced, 0.3, 2);
    const auto sc = cohort_for(sim::Design::Balanced, 400, rate, 2);
    const TargetTime t(sim::target_time(sc.cohort.times(), sim::TargetRule::Median));
    auto cfg = fast_config();
    const auto fit = build_nuisance_bundle(sc.cohort, t, cfg);
    const auto& b = fit.bundle;
    const auto view = complete_case_view(sc.cohort, t);
    std::vector<char> complete(sc.cohort.size(), 0);
    for (std::size_t i : view.indices) complete[i] = 1;
    for (std::size_t i = 0; i < sc.cohort.size(); ++i) {
        CHECK(b.propensity[i] >= cfg.propensity_clip);
        CHECK(b.propensity[i] <= 1.0 - cfg.propensity_clip);
        for (double s : {b.surv0[i], b.surv1[i], b.surv_pooled[i]}) {
            CHECK(s >= 0.0);
            CHECK(s <= 1.0);
        }
        if (complete[i]) {
            CHECK(b.censoring_weight[i] >= 1.0);
            CHECK(b.censoring_weight[i] <= cfg.weight_cap);
        } else {
            CHECK(b.censoring_weight[i] == 0.0);
        }
    }
    CHECK(b.diagnostics.n_complete == view.n_complete());
}

TEST_CASE("requested quantities only") {
    const auto sc = cohort_for(sim::Design::Rct, 200, 0.02, 3);
    const TargetTime t(10.0);
    const auto fit = build_nuisance_bundle(sc.cohort, t, fast_config(), {true, false, false});
    CHECK(std::isnan(fit.bundle.surv0[0]));
    CHECK(std::isnan(fit.bundle.surv_pooled[0]));
    CHECK(!fit.models.surv_forest[0]);
    CHECK(fit.models.propensity);
}

TEST_CASE("Weibull outcome models") {
    const auto sc = cohort_for(sim::Design::Rct, 400, 0.02, 4);
    const TargetTime t(sim::target_time(sc.cohort.times(), sim::TargetRule::Median));
    auto cfg = fast_config();
    cfg.outcome_model = OutcomeModel::Weibull;
    const auto fit = build_nuisance_bundle(sc.cohort, t, cfg);
    REQUIRE(fit.models.surv_weibull[1]);
    const auto& x = sc.cohort[5].x;
    CHECK(fit.bundle.surv1[5] == fit.models.surv_weibull[1]->survival(x, t.value()));
}

TEST_CASE("censoring weights and the cap") {
    // Arm 0 censoring KM drops to 2/3 after the censoring at time 1.
    const CovariateSchema schema({{"x", CovariateKind::Continuous, {}}});
    std::vector<SurvivalRecord> recs{{1.0, false, 0, {0.0}}, {2.0, true, 0, {0.0}},
                                     {3.0, true, 0, {1.0}}, {3.0, true, 1, {0.0}},
                                     {4.0, true, 1, {1.0}}};
    const Cohort c(schema, recs);
    const auto g = fit_censoring_model(c, true);
    NuisanceBundle b;
    apply_censoring_weights(c, TargetTime(2.5), g, 20.0, b);
    CHECK(b.censoring_weight[0] == 0.0);
    CHECK(std::isnan(b.censoring_prob[0]));
    CHECK(b.censoring_weight[1] == doctest::Approx(1.5));
    CHECK(b.censoring_weight[2] == doctest::Approx(1.5));
    CHECK(b.censoring_weight[3] == 1.0);
    CHECK(b.censoring_weight[4] == 1.0);
    CHECK(b.diagnostics.n_complete == 4);
    CHECK(b.diagnostics.n_weight_capped == 0);

    NuisanceBundle capped;
    apply_censoring_weights(c, TargetTime(2.5), g, 1.2, capped);
    CHECK(capped.censoring_weight[1] == 1.2);
    CHECK(capped.censoring_weight[2] == 1.2);
    CHECK(capped.diagnostics.n_weight_capped == 2);

    CHECK_THROWS_AS(apply_censoring_weights(c, TargetTime(2.5), g, 0.5, b), ConfigError);
}

TEST_CASE("IPCW self-normalization in the balanced design") {
    const double rate = sim::calibrate_censoring(sim::Scenario::S1, sim::Design::Balanced, 0.3, 9);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto sc = cohort_for(sim::Design::Balanced, 1000, rate, 40 + seed);
        const TargetTime t(sim::target_time(sc.cohort.times(), sim::TargetRule::Median));
        const auto g = fit_censoring_model(sc.cohort, true);
        NuisanceBundle b;
        apply_censoring_weights(sc.cohort, t, g, 20.0, b);
        double sum[2] = {0, 0}, count[2] = {0, 0};
        for (std::size_t i = 0; i < sc.cohort.size(); ++i) {
            sum[sc.cohort[i].treatment] += b.censoring_weight[i];
            count[sc.cohort[i].treatment] += 1;
        }
        CHECK(std::abs(sum[0] / count[0] - 1.0) < 0.1);
        CHECK(std::abs(sum[1] / count[1] - 1.0) < 0.1);
    }
}
