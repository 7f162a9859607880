#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "survcate/error.hpp"
#include "survcate/rng.hpp"
#include "survcate/simbench.hpp"
#include "survcate/subgroup.hpp"

using namespace survcate;

namespace {

CovariateSchema one_covariate() { return CovariateSchema({{"x", CovariateKind::Continuous, {}}}); }

// Product-limit estimate at t from (time, event) pairs, written out directly.
double product_limit(std::vector<std::pair<double, bool>> obs, double t) {
    std::sort(obs.begin(), obs.end());
    double s = 1.0;
    std::size_t at_risk = obs.size();
    std::size_t k = 0;
    while (k < obs.size() && obs[k].first <= t) {
        const double time = obs[k].first;
        std::size_t d = 0, leaving = 0;
        while (k < obs.size() && obs[k].first == time) {
            d += obs[k].second;
            ++leaving;
            ++k;
        }
        s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
        at_risk -= leaving;
    }
    return s;
}

}  // namespace

TEST_CASE("percentile examples") {
    std::vector<double> ten{10, 3, 5, 1, 2, 4, 6, 8, 7, 9};
    CHECK(cate_percentile(ten, 0.9) == 9.0);
    CHECK(cate_percentile(ten, 0.1) == 1.0);
    CHECK(cate_percentile(std::vector<double>{1, 2, 3}, 0.5) == 2.0);
    const std::vector<double> same(7, 0.25);
    for (double q : {0.1, 0.5, 0.9}) CHECK(cate_percentile(same, q) == 0.25);
    CHECK_THROWS(cate_percentile(std::vector<double>{}, 0.5));
}

TEST_CASE("extreme subgroup gives MTD of one") {
    std::vector<SurvivalRecord> recs;
    for (int k = 0; k < 4; ++k) {
        recs.push_back({10.0 + k, true, 1, {0.0}});
        recs.push_back({1.0 + k, true, 0, {0.0}});
    }
    const Cohort c(one_covariate(), recs);
    const std::vector<double> tau(8, 0.1);
    const auto r = mtd_at(c, tau, 0.5, TargetTime(6.0));
    REQUIRE(r.mtd);
    CHECK(*r.mtd == 1.0);
}

TEST_CASE("duplicated rows relabeled give MTD of zero") {
    std::vector<SurvivalRecord> recs;
    const double times[] = {1.0, 2.5, 3.0, 4.0, 7.0};
    const bool events[] = {true, false, true, true, false};
    for (int k = 0; k < 5; ++k) {
        recs.push_back({times[k], events[k], 0, {static_cast<double>(k)}});
        recs.push_back({times[k], events[k], 1, {static_cast<double>(k)}});
    }
    const Cohort c(one_covariate(), recs);
    CHECK(overall_mtd(c, TargetTime(3.5)) == 0.0);
}

TEST_CASE("eight-row hand cohort") {
    // Arm 1: 2 event, 3 censored, 5 event, 7 event. Arm 0: 1 event, 2 censored, 4 event, 4.5 event.
    const std::vector<SurvivalRecord> recs{{2.0, true, 1, {0.0}}, {3.0, false, 1, {0.0}},
                                           {5.0, true, 1, {0.0}}, {7.0, true, 1, {0.0}},
                                           {1.0, true, 0, {0.0}}, {2.0, false, 0, {0.0}},
                                           {4.0, true, 0, {0.0}}, {4.5, true, 0, {0.0}}};
    const Cohort c(one_covariate(), recs);
    const double s1 = product_limit({{2, true}, {3, false}, {5, true}, {7, true}}, 5.0);
    const double s0 = product_limit({{1, true}, {2, false}, {4, true}, {4.5, true}}, 5.0);
    CHECK(s1 == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(s0 == 0.0);
    const std::vector<double> tau{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    const auto all = mtd_above(c, tau, 0.0, TargetTime(5.0));
    REQUIRE(all.mtd);
    CHECK(std::abs(*all.mtd - (s1 - s0)) < 1e-12);
    CHECK(all.n1 == 4);
    CHECK(all.n0 == 4);

    // q = 0.6 keeps the rows with tau >= 0.5, all from arm 0.
    const auto top = mtd_at(c, tau, 0.6, TargetTime(5.0));
    CHECK(!top.mtd);
    CHECK(top.n1 == 0);
    CHECK(top.n0 == 4);
    CHECK(!top.reason.empty());

    // Rows with tau >= 0.3: arm 1 {5e, 7e}, arm 0 all four.
    const auto mid = mtd_above(c, tau, 0.3, TargetTime(5.0));
    REQUIRE(mid.mtd);
    const double expect = product_limit({{5, true}, {7, true}}, 5.0) - s0;
    CHECK(std::abs(*mid.mtd - expect) < 1e-12);
}

TEST_CASE("curve structure and invariances") {
    sim::ScenarioSpec spec;
    spec.design = sim::Design::Balanced;
    const auto sc = sim::simulate_cohort(spec, 600, 0.03, 14);
    const double ts = sim::target_time(sc.cohort.times(), sim::TargetRule::Median);
    const TargetTime t(ts);
    const auto tau = sim::oracle_at(spec.scenario, sc.x, ts).tau;
    const auto grid = default_mtd_grid();
    REQUIRE(grid.size() == 9);
    CHECK(grid.front() == doctest::Approx(0.9));
    CHECK(grid.back() == doctest::Approx(0.1));

    const auto curve = mtd_curve(sc.cohort, tau, grid, t);
    REQUIRE(curve.points.size() == 10);
    const auto& last = curve.points.back();
    CHECK(last.q == 0.0);
    REQUIRE(last.result.mtd);
    CHECK(*last.result.mtd == curve.overall_mtd);
    CHECK(curve.overall_mtd == overall_mtd(sc.cohort, t));
    std::size_t prev = 0;
    for (const auto& pt : curve.points) {
        const std::size_t size = pt.result.n0 + pt.result.n1;
        CHECK(size >= prev);
        prev = size;
        if (pt.result.mtd) {
            CHECK(*pt.result.mtd >= -1.0);
            CHECK(*pt.result.mtd <= 1.0);
            CHECK(pt.beneficial == (*pt.result.mtd - curve.overall_mtd >= curve.margin));
        }
    }

    const std::vector<std::function<double(double)>> maps{
        [](double v) { return std::exp(3.0 * v); }, [](double v) { return v * v * v - 2.0; },
        [](double v) { return std::atan(10.0 * v); }};
    for (const auto& m : maps) {
        std::vector<double> mapped(tau.size());
        for (std::size_t i = 0; i < tau.size(); ++i) mapped[i] = m(tau[i]);
        const auto other = mtd_curve(sc.cohort, mapped, grid, t);
        REQUIRE(other.points.size() == curve.points.size());
        for (std::size_t k = 0; k < curve.points.size(); ++k) {
            CHECK(other.points[k].result.mtd == curve.points[k].result.mtd);
            CHECK(other.points[k].result.n1 == curve.points[k].result.n1);
        }
    }

    const std::vector<double> constant(tau.size(), 0.2);
    const auto flat = mtd_curve(sc.cohort, constant, grid, t);
    for (const auto& pt : flat.points) {
        REQUIRE(pt.result.mtd);
        CHECK(*pt.result.mtd == flat.overall_mtd);
    }
}

TEST_CASE("export formats") {
    const std::vector<SurvivalRecord> recs{{2.0, true, 1, {0.0}}, {3.0, false, 1, {0.0}},
                                           {1.0, true, 0, {0.0}}, {4.0, true, 0, {0.0}}};
    const Cohort c(one_covariate(), recs);
    const std::vector<double> tau{0.4, 0.1, 0.3, 0.2};
    const std::vector<double> grid{0.5};
    const auto curve = mtd_curve(c, tau, grid, TargetTime(2.5));
    std::ostringstream csv;
    write_mtd_csv(csv, curve);
    const std::string s = csv.str();
    CHECK(s.rfind("fraction,q,threshold,n1,n0,mtd,beneficial\n", 0) == 0);
    CHECK(s.find("0.5,0.5,") != std::string::npos);
    const auto j = mtd_json(curve);
    CHECK(j["points"].size() == 2);
    CHECK(overall_mtd(c, TargetTime(2.5)) == doctest::Approx(0.5 - 0.5));
    const std::vector<SurvivalRecord> one_arm{{2.0, true, 1, {0.0}}, {3.0, false, 1, {0.0}}};
    CHECK_THROWS_AS(overall_mtd(Cohort(one_covariate(), one_arm), TargetTime(2.5)), DataError);
}
