#include <doctest.h>

#include <sstream>

#include "survcate/data_model.hpp"
#include "survcate/error.hpp"
#include "survcate/kaplan_meier.hpp"

using namespace survcate;

namespace {

CovariateSchema two_cov_schema() {
    return CovariateSchema({{"age", CovariateKind::Continuous, {}},
                            {"site", CovariateKind::Categorical, {"a", "b", "c"}}});
}

Cohort small_cohort(std::vector<std::tuple<double, bool, int>> rows) {
    std::vector<SurvivalRecord> recs;
    for (auto [t, d, a] : rows) recs.push_back({t, d, a, {0.0}});
    return Cohort(CovariateSchema({{"x", CovariateKind::Continuous, {}}}), recs);
}

}  // namespace

TEST_CASE("schema validation") {
    CHECK_THROWS_AS(CovariateSchema({{"x", CovariateKind::Continuous, {}},
                                     {"x", CovariateKind::Binary, {}}}),
                    ConfigError);
    CHECK_THROWS_AS(CovariateSchema({{"", CovariateKind::Continuous, {}}}), ConfigError);
    CHECK_THROWS_AS(CovariateSchema({{"g", CovariateKind::Categorical, {}}}), ConfigError);
    CHECK_THROWS_AS(CovariateSchema({{"time", CovariateKind::Continuous, {}}}), ConfigError);

    const auto s = two_cov_schema();
    CHECK(s.design_width() == 4);
    CHECK(s.design_names() == std::vector<std::string>{"age", "site=a", "site=b", "site=c"});
    CHECK(s.design_groups() == std::vector<std::size_t>{0, 1, 1, 1});
    CHECK(CovariateSchema::from_json(s.to_json()) == s);
    CHECK_THROWS_AS(CovariateSchema::from_json(nlohmann::json::parse(
                        R"({"covariates":[{"name":"x","kind":"continuous","unit":"kg"}]})")),
                    ConfigError);
}

TEST_CASE("cohort ingestion") {
    const auto schema = two_cov_schema();
    SUBCASE("columns in any order, extra columns ignored, levels by name") {
        std::istringstream in("site,extra,treatment,time,event,age\nb,9,1,3.5,1,40\nc,9,0,2,0,51\n");
        const Cohort c = ingest_cohort(in, schema);
        REQUIRE(c.size() == 2);
        CHECK(c[0].time == 3.5);
        CHECK(c[0].event);
        CHECK(c[0].treatment == 1);
        CHECK(c[0].x == std::vector<double>{40.0, 1.0});
        CHECK(c.design_matrix() == std::vector<double>{40, 0, 1, 0, 51, 0, 0, 1});
        std::ostringstream out;
        write_cohort_csv(out, c);
        std::istringstream back(out.str());
        CHECK(ingest_cohort(back, schema) == c);
    }
    SUBCASE("missing values are rejected with the row number") {
        std::istringstream in("time,event,treatment,age,site\n1,1,0,3,a\n2,0,1,,b\n");
        try {
            ingest_cohort(in, schema);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("row 2") != std::string::npos);
        }
    }
    SUBCASE("bad codes") {
        std::istringstream t("time,event,treatment,age,site\n1,1,2,3,a\n");
        CHECK_THROWS_AS(ingest_cohort(t, schema), DataError);
        std::istringstream u("time,event,treatment,age,site\n-1,1,0,3,a\n");
        CHECK_THROWS_AS(ingest_cohort(u, schema), DataError);
        std::istringstream v("time,event,treatment,age,site\n1,1,0,3,zzz\n");
        CHECK_THROWS_AS(ingest_cohort(v, schema), DataError);
        std::istringstream w("time,event,age,site\n1,1,3,a\n");
        CHECK_THROWS_AS(ingest_cohort(w, schema), DataError);
    }
    SUBCASE("covariate-only files") {
        std::istringstream in("site,age\na,1.5\n");
        const auto rows = ingest_covariates(in, schema);
        CHECK(rows == std::vector<std::vector<double>>{{1.5, 0.0}});
    }
    CHECK_THROWS_AS(Cohort(schema, {{1.0, true, 0, {1.0}}}), DataError);
    CHECK_THROWS_AS(TargetTime(0.0), ConfigError);
}

TEST_CASE("complete-case rule") {
    const Cohort c = small_cohort({{5, false, 0}, {10, false, 1}, {3, true, 0}, {12, true, 1},
                                   {10, true, 0}});
    const TargetTime t(10.0);
    const auto view = complete_case_view(c, t);
    // Row 0 censored before t* is excluded; ties at t* count as survivors.
    CHECK(view.indices == std::vector<std::size_t>{1, 2, 3, 4});
    CHECK(view.survival_indicator == std::vector<bool>{true, false, true, true});
    CHECK(censoring_min_time(c[2], t) == 3.0);
    CHECK(censoring_min_time(c[3], t) == 10.0);
    CHECK_THROWS_AS(censoring_min_time(c[0], t), std::logic_error);
}

TEST_CASE("Kaplan-Meier examples") {
    const std::vector<double> times{1, 2, 3};
    SUBCASE("no censoring equals empirical survival") {
        const auto km = fit_kaplan_meier(times, {true, true, true});
        CHECK(km.evaluate(0.5) == 1.0);
        CHECK(km.evaluate(1) == doctest::Approx(2.0 / 3));
        CHECK(km.evaluate(2) == doctest::Approx(1.0 / 3));
        CHECK(km.evaluate(3) == 0.0);
        CHECK(km.evaluate_left(2) == doctest::Approx(2.0 / 3));
    }
    SUBCASE("one censored observation in the middle") {
        const auto km = fit_kaplan_meier(times, {true, false, true});
        CHECK(km.evaluate(1) == doctest::Approx(2.0 / 3));
        CHECK(km.evaluate(2) == doctest::Approx(2.0 / 3));
        CHECK(km.evaluate(3) == 0.0);
    }
    SUBCASE("single censored observation") {
        const std::vector<double> one{4};
        const auto km = fit_kaplan_meier(one, {false});
        for (double t : {0.0, 4.0, 100.0}) CHECK(km.evaluate(t) == 1.0);
    }
    CHECK_THROWS_AS(fit_kaplan_meier(std::vector<double>{}, {}), DataError);
    CHECK_THROWS_AS(fit_kaplan_meier(std::vector<double>{-1}, {true}), DataError);
}

TEST_CASE("Nelson-Aalen with multiplicities") {
    const std::vector<double> times{1, 2, 2, 4};
    const auto na = fit_nelson_aalen(times, {true, true, false, true});
    CHECK(na.evaluate(1) == doctest::Approx(0.25));
    CHECK(na.evaluate(2) == doctest::Approx(0.25 + 1.0 / 3));
    CHECK(na.evaluate(4) == doctest::Approx(0.25 + 1.0 / 3 + 1.0));
    const std::vector<double> mult{2, 1, 1, 1};
    const auto weighted = fit_nelson_aalen(times, {true, true, false, true}, mult);
    CHECK(weighted.evaluate(1) == doctest::Approx(2.0 / 5));
}

TEST_CASE("censoring model") {
    SUBCASE("no censoring gives G = 1 before the last time") {
        const Cohort c = small_cohort({{1, true, 0}, {2, true, 1}, {3, true, 0}, {4, true, 1}});
        const auto g = fit_censoring_model(c, true);
        for (double t : {0.5, 1.0, 2.5, 3.9}) {
            CHECK(g.probability_uncensored(t, 0) == 1.0);
            CHECK(g.probability_uncensored(t, 1) == 1.0);
        }
    }
    SUBCASE("duality with the event KM") {
        const Cohort c = small_cohort({{1, true, 0}, {2, false, 1}, {3, false, 0}, {4, true, 1},
                                       {5, false, 0}});
        const auto g = fit_censoring_model(c, false);
        std::vector<bool> flipped;
        for (const auto& r : c.records()) flipped.push_back(!r.event);
        const auto km = fit_kaplan_meier(c.times(), flipped);
        for (double t : {0.0, 1.0, 2.0, 2.5, 3.0, 4.5, 5.0, 9.0}) {
            CHECK(g.curve(0).evaluate(t) == km.evaluate(t));
            CHECK(g.probability_uncensored(t, 1) == km.evaluate_left(t));
        }
    }
    SUBCASE("stratified fit needs both arms") {
        const Cohort c = small_cohort({{1, true, 0}, {2, false, 0}});
        CHECK_THROWS_AS(fit_censoring_model(c, true), DataError);
        CHECK_NOTHROW(fit_censoring_model(c, false));
    }
}
