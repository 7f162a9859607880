#include "survcate/subgroup.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "survcate/error.hpp"
#include "survcate/io.hpp"
#include "survcate/kaplan_meier.hpp"
#include "survcate/parallel.hpp"

namespace survcate {

double cate_percentile(std::span<const double> tau_hat, double q) {
    if (tau_hat.empty()) throw DataError("cate_percentile: no predictions");
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("percentile must lie in (0, 1)");
    std::vector<double> v(tau_hat.begin(), tau_hat.end());
    const double n = static_cast<double>(v.size());
    auto k = static_cast<std::size_t>(std::ceil(q * n - 1e-12));
    k = std::clamp<std::size_t>(k, 1, v.size());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end());
    return v[k - 1];
}

namespace {

double fraction_of(double q) { return std::round((1.0 - q) * 1e9) / 1e9; }

double km_at(const std::vector<double>& times, const std::vector<bool>& events, double t) {
    return fit_kaplan_meier(times, events).evaluate(t);
}

}  // namespace

MtdResult mtd_above(const Cohort& cohort, std::span<const double> tau_hat, double threshold,
                    const TargetTime& t) {
    if (tau_hat.size() != cohort.size()) throw DataError("one prediction per subject expected");
    std::vector<double> times[2];
    std::vector<bool> events[2];
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (!(tau_hat[i] >= threshold)) continue;
        const int a = cohort[i].treatment;
        times[a].push_back(cohort[i].time);
        events[a].push_back(cohort[i].event);
    }
    MtdResult r;
    r.n1 = times[1].size();
    r.n0 = times[0].size();
    if (r.n1 == 0 || r.n0 == 0) {
        r.reason = r.n1 == 0 ? "no treated subjects in subgroup" : "no control subjects in subgroup";
        return r;
    }
    r.mtd = km_at(times[1], events[1], t.value()) - km_at(times[0], events[0], t.value());
    return r;
}

MtdResult mtd_at(const Cohort& cohort, std::span<const double> tau_hat, double q,
                 const TargetTime& t) {
    return mtd_above(cohort, tau_hat, cate_percentile(tau_hat, q), t);
}

double overall_mtd(const Cohort& cohort, const TargetTime& t) {
    const std::vector<double> all(cohort.size(), 0.0);
    const auto r = mtd_above(cohort, all, 0.0, t);
    if (!r.mtd) throw DataError("overall MTD: " + r.reason);
    return *r.mtd;
}

std::vector<double> default_mtd_grid(double step) {
    if (!(step > 0.0 && step < 1.0)) throw ConfigError("MTD grid step must lie in (0, 1)");
    std::vector<double> grid;
    for (int k = 1;; ++k) {
        const double q = 1.0 - k * step;
        if (q < step - 1e-9) break;
        grid.push_back(std::round(q * 1e9) / 1e9);
    }
    return grid;
}

MtdCurve mtd_curve(const Cohort& cohort, std::span<const double> tau_hat,
                   std::span<const double> grid, const TargetTime& t, double margin) {
    if (tau_hat.empty()) throw DataError("mtd_curve: no predictions");
    for (double q : grid) {
        if (!(q > 0.0 && q < 1.0)) throw ConfigError("MTD grid values must lie in (0, 1)");
    }
    MtdCurve curve;
    curve.margin = margin;
    curve.t_star = t.value();
    curve.overall_mtd = overall_mtd(cohort, t);
    curve.points.resize(grid.size() + 1);
    parallel_for(grid.size(), [&](std::size_t k) {
        auto& p = curve.points[k];
        p.q = grid[k];
        p.threshold = cate_percentile(tau_hat, p.q);
        p.result = mtd_above(cohort, tau_hat, p.threshold, t);
    });
    auto& last = curve.points.back();
    last.q = 0.0;
    last.threshold = *std::min_element(tau_hat.begin(), tau_hat.end());
    last.result = mtd_above(cohort, tau_hat, last.threshold, t);
    for (auto& p : curve.points) {
        p.beneficial = p.result.mtd && *p.result.mtd - curve.overall_mtd >= margin;
    }
    return curve;
}

void write_mtd_csv(std::ostream& out, const MtdCurve& curve) {
    out << "fraction,q,threshold,n1,n0,mtd,beneficial\n";
    for (const auto& p : curve.points) {
        out << io::format_double(fraction_of(p.q)) << ',' << io::format_double(p.q) << ','
            << io::format_double(p.threshold) << ',' << p.result.n1 << ',' << p.result.n0 << ','
            << (p.result.mtd ? io::format_double(*p.result.mtd) : "NA") << ','
            << (p.beneficial ? 1 : 0) << '\n';
    }
}

nlohmann::json mtd_json(const MtdCurve& curve) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : curve.points) {
        nlohmann::json j{{"fraction", fraction_of(p.q)},
                         {"q", p.q},
                         {"threshold", p.threshold},
                         {"n1", p.result.n1},
                         {"n0", p.result.n0},
                         {"beneficial", p.beneficial}};
        if (p.result.mtd) {
            j["mtd"] = *p.result.mtd;
        } else {
            j["mtd"] = nullptr;
            j["reason"] = p.result.reason;
        }
        points.push_back(std::move(j));
    }
    return {{"t_star", curve.t_star},
            {"overall_mtd", curve.overall_mtd},
            {"margin", curve.margin},
            {"points", std::move(points)}};
}

}  // namespace survcate
