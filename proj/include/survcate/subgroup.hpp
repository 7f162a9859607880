#pragma once
// Subgroup discovery from the mean-treatment-difference (MTD) curve over CATE percentiles.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "survcate/data_model.hpp"

namespace survcate {

// Lower inverse-ECDF quantile: the ceil(q n)-th smallest value.
double cate_percentile(std::span<const double> tau_hat, double q);

struct MtdResult {
    std::optional<double> mtd;  // empty when an arm has no members
    std::size_t n1 = 0;
    std::size_t n0 = 0;
    std::string reason;
};

// KM difference S1(t*) - S0(t*) among subjects with tau_hat >= threshold.
MtdResult mtd_above(const Cohort& cohort, std::span<const double> tau_hat, double threshold,
                    const TargetTime& t);
// Subgroup {tau_hat >= cate_percentile(tau_hat, q)}.
MtdResult mtd_at(const Cohort& cohort, std::span<const double> tau_hat, double q,
                 const TargetTime& t);
// KM difference over all subjects; both arms must be present.
double overall_mtd(const Cohort& cohort, const TargetTime& t);

struct MtdPoint {
    double q = 0.0;  // 0 marks the full-cohort point
    double threshold = 0.0;
    MtdResult result;
    bool beneficial = false;
};

struct MtdCurve {
    std::vector<MtdPoint> points;
    double overall_mtd = 0.0;
    double margin = 0.05;
    double t_star = 0.0;
};

// Descending grid 1 - step, 1 - 2 step, ... down to step.
std::vector<double> default_mtd_grid(double step = 0.1);

// One point per grid value plus a closing full-cohort point (threshold = min tau_hat).
MtdCurve mtd_curve(const Cohort& cohort, std::span<const double> tau_hat,
                   std::span<const double> grid, const TargetTime& t, double margin = 0.05);

// Columns: fraction (1 - q), q, threshold, n1, n0, mtd, beneficial.
void write_mtd_csv(std::ostream& out, const MtdCurve& curve);
nlohmann::json mtd_json(const MtdCurve& curve);

}  // namespace survcate
