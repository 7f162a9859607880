#pragma once

#include <span>
#include <vector>

#include "survcate/data_model.hpp"

namespace survcate {

// Product-limit estimate as a right-continuous step function over distinct event times.
struct KaplanMeierCurve {
    std::vector<double> event_times;
    std::vector<double> survival;
    std::vector<double> n_at_risk;
    std::vector<double> n_events;

    // S(t): value at the largest event time <= t (1 before the first event).
    double evaluate(double t) const;
    // S(t-): value at the largest event time < t.
    double evaluate_left(double t) const;
};

KaplanMeierCurve fit_kaplan_meier(std::span<const double> times, const std::vector<bool>& events);

// Nelson-Aalen cumulative hazard with optional per-observation multiplicities.
struct NelsonAalenCurve {
    std::vector<double> event_times;
    std::vector<double> cumulative_hazard;

    double evaluate(double t) const;
};

NelsonAalenCurve fit_nelson_aalen(std::span<const double> times, const std::vector<bool>& events,
                                  std::span<const double> multiplicity = {});

// KM of the censoring distribution: fit on (U, 1 - delta), optionally one curve per arm.
class CensoringModel {
public:
    CensoringModel() = default;
    CensoringModel(bool stratified, std::vector<KaplanMeierCurve> curves);

    bool stratified() const { return stratified_; }
    const KaplanMeierCurve& curve(int arm) const;
    // P(C >= t | A = arm): left limit of the censoring survival curve.
    double probability_uncensored(double t, int arm) const;

private:
    bool stratified_ = false;
    std::vector<KaplanMeierCurve> curves_;
};

CensoringModel fit_censoring_model(const Cohort& cohort, bool stratify_by_arm);

}  // namespace survcate
