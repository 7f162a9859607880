#include "survcate/kaplan_meier.hpp"

#include <algorithm>
#include <numeric>

#include "survcate/error.hpp"

namespace survcate {

namespace {

// Sorted (time, event, multiplicity) triples.
struct Obs {
    double time;
    bool event;
    double mult;
};

std::vector<Obs> sorted_obs(std::span<const double> times, const std::vector<bool>& events,
                            std::span<const double> multiplicity) {
    if (times.empty()) throw DataError("survival curve needs at least one observation");
    if (times.size() != events.size() ||
        (!multiplicity.empty() && multiplicity.size() != times.size())) {
        throw DataError("times, events and multiplicities differ in length");
    }
    std::vector<Obs> obs(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] >= 0.0)) throw DataError("survival times must be nonnegative");
        obs[i] = {times[i], events[i], multiplicity.empty() ? 1.0 : multiplicity[i]};
    }
    std::sort(obs.begin(), obs.end(), [](const Obs& a, const Obs& b) { return a.time < b.time; });
    return obs;
}

// Visits each distinct event time with (time, at_risk, events).
template <typename F>
void for_each_event_time(const std::vector<Obs>& obs, F&& f) {
    double at_risk = 0.0;
    for (const auto& o : obs) at_risk += o.mult;
    std::size_t i = 0;
    while (i < obs.size()) {
        const double t = obs[i].time;
        double d = 0.0;
        double removed = 0.0;
        for (; i < obs.size() && obs[i].time == t; ++i) {
            if (obs[i].event) d += obs[i].mult;
            removed += obs[i].mult;
        }
        if (d > 0.0) f(t, at_risk, d);
        at_risk -= removed;
    }
}

// Index of the largest entry <= t (strict: < t), or -1.
std::ptrdiff_t step_index(const std::vector<double>& times, double t, bool strict) {
    const auto it = strict ? std::lower_bound(times.begin(), times.end(), t)
                           : std::upper_bound(times.begin(), times.end(), t);
    return static_cast<std::ptrdiff_t>(it - times.begin()) - 1;
}

}  // namespace

double KaplanMeierCurve::evaluate(double t) const {
    const auto k = step_index(event_times, t, false);
    return k < 0 ? 1.0 : survival[static_cast<std::size_t>(k)];
}

double KaplanMeierCurve::evaluate_left(double t) const {
    const auto k = step_index(event_times, t, true);
    return k < 0 ? 1.0 : survival[static_cast<std::size_t>(k)];
}

KaplanMeierCurve fit_kaplan_meier(std::span<const double> times, const std::vector<bool>& events) {
    const auto obs = sorted_obs(times, events, {});
    KaplanMeierCurve km;
    double s = 1.0;
    for_each_event_time(obs, [&](double t, double at_risk, double d) {
        s *= 1.0 - d / at_risk;
        km.event_times.push_back(t);
        km.survival.push_back(s);
        km.n_at_risk.push_back(at_risk);
        km.n_events.push_back(d);
    });
    return km;
}

double NelsonAalenCurve::evaluate(double t) const {
    const auto k = step_index(event_times, t, false);
    return k < 0 ? 0.0 : cumulative_hazard[static_cast<std::size_t>(k)];
}

NelsonAalenCurve fit_nelson_aalen(std::span<const double> times, const std::vector<bool>& events,
                                  std::span<const double> multiplicity) {
    const auto obs = sorted_obs(times, events, multiplicity);
    NelsonAalenCurve na;
    double h = 0.0;
    for_each_event_time(obs, [&](double t, double at_risk, double d) {
        h += d / at_risk;
        na.event_times.push_back(t);
        na.cumulative_hazard.push_back(h);
    });
    return na;
}

CensoringModel::CensoringModel(bool stratified, std::vector<KaplanMeierCurve> curves)
    : stratified_(stratified), curves_(std::move(curves)) {}

const KaplanMeierCurve& CensoringModel::curve(int arm) const {
    if (curves_.empty()) throw std::logic_error("censoring model is not fitted");
    return stratified_ ? curves_.at(static_cast<std::size_t>(arm)) : curves_.front();
}

double CensoringModel::probability_uncensored(double t, int arm) const {
    return curve(arm).evaluate_left(t);
}

CensoringModel fit_censoring_model(const Cohort& cohort, bool stratify_by_arm) {
    auto fit_rows = [&](auto&& keep) {
        std::vector<double> t;
        std::vector<bool> censored;
        for (const auto& r : cohort.records()) {
            if (!keep(r)) continue;
            t.push_back(r.time);
            censored.push_back(!r.event);
        }
        return std::pair{t, censored};
    };
    if (!stratify_by_arm) {
        auto [t, c] = fit_rows([](const SurvivalRecord&) { return true; });
        return CensoringModel(false, {fit_kaplan_meier(t, c)});
    }
    std::vector<KaplanMeierCurve> curves;
    for (int arm = 0; arm <= 1; ++arm) {
        auto [t, c] = fit_rows([arm](const SurvivalRecord& r) { return r.treatment == arm; });
        if (t.empty()) {
            throw DataError("censoring model stratified by arm, but arm " + std::to_string(arm) +
                            " has no rows");
        }
        curves.push_back(fit_kaplan_meier(t, c));
    }
    return CensoringModel(true, std::move(curves));
}

}  // namespace survcate
