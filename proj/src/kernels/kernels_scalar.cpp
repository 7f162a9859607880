#include "survcate/kernels.hpp"

#include <cassert>

namespace survcate::kernels::scalar {

void pseudo_outcomes(PseudoRule rule, const PseudoInputs& in, std::span<double> y,
                     std::span<double> w) {
    const std::size_t n = y.size();
    assert(w.size() == n && in.treatment.size() == n && in.indicator.size() == n &&
           in.propensity.size() == n);
    const double* a = in.treatment.data();
    const double* ind = in.indicator.data();
    const double* e = in.propensity.data();
    switch (rule) {
        case PseudoRule::M:
            for (std::size_t i = 0; i < n; ++i) {
                const double ee = e[i] * (1.0 - e[i]);
                y[i] = ((a[i] - e[i]) / ee) * ind[i];
                w[i] = 1.0;
            }
            break;
        case PseudoRule::DR: {
            const double* s0 = in.surv0.data();
            const double* s1 = in.surv1.data();
            for (std::size_t i = 0; i < n; ++i) {
                const double ee = e[i] * (1.0 - e[i]);
                const double sa = a[i] == 1.0 ? s1[i] : s0[i];
                y[i] = ((a[i] - e[i]) / ee) * (ind[i] - sa) + (s1[i] - s0[i]);
                w[i] = 1.0;
            }
            break;
        }
        case PseudoRule::D:
            for (std::size_t i = 0; i < n; ++i) {
                const double ee = e[i] * (1.0 - e[i]);
                const double sign = 2.0 * a[i] - 1.0;
                y[i] = (2.0 * sign) * ind[i];
                w[i] = (sign * (a[i] - e[i])) / (4.0 * ee);
            }
            break;
        case PseudoRule::DEA: {
            const double* s = in.surv_pooled.data();
            for (std::size_t i = 0; i < n; ++i) {
                const double ee = e[i] * (1.0 - e[i]);
                const double sign = 2.0 * a[i] - 1.0;
                y[i] = (2.0 * sign) * (ind[i] - s[i]);
                w[i] = (sign * (a[i] - e[i])) / (4.0 * ee);
            }
            break;
        }
        case PseudoRule::R: {
            const double* s = in.surv_pooled.data();
            for (std::size_t i = 0; i < n; ++i) {
                const double r = a[i] - e[i];
                y[i] = (ind[i] - s[i]) / r;
                w[i] = r * r;
            }
            break;
        }
    }
}

WeightedSums weighted_sums(std::span<const double> y, std::span<const double> w) {
    WeightedSums out;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double wy = w[i] * y[i];
        out.w += w[i];
        out.wy += wy;
        out.wyy += wy * y[i];
    }
    return out;
}

LogRankTerms logrank_terms(std::span<const double> at_risk, std::span<const double> events,
                           std::span<const double> at_risk_left,
                           std::span<const double> events_left) {
    LogRankTerms out;
    for (std::size_t k = 0; k < at_risk.size(); ++k) {
        const double y = at_risk[k];
        const double d = events[k];
        const double ratio = at_risk_left[k] / y;
        out.numerator += events_left[k] - ratio * d;
        if (y > 1.0) {
            out.variance += ratio * (1.0 - ratio) * ((y - d) / (y - 1.0)) * d;
        }
    }
    return out;
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
}

}  // namespace survcate::kernels::scalar
