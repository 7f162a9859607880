#include "kernels_internal.hpp"

#if SURVCATE_HAVE_AVX2

#include <immintrin.h>

namespace survcate::kernels::avx2 {
namespace {

#define SURVCATE_AVX2 __attribute__((target("avx2")))

SURVCATE_AVX2 double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

SURVCATE_AVX2 void pseudo_m(std::size_t n, const double* a, const double* ind, const double* e,
                            double* y, double* w) {
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d av = _mm256_loadu_pd(a + i);
        const __m256d ev = _mm256_loadu_pd(e + i);
        const __m256d ee = _mm256_mul_pd(ev, _mm256_sub_pd(one, ev));
        const __m256d q = _mm256_div_pd(_mm256_sub_pd(av, ev), ee);
        _mm256_storeu_pd(y + i, _mm256_mul_pd(q, _mm256_loadu_pd(ind + i)));
        _mm256_storeu_pd(w + i, one);
    }
    for (; i < n; ++i) {
        const double ee = e[i] * (1.0 - e[i]);
        y[i] = ((a[i] - e[i]) / ee) * ind[i];
        w[i] = 1.0;
    }
}

SURVCATE_AVX2 void pseudo_dr(std::size_t n, const double* a, const double* ind, const double* e,
                             const double* s0, const double* s1, double* y, double* w) {
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d av = _mm256_loadu_pd(a + i);
        const __m256d ev = _mm256_loadu_pd(e + i);
        const __m256d s0v = _mm256_loadu_pd(s0 + i);
        const __m256d s1v = _mm256_loadu_pd(s1 + i);
        const __m256d ee = _mm256_mul_pd(ev, _mm256_sub_pd(one, ev));
        const __m256d treated = _mm256_cmp_pd(av, one, _CMP_EQ_OQ);
        const __m256d sa = _mm256_blendv_pd(s0v, s1v, treated);
        const __m256d q = _mm256_div_pd(_mm256_sub_pd(av, ev), ee);
        const __m256d resid = _mm256_sub_pd(_mm256_loadu_pd(ind + i), sa);
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_mul_pd(q, resid), _mm256_sub_pd(s1v, s0v)));
        _mm256_storeu_pd(w + i, one);
    }
    for (; i < n; ++i) {
        const double ee = e[i] * (1.0 - e[i]);
        const double sa = a[i] == 1.0 ? s1[i] : s0[i];
        y[i] = ((a[i] - e[i]) / ee) * (ind[i] - sa) + (s1[i] - s0[i]);
        w[i] = 1.0;
    }
}

// D (s == nullptr) and DEA share the weight and differ in the outcome residual.
SURVCATE_AVX2 void pseudo_d(std::size_t n, const double* a, const double* ind, const double* e,
                            const double* s, double* y, double* w) {
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d two = _mm256_set1_pd(2.0);
    const __m256d four = _mm256_set1_pd(4.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d av = _mm256_loadu_pd(a + i);
        const __m256d ev = _mm256_loadu_pd(e + i);
        const __m256d ee = _mm256_mul_pd(ev, _mm256_sub_pd(one, ev));
        const __m256d sign = _mm256_sub_pd(_mm256_mul_pd(two, av), one);
        __m256d outcome = _mm256_loadu_pd(ind + i);
        if (s != nullptr) outcome = _mm256_sub_pd(outcome, _mm256_loadu_pd(s + i));
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_mul_pd(two, sign), outcome));
        const __m256d num = _mm256_mul_pd(sign, _mm256_sub_pd(av, ev));
        _mm256_storeu_pd(w + i, _mm256_div_pd(num, _mm256_mul_pd(four, ee)));
    }
    for (; i < n; ++i) {
        const double ee = e[i] * (1.0 - e[i]);
        const double sign = 2.0 * a[i] - 1.0;
        const double outcome = s != nullptr ? ind[i] - s[i] : ind[i];
        y[i] = (2.0 * sign) * outcome;
        w[i] = (sign * (a[i] - e[i])) / (4.0 * ee);
    }
}

SURVCATE_AVX2 void pseudo_r(std::size_t n, const double* a, const double* ind, const double* e,
                            const double* s, double* y, double* w) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d r = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(e + i));
        const __m256d resid = _mm256_sub_pd(_mm256_loadu_pd(ind + i), _mm256_loadu_pd(s + i));
        _mm256_storeu_pd(y + i, _mm256_div_pd(resid, r));
        _mm256_storeu_pd(w + i, _mm256_mul_pd(r, r));
    }
    for (; i < n; ++i) {
        const double r = a[i] - e[i];
        y[i] = (ind[i] - s[i]) / r;
        w[i] = r * r;
    }
}

SURVCATE_AVX2 WeightedSums sums(std::size_t n, const double* y, const double* w) {
    __m256d sw = _mm256_setzero_pd();
    __m256d swy = _mm256_setzero_pd();
    __m256d swyy = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d yv = _mm256_loadu_pd(y + i);
        const __m256d wv = _mm256_loadu_pd(w + i);
        const __m256d wy = _mm256_mul_pd(wv, yv);
        sw = _mm256_add_pd(sw, wv);
        swy = _mm256_add_pd(swy, wy);
        swyy = _mm256_add_pd(swyy, _mm256_mul_pd(wy, yv));
    }
    WeightedSums out{hsum(sw), hsum(swy), hsum(swyy)};
    for (; i < n; ++i) {
        const double wy = w[i] * y[i];
        out.w += w[i];
        out.wy += wy;
        out.wyy += wy * y[i];
    }
    return out;
}

SURVCATE_AVX2 LogRankTerms logrank(std::size_t n, const double* at_risk, const double* events,
                                   const double* at_risk_left, const double* events_left) {
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d zero = _mm256_setzero_pd();
    __m256d num = zero;
    __m256d var = zero;
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m256d y = _mm256_loadu_pd(at_risk + k);
        const __m256d d = _mm256_loadu_pd(events + k);
        const __m256d ratio = _mm256_div_pd(_mm256_loadu_pd(at_risk_left + k), y);
        num = _mm256_add_pd(num, _mm256_sub_pd(_mm256_loadu_pd(events_left + k),
                                               _mm256_mul_pd(ratio, d)));
        const __m256d several = _mm256_cmp_pd(y, one, _CMP_GT_OQ);
        // Lanes with y <= 1 divide by 1 and are then masked to zero.
        const __m256d denom = _mm256_blendv_pd(one, _mm256_sub_pd(y, one), several);
        const __m256d term = _mm256_mul_pd(
            _mm256_mul_pd(_mm256_mul_pd(ratio, _mm256_sub_pd(one, ratio)),
                          _mm256_div_pd(_mm256_sub_pd(y, d), denom)),
            d);
        var = _mm256_add_pd(var, _mm256_and_pd(term, several));
    }
    LogRankTerms out{hsum(num), hsum(var)};
    for (; k < n; ++k) {
        const double y = at_risk[k];
        const double d = events[k];
        const double ratio = at_risk_left[k] / y;
        out.numerator += events_left[k] - ratio * d;
        if (y > 1.0) out.variance += ratio * (1.0 - ratio) * ((y - d) / (y - 1.0)) * d;
    }
    return out;
}

SURVCATE_AVX2 void add_impl(std::size_t n, const double* a, const double* b, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

#undef SURVCATE_AVX2

}  // namespace

void pseudo_outcomes(PseudoRule rule, const PseudoInputs& in, std::span<double> y,
                     std::span<double> w) {
    const std::size_t n = y.size();
    const double* a = in.treatment.data();
    const double* ind = in.indicator.data();
    const double* e = in.propensity.data();
    switch (rule) {
        case PseudoRule::M: pseudo_m(n, a, ind, e, y.data(), w.data()); break;
        case PseudoRule::DR:
            pseudo_dr(n, a, ind, e, in.surv0.data(), in.surv1.data(), y.data(), w.data());
            break;
        case PseudoRule::D: pseudo_d(n, a, ind, e, nullptr, y.data(), w.data()); break;
        case PseudoRule::DEA:
            pseudo_d(n, a, ind, e, in.surv_pooled.data(), y.data(), w.data());
            break;
        case PseudoRule::R:
            pseudo_r(n, a, ind, e, in.surv_pooled.data(), y.data(), w.data());
            break;
    }
}

WeightedSums weighted_sums(std::span<const double> y, std::span<const double> w) {
    return sums(y.size(), y.data(), w.data());
}

LogRankTerms logrank_terms(std::span<const double> at_risk, std::span<const double> events,
                           std::span<const double> at_risk_left,
                           std::span<const double> events_left) {
    return logrank(at_risk.size(), at_risk.data(), events.data(), at_risk_left.data(),
                   events_left.data());
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    add_impl(out.size(), a.data(), b.data(), out.data());
}

}  // namespace survcate::kernels::avx2

#endif
