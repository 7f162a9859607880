#include "kernels_internal.hpp"

#if SURVCATE_HAVE_NEON

#include <arm_neon.h>

namespace survcate::kernels::neon {
namespace {

double hsum(float64x2_t v) { return vgetq_lane_f64(v, 0) + vgetq_lane_f64(v, 1); }

}  // namespace

void pseudo_outcomes(PseudoRule rule, const PseudoInputs& in, std::span<double> y,
                     std::span<double> w) {
    const std::size_t n = y.size();
    const double* a = in.treatment.data();
    const double* ind = in.indicator.data();
    const double* e = in.propensity.data();
    const float64x2_t one = vdupq_n_f64(1.0);
    const float64x2_t two = vdupq_n_f64(2.0);
    const float64x2_t four = vdupq_n_f64(4.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t av = vld1q_f64(a + i);
        const float64x2_t ev = vld1q_f64(e + i);
        const float64x2_t iv = vld1q_f64(ind + i);
        const float64x2_t ee = vmulq_f64(ev, vsubq_f64(one, ev));
        float64x2_t yv;
        float64x2_t wv = one;
        switch (rule) {
            case PseudoRule::M:
                yv = vmulq_f64(vdivq_f64(vsubq_f64(av, ev), ee), iv);
                break;
            case PseudoRule::DR: {
                const float64x2_t s0 = vld1q_f64(in.surv0.data() + i);
                const float64x2_t s1 = vld1q_f64(in.surv1.data() + i);
                const float64x2_t sa = vbslq_f64(vceqq_f64(av, one), s1, s0);
                yv = vaddq_f64(vmulq_f64(vdivq_f64(vsubq_f64(av, ev), ee), vsubq_f64(iv, sa)),
                               vsubq_f64(s1, s0));
                break;
            }
            case PseudoRule::D:
            case PseudoRule::DEA: {
                const float64x2_t sign = vsubq_f64(vmulq_f64(two, av), one);
                const float64x2_t outcome =
                    rule == PseudoRule::DEA ? vsubq_f64(iv, vld1q_f64(in.surv_pooled.data() + i))
                                            : iv;
                yv = vmulq_f64(vmulq_f64(two, sign), outcome);
                wv = vdivq_f64(vmulq_f64(sign, vsubq_f64(av, ev)), vmulq_f64(four, ee));
                break;
            }
            case PseudoRule::R: {
                const float64x2_t r = vsubq_f64(av, ev);
                yv = vdivq_f64(vsubq_f64(iv, vld1q_f64(in.surv_pooled.data() + i)), r);
                wv = vmulq_f64(r, r);
                break;
            }
        }
        vst1q_f64(y.data() + i, yv);
        vst1q_f64(w.data() + i, wv);
    }
    if (i < n) {
        PseudoInputs tail{in.treatment.subspan(i),  in.indicator.subspan(i),
                          in.propensity.subspan(i), in.surv0.empty() ? in.surv0 : in.surv0.subspan(i),
                          in.surv1.empty() ? in.surv1 : in.surv1.subspan(i),
                          in.surv_pooled.empty() ? in.surv_pooled : in.surv_pooled.subspan(i)};
        scalar::pseudo_outcomes(rule, tail, y.subspan(i), w.subspan(i));
    }
}

WeightedSums weighted_sums(std::span<const double> y, std::span<const double> w) {
    float64x2_t sw = vdupq_n_f64(0.0), swy = sw, swyy = sw;
    std::size_t i = 0;
    const std::size_t n = y.size();
    for (; i + 2 <= n; i += 2) {
        const float64x2_t yv = vld1q_f64(y.data() + i);
        const float64x2_t wv = vld1q_f64(w.data() + i);
        const float64x2_t wy = vmulq_f64(wv, yv);
        sw = vaddq_f64(sw, wv);
        swy = vaddq_f64(swy, wy);
        swyy = vaddq_f64(swyy, vmulq_f64(wy, yv));
    }
    WeightedSums out{hsum(sw), hsum(swy), hsum(swyy)};
    const WeightedSums tail = scalar::weighted_sums(y.subspan(i), w.subspan(i));
    out.w += tail.w;
    out.wy += tail.wy;
    out.wyy += tail.wyy;
    return out;
}

LogRankTerms logrank_terms(std::span<const double> at_risk, std::span<const double> events,
                           std::span<const double> at_risk_left,
                           std::span<const double> events_left) {
    const float64x2_t one = vdupq_n_f64(1.0);
    float64x2_t num = vdupq_n_f64(0.0), var = num;
    std::size_t k = 0;
    const std::size_t n = at_risk.size();
    for (; k + 2 <= n; k += 2) {
        const float64x2_t y = vld1q_f64(at_risk.data() + k);
        const float64x2_t d = vld1q_f64(events.data() + k);
        const float64x2_t ratio = vdivq_f64(vld1q_f64(at_risk_left.data() + k), y);
        num = vaddq_f64(num, vsubq_f64(vld1q_f64(events_left.data() + k), vmulq_f64(ratio, d)));
        const uint64x2_t several = vcgtq_f64(y, one);
        const float64x2_t denom = vbslq_f64(several, vsubq_f64(y, one), one);
        const float64x2_t term = vmulq_f64(
            vmulq_f64(vmulq_f64(ratio, vsubq_f64(one, ratio)), vdivq_f64(vsubq_f64(y, d), denom)),
            d);
        var = vaddq_f64(var, vreinterpretq_f64_u64(vandq_u64(vreinterpretq_u64_f64(term), several)));
    }
    LogRankTerms out{hsum(num), hsum(var)};
    const LogRankTerms tail = scalar::logrank_terms(at_risk.subspan(k), events.subspan(k),
                                                    at_risk_left.subspan(k), events_left.subspan(k));
    out.numerator += tail.numerator;
    out.variance += tail.variance;
    return out;
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    std::size_t i = 0;
    for (; i + 2 <= out.size(); i += 2) {
        vst1q_f64(out.data() + i, vaddq_f64(vld1q_f64(a.data() + i), vld1q_f64(b.data() + i)));
    }
    for (; i < out.size(); ++i) out[i] = a[i] + b[i];
}

}  // namespace survcate::kernels::neon

#endif
