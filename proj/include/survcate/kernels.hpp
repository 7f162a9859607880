#pragma once
// Arithmetic inner loops with a scalar reference and vectorized variants.
//
// The active variant is chosen once at startup from CPU capabilities
// (AVX2 on x86-64, NEON on aarch64) and can be pinned for testing. Elementwise
// kernels produce bit-identical results across variants; reductions agree to
// rounding (summation order differs).

#include <cstddef>
#include <span>
#include <string_view>

namespace survcate::kernels {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

// Best variant supported by this CPU and build.
Isa detected_isa();
Isa active_isa();
// Pins the variant; requesting an unsupported one falls back to Scalar.
void set_active_isa(Isa isa);

// Pseudo-outcome rules that are elementwise in (A, I, e, S0, S1, S).
enum class PseudoRule { M, DR, D, DEA, R };

struct PseudoInputs {
    std::span<const double> treatment;    // A in {0, 1}
    std::span<const double> indicator;    // I(T > t*) in {0, 1}
    std::span<const double> propensity;   // e(x)
    std::span<const double> surv0;        // S0(t*|x)
    std::span<const double> surv1;        // S1(t*|x)
    std::span<const double> surv_pooled;  // S(t*|x)
};

// Writes Y* and w^M for every row.
void pseudo_outcomes(PseudoRule rule, const PseudoInputs& in, std::span<double> y,
                     std::span<double> w);

struct WeightedSums {
    double w = 0.0;
    double wy = 0.0;
    double wyy = 0.0;
};

WeightedSums weighted_sums(std::span<const double> y, std::span<const double> w);

// Two-sample log-rank pieces over distinct event times k:
//   numerator = sum_k (dL_k - YL_k d_k / Y_k)
//   variance  = sum_{k: Y_k > 1} (YL_k/Y_k)(1 - YL_k/Y_k)(Y_k - d_k)/(Y_k - 1) d_k
struct LogRankTerms {
    double numerator = 0.0;
    double variance = 0.0;
};

LogRankTerms logrank_terms(std::span<const double> at_risk, std::span<const double> events,
                           std::span<const double> at_risk_left,
                           std::span<const double> events_left);

// out[i] = a[i] + b[i]
void add(std::span<const double> a, std::span<const double> b, std::span<double> out);

namespace scalar {
void pseudo_outcomes(PseudoRule rule, const PseudoInputs& in, std::span<double> y,
                     std::span<double> w);
WeightedSums weighted_sums(std::span<const double> y, std::span<const double> w);
LogRankTerms logrank_terms(std::span<const double> at_risk, std::span<const double> events,
                           std::span<const double> at_risk_left,
                           std::span<const double> events_left);
void add(std::span<const double> a, std::span<const double> b, std::span<double> out);
}  // namespace scalar

}  // namespace survcate::kernels
