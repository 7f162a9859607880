#pragma once

#include "survcate/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define SURVCATE_HAVE_AVX2 1
#else
#define SURVCATE_HAVE_AVX2 0
#endif

#if defined(__aarch64__)
#define SURVCATE_HAVE_NEON 1
#else
#define SURVCATE_HAVE_NEON 0
#endif

namespace survcate::kernels {

#define SURVCATE_DECLARE_VARIANT(ns)                                                          \
    namespace ns {                                                                            \
    void pseudo_outcomes(PseudoRule rule, const PseudoInputs& in, std::span<double> y,        \
                         std::span<double> w);                                                \
    WeightedSums weighted_sums(std::span<const double> y, std::span<const double> w);         \
    LogRankTerms logrank_terms(std::span<const double> at_risk, std::span<const double> events, \
                               std::span<const double> at_risk_left,                          \
                               std::span<const double> events_left);                          \
    void add(std::span<const double> a, std::span<const double> b, std::span<double> out);    \
    }

#if SURVCATE_HAVE_AVX2
SURVCATE_DECLARE_VARIANT(avx2)
#endif
#if SURVCATE_HAVE_NEON
SURVCATE_DECLARE_VARIANT(neon)
#endif

#undef SURVCATE_DECLARE_VARIANT

}  // namespace survcate::kernels
