#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"

namespace survcate::kernels {
namespace {

bool supported(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return true;
        case Isa::Avx2:
#if SURVCATE_HAVE_AVX2
            return __builtin_cpu_supports("avx2");
#else
            return false;
#endif
        case Isa::Neon: return SURVCATE_HAVE_NEON != 0;
    }
    return false;
}

Isa initial_isa() {
    // SURVCATE_ISA=scalar forces the reference path.
    if (const char* env = std::getenv("SURVCATE_ISA")) {
        if (std::string(env) == "scalar") return Isa::Scalar;
    }
    return detected_isa();
}

std::atomic<Isa>& active() {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Neon: return "neon";
    }
    return "unknown";
}

Isa detected_isa() {
    if (supported(Isa::Avx2)) return Isa::Avx2;
    if (supported(Isa::Neon)) return Isa::Neon;
    return Isa::Scalar;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
    active().store(supported(isa) ? isa : Isa::Scalar, std::memory_order_relaxed);
}

#if SURVCATE_HAVE_AVX2
#define SURVCATE_DISPATCH(fn, ...)                                       \
    switch (active_isa()) {                                              \
        case Isa::Avx2: return avx2::fn(__VA_ARGS__);                    \
        default: return scalar::fn(__VA_ARGS__);                         \
    }
#elif SURVCATE_HAVE_NEON
#define SURVCATE_DISPATCH(fn, ...)                                       \
    switch (active_isa()) {                                              \
        case Isa::Neon: return neon::fn(__VA_ARGS__);                    \
        default: return scalar::fn(__VA_ARGS__);                         \
    }
#else
#define SURVCATE_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__);
#endif

void pseudo_outcomes(PseudoRule rule, const PseudoInputs& in, std::span<double> y,
                     std::span<double> w) {
    SURVCATE_DISPATCH(pseudo_outcomes, rule, in, y, w)
}

WeightedSums weighted_sums(std::span<const double> y, std::span<const double> w) {
    SURVCATE_DISPATCH(weighted_sums, y, w)
}

LogRankTerms logrank_terms(std::span<const double> at_risk, std::span<const double> events,
                           std::span<const double> at_risk_left,
                           std::span<const double> events_left) {
    SURVCATE_DISPATCH(logrank_terms, at_risk, events, at_risk_left, events_left)
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    SURVCATE_DISPATCH(add, a, b, out)
}

}  // namespace survcate::kernels
