#pragma once
// Weibull regression S(t|x) = exp(-(t/scale)^shape * exp(coef . x)) fitted by maximum likelihood.

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

namespace survcate {

struct WeibullAftModel {
    double shape = 1.0;
    double scale = 1.0;
    std::vector<double> coef;

    double linear_predictor(std::span<const double> x) const;
    double survival(std::span<const double> x, double t) const;

    nlohmann::json to_json() const;
    static WeibullAftModel from_json(const nlohmann::json& j);
};

struct WeibullFitReport {
    WeibullAftModel model;
    double log_likelihood = 0.0;
    double gradient_norm = 0.0;
    std::size_t iterations = 0;
    // Log-likelihood after each accepted step.
    std::vector<double> trace;
};

// Parameters are packed as (log shape, log scale, coef...).
double weibull_log_likelihood(std::span<const double> theta, std::span<const double> x,
                              std::size_t p, std::span<const double> times,
                              const std::vector<bool>& events);
std::vector<double> weibull_score(std::span<const double> theta, std::span<const double> x,
                                  std::size_t p, std::span<const double> times,
                                  const std::vector<bool>& events);

struct WeibullFitOptions {
    std::size_t max_iterations = 500;
    double gradient_tolerance = 1e-8;  // on max |score| / n
};

// x is row-major n x p. Requires positive times and at least p + 2 events.
WeibullFitReport fit_weibull_aft(std::span<const double> x, std::size_t p,
                                 std::span<const double> times, const std::vector<bool>& events,
                                 const WeibullFitOptions& options = {});

}  // namespace survcate
