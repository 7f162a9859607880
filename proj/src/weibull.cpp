#include "survcate/weibull.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "survcate/error.hpp"

namespace survcate {

double WeibullAftModel::linear_predictor(std::span<const double> x) const {
    if (x.size() != coef.size()) {
        throw DataError("Weibull model expects " + std::to_string(coef.size()) + " covariates");
    }
    double f = 0.0;
    for (std::size_t j = 0; j < coef.size(); ++j) f += coef[j] * x[j];
    return f;
}

double WeibullAftModel::survival(std::span<const double> x, double t) const {
    if (t <= 0.0) return 1.0;
    return std::exp(-std::pow(t / scale, shape) * std::exp(linear_predictor(x)));
}

nlohmann::json WeibullAftModel::to_json() const {
    return {{"kind", "weibull"}, {"shape", shape}, {"scale", scale}, {"coef", coef}};
}

WeibullAftModel WeibullAftModel::from_json(const nlohmann::json& j) {
    if (j.at("kind") != "weibull") throw DataError("not a Weibull model");
    return {j.at("shape").get<double>(), j.at("scale").get<double>(),
            j.at("coef").get<std::vector<double>>()};
}

// log h(t|x) = log(shape) - shape*log(scale) + (shape-1) log t + f(x)
// H(t|x)     = exp(shape*(log t - log scale) + f(x))
double weibull_log_likelihood(std::span<const double> theta, std::span<const double> x,
                              std::size_t p, std::span<const double> times,
                              const std::vector<bool>& events) {
    const double log_shape = theta[0];
    const double shape = std::exp(log_shape);
    const double log_scale = theta[1];
    double ll = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        double f = 0.0;
        for (std::size_t j = 0; j < p; ++j) f += theta[2 + j] * x[i * p + j];
        const double z = std::log(times[i]) - log_scale;
        if (events[i]) ll += log_shape + (shape - 1.0) * z - log_scale + f;
        ll -= std::exp(shape * z + f);
    }
    return ll;
}

std::vector<double> weibull_score(std::span<const double> theta, std::span<const double> x,
                                  std::size_t p, std::span<const double> times,
                                  const std::vector<bool>& events) {
    const double shape = std::exp(theta[0]);
    const double log_scale = theta[1];
    std::vector<double> g(p + 2, 0.0);
    for (std::size_t i = 0; i < times.size(); ++i) {
        double f = 0.0;
        for (std::size_t j = 0; j < p; ++j) f += theta[2 + j] * x[i * p + j];
        const double z = std::log(times[i]) - log_scale;
        const double hz = std::exp(shape * z + f);
        const double d = events[i] ? 1.0 : 0.0;
        g[0] += d * (1.0 + shape * z) - hz * shape * z;
        g[1] += -d * shape + hz * shape;
        for (std::size_t j = 0; j < p; ++j) g[2 + j] += (d - hz) * x[i * p + j];
    }
    return g;
}

WeibullFitReport fit_weibull_aft(std::span<const double> x, std::size_t p,
                                 std::span<const double> times, const std::vector<bool>& events,
                                 const WeibullFitOptions& options) {
    const std::size_t n = times.size();
    if (events.size() != n || x.size() != n * p) {
        throw DataError("Weibull fit: design, times and events differ in size");
    }
    std::size_t n_events = 0;
    double mean_log = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(times[i] > 0.0) || !std::isfinite(times[i])) {
            throw DataError("Weibull fit: observed times must be positive");
        }
        n_events += events[i] ? 1 : 0;
        mean_log += std::log(times[i]);
    }
    if (n_events < p + 2) {
        throw DataError("Weibull fit needs at least " + std::to_string(p + 2) + " events, got " +
                        std::to_string(n_events));
    }
    mean_log /= static_cast<double>(n);
    double var_log = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = std::log(times[i]) - mean_log;
        var_log += d * d;
    }
    var_log /= static_cast<double>(std::max<std::size_t>(1, n - 1));

    // Log-time moments of an extreme-value law: sd = pi / (sqrt(6) shape),
    // mean = log(scale) - euler_gamma / shape.
    const double sd = std::sqrt(std::max(var_log, 1e-12));
    const double shape0 = std::clamp(std::numbers::pi / (std::sqrt(6.0) * sd), 0.05, 50.0);
    const std::size_t dim = p + 2;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    theta[0] = std::log(shape0);
    theta[1] = mean_log + std::numbers::egamma / shape0;

    auto value = [&](const Eigen::VectorXd& th) {
        return weibull_log_likelihood({th.data(), dim}, x, p, times, events);
    };
    auto gradient = [&](const Eigen::VectorXd& th) {
        const auto g = weibull_score({th.data(), dim}, x, p, times, events);
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(dim)));
    };

    // Negative Hessian by central differences of the analytic score.
    auto neg_hessian = [&](const Eigen::VectorXd& th) {
        const auto d = static_cast<Eigen::Index>(dim);
        Eigen::MatrixXd h(d, d);
        for (Eigen::Index j = 0; j < d; ++j) {
            const double step = 1e-5 * std::max(1.0, std::abs(th[j]));
            Eigen::VectorXd up = th, down = th;
            up[j] += step;
            down[j] -= step;
            h.col(j) = -(gradient(up) - gradient(down)) / (2.0 * step);
        }
        return Eigen::MatrixXd(0.5 * (h + h.transpose()));
    };

    WeibullFitReport report;
    double ll = value(theta);
    Eigen::VectorXd g = gradient(theta);
    report.trace.push_back(ll);
    const double tol = options.gradient_tolerance * static_cast<double>(n);
    bool converged = g.lpNorm<Eigen::Infinity>() <= tol;
    double damping = 0.0;
    std::size_t iter = 0;
    for (; iter < options.max_iterations && !converged; ++iter) {
        const Eigen::MatrixXd h = neg_hessian(theta);
        const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(h.rows(), h.cols());
        const double diag = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
        bool accepted = false;
        Eigen::VectorXd next;
        double next_ll = 0.0;
        // Damped Newton: raise the ridge until the step is an ascent step that improves ll.
        for (int attempt = 0; attempt < 60; ++attempt) {
            Eigen::LLT<Eigen::MatrixXd> llt(h + damping * diag * eye);
            if (llt.info() == Eigen::Success) {
                const Eigen::VectorXd dir = llt.solve(g);
                next = theta + dir;
                next_ll = value(next);
                if (std::isfinite(next_ll) && next_ll >= ll) {
                    accepted = true;
                    break;
                }
                // Near the optimum the gain falls below the rounding of ll; judge by the score.
                if (std::isfinite(next_ll) && ll - next_ll <= 1e-12 * std::abs(ll)) {
                    const Eigen::VectorXd ng = gradient(next);
                    if (ng.lpNorm<Eigen::Infinity>() < g.lpNorm<Eigen::Infinity>()) {
                        next_ll = ll;
                        accepted = true;
                        break;
                    }
                }
            }
            damping = damping == 0.0 ? 1e-6 : damping * 10.0;
        }
        if (!accepted) {
            // No ascent left at machine precision; accept if the score is already tiny.
            converged = g.lpNorm<Eigen::Infinity>() <= 1e3 * tol;
            break;
        }
        damping = damping * 0.1 < 1e-9 ? 0.0 : damping * 0.1;
        theta = next;
        ll = next_ll;
        g = gradient(theta);
        report.trace.push_back(ll);
        converged = g.lpNorm<Eigen::Infinity>() <= tol;
    }
    report.iterations = iter;
    report.gradient_norm = g.norm();
    report.log_likelihood = ll;
    if (!converged) {
        throw NumericalError("Weibull fit did not converge after " + std::to_string(iter) +
                             " iterations; final gradient norm " + std::to_string(report.gradient_norm));
    }
    report.model.shape = std::exp(theta[0]);
    report.model.scale = std::exp(theta[1]);
    report.model.coef.assign(theta.data() + 2, theta.data() + dim);
    return report;
}

}  // namespace survcate
