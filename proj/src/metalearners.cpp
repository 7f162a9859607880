#include "survcate/metalearners.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "survcate/error.hpp"
#include "survcate/kernels.hpp"
#include "survcate/rng.hpp"

namespace survcate {

std::string_view learner_name(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::X: return "X";
        case LearnerKind::M: return "M";
        case LearnerKind::DR: return "DR";
        case LearnerKind::D: return "D";
        case LearnerKind::DEA: return "DEA";
        case LearnerKind::R: return "R";
    }
    return "?";
}

std::optional<LearnerKind> parse_learner(std::string_view name) {
    for (LearnerKind k : kAllLearners) {
        if (learner_name(k) == name) return k;
    }
    return std::nullopt;
}

NuisanceNeeds learner_needs(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::X: return {true, true, false};
        case LearnerKind::M: return {true, false, false};
        case LearnerKind::DR: return {true, true, false};
        case LearnerKind::D: return {true, false, false};
        case LearnerKind::DEA: return {true, false, true};
        case LearnerKind::R: return {true, false, true};
    }
    return {};
}

namespace {

void require_finite(const std::vector<double>& v, std::span<const std::size_t> rows,
                    const char* what, LearnerKind learner) {
    for (std::size_t i : rows) {
        if (!std::isfinite(v.at(i))) {
            throw DataError(std::string(learner_name(learner)) + "-learner requires " + what +
                            ", which the nuisance bundle does not provide");
        }
    }
}

kernels::PseudoRule rule_for(LearnerKind k) {
    switch (k) {
        case LearnerKind::M: return kernels::PseudoRule::M;
        case LearnerKind::DR: return kernels::PseudoRule::DR;
        case LearnerKind::D: return kernels::PseudoRule::D;
        case LearnerKind::DEA: return kernels::PseudoRule::DEA;
        case LearnerKind::R: return kernels::PseudoRule::R;
        case LearnerKind::X: break;
    }
    throw std::logic_error("X-learner has no elementwise pseudo-outcome rule");
}

}  // namespace

PseudoOutcomeSet build_pseudo_outcomes(const NuisanceBundle& bundle, const CompleteCaseView& view,
                                       LearnerKind learner, double r_epsilon) {
    const std::span<const std::size_t> rows = view.indices;
    const NuisanceNeeds needs = learner_needs(learner);
    if (learner != LearnerKind::X && needs.propensity) {
        require_finite(bundle.propensity, rows, "propensity scores", learner);
    }
    if (needs.arm_survival) {
        require_finite(bundle.surv0, rows, "S0(t*|x)", learner);
        require_finite(bundle.surv1, rows, "S1(t*|x)", learner);
    }
    if (needs.pooled_survival) require_finite(bundle.surv_pooled, rows, "S(t*|x)", learner);

    const std::size_t m = rows.size();
    std::vector<double> a(m), ind(m), e(m), s0(m), s1(m), s(m);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t i = rows[k];
        a[k] = bundle.treatment.at(i);
        ind[k] = view.survival_indicator[k] ? 1.0 : 0.0;
        e[k] = bundle.propensity.at(i);
        s0[k] = bundle.surv0.at(i);
        s1[k] = bundle.surv1.at(i);
        s[k] = bundle.surv_pooled.at(i);
    }

    PseudoOutcomeSet out;
    out.learner = learner;
    std::vector<double> y(m), w(m);
    if (learner == LearnerKind::X) {
        for (std::size_t k = 0; k < m; ++k) {
            y[k] = a[k] == 1.0 ? ind[k] - s0[k] : s1[k] - ind[k];
            w[k] = 1.0;
        }
    } else {
        kernels::pseudo_outcomes(rule_for(learner), {a, ind, e, s0, s1, s}, y, w);
    }
    for (std::size_t k = 0; k < m; ++k) {
        if (learner == LearnerKind::R && std::abs(a[k] - e[k]) < r_epsilon) {
            ++out.n_dropped;
            continue;
        }
        const std::size_t i = rows[k];
        out.rows.push_back(i);
        out.arm.push_back(bundle.treatment[i]);
        out.indicator.push_back(ind[k]);
        out.y.push_back(y[k]);
        out.w_m.push_back(w[k]);
        out.w_c.push_back(bundle.censoring_weight.at(i));
    }
    return out;
}

std::vector<double> pseudo_loss_terms(const PseudoOutcomeSet& pseudo, std::span<const double> tau) {
    if (tau.size() != pseudo.size()) throw DataError("one tau value per pseudo-outcome row expected");
    std::vector<double> out(pseudo.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double r = pseudo.y[k] - tau[k];
        out[k] = pseudo.w_m[k] * r * r;
    }
    return out;
}

double RidgeModel::predict(std::span<const double> x) const {
    if (x.size() != coef.size()) throw DataError("ridge model covariate count mismatch");
    double f = intercept;
    for (std::size_t j = 0; j < coef.size(); ++j) f += coef[j] * x[j];
    return f;
}

RidgeModel RidgeModel::fit(const DesignView& x, std::span<const double> y,
                           std::span<const double> w, double lambda) {
    const std::size_t p = x.n_cols;
    const auto dim = static_cast<Eigen::Index>(p + 1);
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(dim);
    double total = 0.0;
    Eigen::VectorXd z(dim);
    for (std::size_t i = 0; i < x.n_rows; ++i) {
        if (w[i] <= 0.0) continue;
        z[0] = 1.0;
        for (std::size_t j = 0; j < p; ++j) z[static_cast<Eigen::Index>(j + 1)] = x.at(i, j);
        xtx.noalias() += w[i] * z * z.transpose();
        xty.noalias() += w[i] * y[i] * z;
        total += w[i];
    }
    if (!(total > 0.0)) throw DataError("ridge regression: all weights are zero");
    for (Eigen::Index j = 1; j < dim; ++j) xtx(j, j) += lambda * total;
    const Eigen::VectorXd beta = xtx.ldlt().solve(xty);
    RidgeModel m;
    m.intercept = beta[0];
    m.coef.assign(beta.data() + 1, beta.data() + dim);
    return m;
}

CateModel::CateModel(LearnerKind learner, double t_star, CovariateSchema schema,
                     std::vector<CateRegressor> regressors,
                     std::optional<PropensityForest> propensity)
    : learner_(learner),
      t_star_(t_star),
      schema_(std::move(schema)),
      regressors_(std::move(regressors)),
      propensity_(std::move(propensity)) {
    const std::size_t expected = learner_ == LearnerKind::X ? 2 : 1;
    if (regressors_.size() != expected) throw std::logic_error("wrong number of CATE regressors");
    if (learner_ == LearnerKind::X && !propensity_) {
        throw std::logic_error("X-learner model needs a propensity model");
    }
}

namespace {

double regressor_predict(const CateRegressor& r, std::span<const double> x) {
    return std::visit([&](const auto& m) { return m.predict(x); }, r);
}

}  // namespace

double CateModel::predict_raw(std::span<const double> design_row) const {
    if (regressors_.empty()) throw std::logic_error("CATE model is not fitted");
    if (design_row.size() != schema_.design_width()) {
        throw DataError("covariate vector does not conform to the model schema");
    }
    if (learner_ != LearnerKind::X) return regressor_predict(regressors_[0], design_row);
    const double e = propensity_->predict(design_row);
    return e * regressor_predict(regressors_[0], design_row) +
           (1.0 - e) * regressor_predict(regressors_[1], design_row);
}

double CateModel::predict_design(std::span<const double> design_row) const {
    return std::clamp(predict_raw(design_row), -1.0, 1.0);
}

double CateModel::predict(std::span<const double> x) const {
    return predict_design(expand_covariates(schema_, x));
}

double CateModel::combine(std::span<const double> v) const {
    if (learner_ != LearnerKind::X) return std::clamp(v[0], -1.0, 1.0);
    const double clip = propensity_->clip();
    const double e = std::clamp(v[2], clip, 1.0 - clip);
    return std::clamp(e * v[0] + (1.0 - e) * v[1], -1.0, 1.0);
}

std::vector<const RegressionForest*> CateModel::ensemble_parts() const {
    std::vector<const RegressionForest*> parts;
    for (const auto& r : regressors_) {
        const auto* f = std::get_if<RegressionForest>(&r);
        if (f == nullptr) return {};
        parts.push_back(f);
    }
    if (learner_ == LearnerKind::X) parts.push_back(&propensity_->forest());
    return parts;
}

nlohmann::json CateModel::to_json() const {
    nlohmann::json regs = nlohmann::json::array();
    for (const auto& r : regressors_) {
        if (const auto* f = std::get_if<RegressionForest>(&r)) {
            regs.push_back(f->to_json());
        } else {
            const auto& ridge = std::get<RidgeModel>(r);
            regs.push_back({{"kind", "ridge"}, {"intercept", ridge.intercept}, {"coef", ridge.coef}});
        }
    }
    nlohmann::json j{{"format", "survcate-cate-model"},
                     {"version", 1},
                     {"learner", learner_name(learner_)},
                     {"t_star", t_star_},
                     {"schema", schema_.to_json()},
                     {"regressors", std::move(regs)}};
    if (propensity_) j["propensity"] = propensity_->to_json();
    return j;
}

CateModel CateModel::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "survcate-cate-model") throw DataError("not a CATE model file");
    if (j.at("version").get<int>() != 1) throw DataError("unsupported CATE model version");
    const auto learner = parse_learner(j.at("learner").get<std::string>());
    if (!learner) throw DataError("model names an unknown learner");
    std::vector<CateRegressor> regs;
    for (const auto& r : j.at("regressors")) {
        if (r.at("kind") == "ridge") {
            regs.emplace_back(RidgeModel{r.at("intercept").get<double>(),
                                         r.at("coef").get<std::vector<double>>()});
        } else {
            regs.emplace_back(RegressionForest::from_json(r));
        }
    }
    std::optional<PropensityForest> prop;
    if (j.contains("propensity")) prop = PropensityForest::from_json(j.at("propensity"));
    return CateModel(*learner, j.at("t_star").get<double>(),
                     CovariateSchema::from_json(j.at("schema")), std::move(regs), std::move(prop));
}

namespace {

CateRegressor fit_regressor(const std::vector<double>& design, std::size_t p,
                            const std::vector<std::string>& names, const PseudoOutcomeSet& pseudo,
                            const std::vector<std::size_t>& subset, const RegressorParams& params,
                            std::uint64_t seed) {
    std::vector<double> xs, y, w;
    xs.reserve(subset.size() * p);
    for (std::size_t k : subset) {
        const std::size_t i = pseudo.rows[k];
        xs.insert(xs.end(), design.begin() + static_cast<std::ptrdiff_t>(i * p),
                  design.begin() + static_cast<std::ptrdiff_t>((i + 1) * p));
        y.push_back(pseudo.y[k]);
        w.push_back(pseudo.w_c[k] * pseudo.w_m[k]);
    }
    std::vector<double> positive;
    for (double v : w) {
        if (v > 0.0) positive.push_back(v);
    }
    if (positive.empty()) throw DataError("CATE regression: all weights are zero");
    if (positive.size() < 2) throw DataError("CATE regression: a single weighted row is degenerate");
    const DesignView view{xs, subset.size(), p, names};
    if (params.kind == RegressorKind::Ridge) return RidgeModel::fit(view, y, w, params.ridge_lambda);
    ForestParams fp = params.forest;
    fp.seed = seed;
    if (fp.min_leaf_weight <= 0.0) {
        auto mid = positive.begin() + static_cast<std::ptrdiff_t>(positive.size() / 2);
        std::nth_element(positive.begin(), mid, positive.end());
        fp.min_leaf_weight = params.min_leaf_weight_factor * *mid;
    }
    return RegressionForest::fit(view, y, w, fp);
}

}  // namespace

CateModel fit_cate(const Cohort& cohort, const TargetTime& t, const PseudoOutcomeSet& pseudo,
                   const RegressorParams& params, std::uint64_t seed,
                   const PropensityForest* propensity) {
    if (pseudo.size() == 0) throw DataError("CATE regression: no pseudo-outcome rows");
    const auto design = cohort.design_matrix();
    const auto names = cohort.schema().design_names();
    const std::size_t p = cohort.schema().design_width();
    std::vector<CateRegressor> regs;
    if (pseudo.learner == LearnerKind::X) {
        if (propensity == nullptr) throw DataError("X-learner needs a fitted propensity model");
        for (int arm = 0; arm <= 1; ++arm) {
            std::vector<std::size_t> subset;
            for (std::size_t k = 0; k < pseudo.size(); ++k) {
                if (pseudo.arm[k] == arm) subset.push_back(k);
            }
            if (subset.empty()) {
                throw DataError("X-learner: arm " + std::to_string(arm) +
                                " has no complete-case rows");
            }
            regs.push_back(fit_regressor(design, p, names, pseudo, subset, params,
                                         derive_seed(seed, static_cast<std::uint64_t>(arm))));
        }
        return CateModel(pseudo.learner, t.value(), cohort.schema(), std::move(regs), *propensity);
    }
    std::vector<std::size_t> subset(pseudo.size());
    for (std::size_t k = 0; k < subset.size(); ++k) subset[k] = k;
    regs.push_back(fit_regressor(design, p, names, pseudo, subset, params, seed));
    return CateModel(pseudo.learner, t.value(), cohort.schema(), std::move(regs), std::nullopt);
}

MetaLearnerFit fit_metalearner(const Cohort& cohort, const TargetTime& t, LearnerKind learner,
                               const MetaLearnerConfig& config) {
    NuisanceConfig nc = config.nuisance;
    nc.seed = derive_seed(config.seed, 1);
    auto nuisance = build_nuisance_bundle(cohort, t, nc, learner_needs(learner));
    const auto view = complete_case_view(cohort, t);
    auto pseudo = build_pseudo_outcomes(nuisance.bundle, view, learner, config.r_epsilon);
    const PropensityForest* prop =
        nuisance.models.propensity ? &*nuisance.models.propensity : nullptr;
    auto model = fit_cate(cohort, t, pseudo, config.regressor, derive_seed(config.seed, 2), prop);
    return {std::move(model), std::move(nuisance.bundle), std::move(pseudo)};
}

std::vector<std::vector<std::size_t>> stratified_folds(const Cohort& cohort, std::size_t k,
                                                       std::uint64_t seed) {
    if (k < 2) throw ConfigError("cross-fitting needs at least 2 folds");
    if (k > cohort.size()) throw ConfigError("more folds than subjects");
    std::vector<std::size_t> strata[4];
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        strata[cohort[i].treatment * 2 + (cohort[i].event ? 1 : 0)].push_back(i);
    }
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t next = 0;
    for (auto& s : strata) {
        for (std::size_t i = s.size(); i > 1; --i) std::swap(s[i - 1], s[uniform_index(rng, i)]);
        for (std::size_t i : s) folds[next++ % k].push_back(i);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

CrossFitResult cross_fit_cate(const Cohort& cohort, const TargetTime& t, LearnerKind learner,
                              std::size_t k_folds, const MetaLearnerConfig& config) {
    auto training_ok = [&](const std::vector<std::vector<std::size_t>>& folds) {
        for (const auto& held : folds) {
            std::vector<char> out(cohort.size(), 0);
            for (std::size_t i : held) out[i] = 1;
            bool arm[2] = {false, false};
            bool event = false;
            for (std::size_t i = 0; i < cohort.size(); ++i) {
                if (out[i]) continue;
                arm[cohort[i].treatment] = true;
                event = event || cohort[i].event;
            }
            if (!arm[0] || !arm[1] || !event) return false;
        }
        return true;
    };
    auto folds = stratified_folds(cohort, k_folds, derive_seed(config.seed, 11));
    if (!training_ok(folds)) {
        folds = stratified_folds(cohort, k_folds, derive_seed(config.seed, 12));
        if (!training_ok(folds)) {
            throw DataError("cross-fitting: a training fold lacks a treatment arm or any event");
        }
    }
    CrossFitResult result;
    result.tau_hat.assign(cohort.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<char> held(cohort.size(), 0);
        for (std::size_t i : folds[f]) held[i] = 1;
        std::vector<std::size_t> train;
        for (std::size_t i = 0; i < cohort.size(); ++i) {
            if (!held[i]) train.push_back(i);
        }
        MetaLearnerConfig fold_config = config;
        fold_config.seed = derive_seed(config.seed, 100 + f);
        auto fit = fit_metalearner(cohort.subset(train), t, learner, fold_config);
        for (std::size_t i : folds[f]) result.tau_hat[i] = fit.model.predict(cohort[i].x);
        result.models.push_back(std::move(fit.model));
    }
    result.folds = std::move(folds);
    return result;
}

}  // namespace survcate
