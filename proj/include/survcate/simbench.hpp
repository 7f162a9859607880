#pragma once
// Simulation designs (three outcome scenarios x three treatment designs), closed-form
// oracles, evaluation metrics, and the multi-replicate learner benchmark.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "survcate/data_model.hpp"
#include "survcate/interpret.hpp"
#include "survcate/metalearners.hpp"

namespace survcate::sim {

enum class Scenario { S1, S2, S3 };
enum class Design { Rct, Balanced, Unbalanced };
enum class TargetRule { Median, P75 };
enum class BinaryCoding { Sign, ZeroOne };  // {-1, +1} or {0, 1}

std::string_view scenario_name(Scenario s);
std::string_view design_name(Design d);
std::string_view target_rule_name(TargetRule r);
std::string_view coding_name(BinaryCoding c);
Scenario parse_scenario(std::string_view s);
Design parse_design(std::string_view s);
TargetRule parse_target_rule(std::string_view s);
BinaryCoding parse_coding(std::string_view s);

struct ScenarioSpec {
    Scenario scenario = Scenario::S1;
    Design design = Design::Rct;
    std::size_t n_train = 1000;
    std::size_t n_test = 10000;
    TargetRule target_rule = TargetRule::Median;
    double censor_rate = 0.30;
    BinaryCoding coding = BinaryCoding::Sign;
    std::uint64_t seed = 1;

    void validate() const;
};

inline constexpr std::size_t kNumCovariates = 10;
inline constexpr double kShape = 2.0;
inline constexpr double kScale[2] = {18.0, 20.0};

CovariateSchema simulation_schema();

// Row-major n x 10: five N(0,1) columns then five sign-based binaries.
std::vector<double> generate_covariates(std::size_t n, std::uint64_t seed,
                                        BinaryCoding coding = BinaryCoding::Sign);

double true_propensity(Design design, std::span<const double> x);

struct TreatmentDraw {
    std::vector<int> treatment;
    std::vector<double> propensity;
};
TreatmentDraw assign_treatment(std::span<const double> x, Design design, std::uint64_t seed);

double baseline(Scenario s, std::span<const double> x);   // b(x)
double modifier(Scenario s, std::span<const double> x);   // h(x)
double linear_predictor(Scenario s, std::span<const double> x, int arm);  // b + h a

// Inverse transform: T = lambda_a (-log u / exp(f_a))^(1/eta).
double generator_time(Scenario s, int arm, std::span<const double> x, double u);
// exp(-(t/lambda_a)^eta exp(f_a)).
double oracle_survival(Scenario s, int arm, std::span<const double> x, double t);
// Same quantity obtained by inverting the generator numerically: the u with T(u) = t.
double oracle_survival_numeric(Scenario s, int arm, std::span<const double> x, double t);
double oracle_cate(Scenario s, std::span<const double> x, double t);

// Covariates that modify the effect (0-based indices).
std::vector<std::size_t> predictive_set(Scenario s);

struct SimulatedCohort {
    Cohort cohort;
    std::vector<double> x;  // row-major n x 10
    std::vector<double> propensity;
    std::vector<double> t0, t1, censor;
    double censor_rate_param = 0.0;
};

// Covariates, treatment, potential and censoring times with the given exponential rate.
SimulatedCohort simulate_cohort(const ScenarioSpec& spec, std::size_t n, double censor_rate_param,
                                std::uint64_t seed);

// Exponential rate giving the target censoring fraction, by bisection on a 1e5 probe.
double calibrate_censoring(Scenario s, Design d, double target_rate, std::uint64_t seed,
                           BinaryCoding coding = BinaryCoding::Sign);

// Lower empirical median (or 75th percentile) of observed times.
double target_time(std::span<const double> observed, TargetRule rule);

struct Oracle {
    std::vector<double> surv0, surv1, tau;
};
Oracle oracle_at(Scenario s, std::span<const double> x, double t);

struct PredictionError {
    double bias = 0.0;
    double binned_rmse = 0.0;
};
// Bins are contiguous slices of the stable rank order of tau_true; the first n % Q bins get
// one extra row. With fewer rows than bins, each row is its own bin.
PredictionError evaluate_predictions(std::span<const double> tau_hat,
                                     std::span<const double> tau_true, std::size_t bins = 50);

struct ClassificationMetrics {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::optional<double> acc, ppv, npv, sensitivity, specificity, f_score;
};
// Positive means tau > 0 for both truth and prediction.
ClassificationMetrics classification_metrics(std::span<const double> tau_hat,
                                             std::span<const double> tau_true);

// Benchmark learners: the six meta-learners plus "Weibull" (per-arm AFT fits) and
// "Oracle" (true CATE).
std::vector<std::string> all_bench_learners();

struct BenchConfig {
    ScenarioSpec spec;
    std::vector<std::string> learners = all_bench_learners();
    std::size_t reps = 10;
    MetaLearnerConfig learner;
    std::size_t bins = 50;
    std::size_t shap_subjects = 100;  // 0 disables attribution scores
    std::size_t shap_background = 100;
    std::size_t shap_exact_threshold = 10;
    std::size_t shap_budget = 2048;
    bool record_runtime = false;
};

struct ReplicateMetrics {
    std::size_t rep = 0;
    std::string learner;
    std::string error;  // empty on success
    double t_star = 0.0;
    PredictionError error_metrics;
    ClassificationMetrics classification;
    std::optional<double> attribution;
    double runtime_seconds = 0.0;
};

struct AggregateMetric {
    double mean = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
    std::size_t n_undefined = 0;
};

struct MetricReport {
    BenchConfig config;
    double censor_rate_param = 0.0;
    std::vector<ReplicateMetrics> replicates;
    // learner -> metric -> aggregate
    std::map<std::string, std::map<std::string, AggregateMetric>> aggregate;

    // Value of `metric` for (learner, rep), if defined.
    std::optional<double> value(const std::string& learner, std::size_t rep,
                                const std::string& metric) const;
};

inline const char* const kMetricNames[] = {"bias", "binned_rmse", "acc", "ppv", "npv",
                                           "sensitivity", "specificity", "f_score",
                                           "attribution_score"};

std::optional<double> metric_value(const ReplicateMetrics& r, std::string_view metric);

MetricReport run_benchmark(const BenchConfig& config);

void write_replicates_csv(std::ostream& out, const MetricReport& report);
nlohmann::json aggregate_json(const MetricReport& report);
// Long format: scenario, design, learner, rep, metric, value.
void write_plot_table_csv(std::ostream& out, const MetricReport& report);

}  // namespace survcate::sim
