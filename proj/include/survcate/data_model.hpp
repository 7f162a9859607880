#pragma once
// Survival cohort types, covariate schema, and the complete-case contract.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace survcate {

enum class CovariateKind { Continuous, Binary, Categorical };

struct Covariate {
    std::string name;
    CovariateKind kind = CovariateKind::Continuous;
    std::vector<std::string> levels;  // categorical only

    bool operator==(const Covariate&) const = default;
};

// Ordered covariate declarations. Categorical values are stored as level indices.
class CovariateSchema {
public:
    CovariateSchema() = default;
    explicit CovariateSchema(std::vector<Covariate> covariates);

    std::size_t size() const { return covariates_.size(); }
    const Covariate& operator[](std::size_t j) const { return covariates_[j]; }
    const std::vector<Covariate>& covariates() const { return covariates_; }
    std::optional<std::size_t> index_of(const std::string& name) const;

    // Width after one-hot expansion of categorical covariates.
    std::size_t design_width() const;
    // Original covariate index owning each design column.
    std::vector<std::size_t> design_groups() const;
    std::vector<std::string> design_names() const;

    nlohmann::json to_json() const;
    static CovariateSchema from_json(const nlohmann::json& j);

    bool operator==(const CovariateSchema&) const = default;

private:
    std::vector<Covariate> covariates_;
};

struct SurvivalRecord {
    double time = 0.0;        // observed U = min(T, C)
    bool event = false;       // delta = I(T < C)
    int treatment = 0;        // A in {0, 1}
    std::vector<double> x;    // schema order; categorical as level index

    bool operator==(const SurvivalRecord&) const = default;
};

class TargetTime {
public:
    explicit TargetTime(double t_star);
    double value() const { return t_star_; }

private:
    double t_star_;
};

// Validated, immutable cohort.
class Cohort {
public:
    Cohort(CovariateSchema schema, std::vector<SurvivalRecord> records);

    const CovariateSchema& schema() const { return schema_; }
    const std::vector<SurvivalRecord>& records() const { return records_; }
    const SurvivalRecord& operator[](std::size_t i) const { return records_[i]; }
    std::size_t size() const { return records_.size(); }

    std::vector<double> times() const;
    std::vector<bool> events() const;
    std::vector<int> treatments() const;
    double max_time() const;

    // Row-major n x design_width() matrix with categorical covariates one-hot expanded.
    std::vector<double> design_matrix() const;

    Cohort subset(std::span<const std::size_t> rows) const;

    bool operator==(const Cohort&) const = default;

private:
    CovariateSchema schema_;
    std::vector<SurvivalRecord> records_;
};

// One-hot expansion of a single schema-ordered covariate vector.
std::vector<double> expand_covariates(const CovariateSchema& schema, std::span<const double> x);

struct CompleteCaseView {
    std::vector<std::size_t> indices;
    std::vector<bool> survival_indicator;  // I(T > t*) for each included row
    std::size_t n_complete() const { return indices.size(); }
};

// Included iff I(T > t*) is determined; ties U == t* count as survivors.
CompleteCaseView complete_case_view(const Cohort& cohort, const TargetTime& t);

// min(U, t*) for a complete-case record; throws std::logic_error for rows censored before t*.
double censoring_min_time(const SurvivalRecord& record, const TargetTime& t);

// Delimited text: header names `time`, `event`, `treatment` and every schema covariate,
// in any order. Extra columns are ignored. Errors name the 1-based data row.
Cohort ingest_cohort(std::istream& in, const CovariateSchema& schema);
Cohort read_cohort_csv(const std::string& path, const CovariateSchema& schema);
// Covariate columns only (schema order), for prediction and explanation inputs.
std::vector<std::vector<double>> ingest_covariates(std::istream& in, const CovariateSchema& schema);
std::vector<std::vector<double>> read_covariates_csv(const std::string& path,
                                                     const CovariateSchema& schema);
void write_cohort_csv(std::ostream& out, const Cohort& cohort);

CovariateSchema read_schema_json(const std::string& path);

}  // namespace survcate
