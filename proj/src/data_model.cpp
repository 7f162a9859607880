#include "survcate/data_model.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

#include "survcate/error.hpp"
#include "survcate/io.hpp"

namespace survcate {

namespace {

std::string kind_name(CovariateKind k) {
    switch (k) {
        case CovariateKind::Continuous: return "continuous";
        case CovariateKind::Binary: return "binary";
        case CovariateKind::Categorical: return "categorical";
    }
    return "continuous";
}

CovariateKind parse_kind(const std::string& s) {
    if (s == "continuous") return CovariateKind::Continuous;
    if (s == "binary") return CovariateKind::Binary;
    if (s == "categorical") return CovariateKind::Categorical;
    throw ConfigError("unknown covariate kind '" + s + "'");
}

std::string row_label(std::size_t row) { return "row " + std::to_string(row + 1); }

void validate_value(const Covariate& c, double v, std::size_t row) {
    if (!std::isfinite(v)) {
        throw DataError(row_label(row) + ": covariate '" + c.name + "' is missing or not finite");
    }
    if (c.kind == CovariateKind::Binary && v != 0.0 && v != 1.0 && v != -1.0) {
        throw DataError(row_label(row) + ": binary covariate '" + c.name +
                        "' must be 0/1 or -1/+1");
    }
    if (c.kind == CovariateKind::Categorical) {
        if (v < 0.0 || v != std::floor(v) || v >= static_cast<double>(c.levels.size())) {
            throw DataError(row_label(row) + ": categorical covariate '" + c.name +
                            "' has an invalid level index");
        }
    }
}

}  // namespace

CovariateSchema::CovariateSchema(std::vector<Covariate> covariates)
    : covariates_(std::move(covariates)) {
    std::set<std::string> seen;
    for (const auto& c : covariates_) {
        if (c.name.empty()) throw ConfigError("covariate names must be nonempty");
        if (c.name == "time" || c.name == "event" || c.name == "treatment") {
            throw ConfigError("covariate name '" + c.name + "' collides with a reserved column");
        }
        if (!seen.insert(c.name).second) throw ConfigError("duplicate covariate '" + c.name + "'");
        if (c.kind == CovariateKind::Categorical) {
            if (c.levels.empty()) {
                throw ConfigError("categorical covariate '" + c.name + "' declares no levels");
            }
            std::set<std::string> lv(c.levels.begin(), c.levels.end());
            if (lv.size() != c.levels.size()) {
                throw ConfigError("categorical covariate '" + c.name + "' repeats a level");
            }
        } else if (!c.levels.empty()) {
            throw ConfigError("covariate '" + c.name + "' declares levels but is not categorical");
        }
    }
}

std::optional<std::size_t> CovariateSchema::index_of(const std::string& name) const {
    for (std::size_t j = 0; j < covariates_.size(); ++j) {
        if (covariates_[j].name == name) return j;
    }
    return std::nullopt;
}

std::size_t CovariateSchema::design_width() const {
    std::size_t w = 0;
    for (const auto& c : covariates_) {
        w += c.kind == CovariateKind::Categorical ? c.levels.size() : 1;
    }
    return w;
}

std::vector<std::size_t> CovariateSchema::design_groups() const {
    std::vector<std::size_t> groups;
    for (std::size_t j = 0; j < covariates_.size(); ++j) {
        const auto& c = covariates_[j];
        const std::size_t width = c.kind == CovariateKind::Categorical ? c.levels.size() : 1;
        groups.insert(groups.end(), width, j);
    }
    return groups;
}

std::vector<std::string> CovariateSchema::design_names() const {
    std::vector<std::string> names;
    for (const auto& c : covariates_) {
        if (c.kind == CovariateKind::Categorical) {
            for (const auto& level : c.levels) names.push_back(c.name + "=" + level);
        } else {
            names.push_back(c.name);
        }
    }
    return names;
}

nlohmann::json CovariateSchema::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : covariates_) {
        nlohmann::json item{{"name", c.name}, {"kind", kind_name(c.kind)}};
        if (c.kind == CovariateKind::Categorical) item["levels"] = c.levels;
        arr.push_back(std::move(item));
    }
    return nlohmann::json{{"covariates", std::move(arr)}};
}

CovariateSchema CovariateSchema::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("covariates") || !j["covariates"].is_array()) {
        throw ConfigError("schema must be an object with a 'covariates' array");
    }
    for (const auto& [key, _] : j.items()) {
        if (key != "covariates") throw ConfigError("unknown schema key '" + key + "'");
    }
    std::vector<Covariate> out;
    for (const auto& item : j["covariates"]) {
        if (!item.is_object()) throw ConfigError("schema covariate entries must be objects");
        Covariate c;
        for (const auto& [key, value] : item.items()) {
            if (key == "name") {
                c.name = value.get<std::string>();
            } else if (key == "kind") {
                c.kind = parse_kind(value.get<std::string>());
            } else if (key == "levels") {
                c.levels = value.get<std::vector<std::string>>();
            } else {
                throw ConfigError("unknown schema covariate key '" + key + "'");
            }
        }
        out.push_back(std::move(c));
    }
    return CovariateSchema(std::move(out));
}

TargetTime::TargetTime(double t_star) : t_star_(t_star) {
    if (!(t_star > 0.0) || !std::isfinite(t_star)) {
        throw ConfigError("target time must be positive and finite");
    }
}

Cohort::Cohort(CovariateSchema schema, std::vector<SurvivalRecord> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
    if (records_.empty()) throw DataError("cohort must contain at least one record");
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (!std::isfinite(r.time) || r.time < 0.0) {
            throw DataError(row_label(i) + ": observed time must be finite and nonnegative");
        }
        if (r.treatment != 0 && r.treatment != 1) {
            throw DataError(row_label(i) + ": treatment must be 0 or 1");
        }
        if (r.x.size() != schema_.size()) {
            throw DataError(row_label(i) + ": covariate vector length does not match schema");
        }
        for (std::size_t j = 0; j < r.x.size(); ++j) validate_value(schema_[j], r.x[j], i);
    }
}

std::vector<double> Cohort::times() const {
    std::vector<double> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.time);
    return out;
}

std::vector<bool> Cohort::events() const {
    std::vector<bool> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.event);
    return out;
}

std::vector<int> Cohort::treatments() const {
    std::vector<int> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.treatment);
    return out;
}

double Cohort::max_time() const {
    double m = 0.0;
    for (const auto& r : records_) m = std::max(m, r.time);
    return m;
}

std::vector<double> expand_covariates(const CovariateSchema& schema, std::span<const double> x) {
    if (x.size() != schema.size()) {
        throw DataError("covariate vector of length " + std::to_string(x.size()) +
                        " does not conform to a schema of " + std::to_string(schema.size()));
    }
    std::vector<double> out;
    out.reserve(schema.design_width());
    for (std::size_t j = 0; j < schema.size(); ++j) {
        const auto& c = schema[j];
        if (c.kind == CovariateKind::Categorical) {
            for (std::size_t l = 0; l < c.levels.size(); ++l) {
                out.push_back(static_cast<double>(l) == x[j] ? 1.0 : 0.0);
            }
        } else {
            out.push_back(x[j]);
        }
    }
    return out;
}

std::vector<double> Cohort::design_matrix() const {
    std::vector<double> out;
    out.reserve(records_.size() * schema_.design_width());
    for (const auto& r : records_) {
        const auto row = expand_covariates(schema_, r.x);
        out.insert(out.end(), row.begin(), row.end());
    }
    return out;
}

Cohort Cohort::subset(std::span<const std::size_t> rows) const {
    std::vector<SurvivalRecord> out;
    out.reserve(rows.size());
    for (std::size_t i : rows) out.push_back(records_.at(i));
    return Cohort(schema_, std::move(out));
}

CompleteCaseView complete_case_view(const Cohort& cohort, const TargetTime& t) {
    CompleteCaseView view;
    const double ts = t.value();
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const auto& r = cohort[i];
        if (r.time >= ts) {
            view.indices.push_back(i);
            view.survival_indicator.push_back(true);
        } else if (r.event) {
            view.indices.push_back(i);
            view.survival_indicator.push_back(false);
        }
    }
    return view;
}

double censoring_min_time(const SurvivalRecord& record, const TargetTime& t) {
    if (!record.event && record.time < t.value()) {
        throw std::logic_error("censoring_min_time called on a record censored before t*");
    }
    return std::min(record.time, t.value());
}

namespace {

std::size_t require_column(const io::Table& table, const std::string& name) {
    const auto col = table.column(name);
    if (!col) throw DataError("missing column '" + name + "'");
    return *col;
}

void check_width(const io::Table& table, std::size_t i) {
    if (table.rows[i].size() != table.header.size()) {
        throw DataError(row_label(i) + ": expected " + std::to_string(table.header.size()) +
                        " fields, found " + std::to_string(table.rows[i].size()));
    }
}

double parse_number(const std::vector<std::string>& row, std::size_t col, std::size_t i,
                    const std::string& what) {
    const auto v = io::parse_double(row[col]);
    if (!v) throw DataError(row_label(i) + ": missing or non-numeric " + what);
    return *v;
}

std::vector<double> parse_covariates(const CovariateSchema& schema,
                                     const std::vector<std::string>& row,
                                     const std::vector<std::size_t>& cov_cols, std::size_t i) {
    std::vector<double> x;
    x.reserve(schema.size());
    for (std::size_t j = 0; j < schema.size(); ++j) {
        const auto& c = schema[j];
        const std::string& field = row[cov_cols[j]];
        if (c.kind == CovariateKind::Categorical) {
            if (field.empty()) {
                throw DataError(row_label(i) + ": missing value for '" + c.name + "'");
            }
            std::size_t level = c.levels.size();
            for (std::size_t l = 0; l < c.levels.size(); ++l) {
                if (c.levels[l] == field) level = l;
            }
            if (level == c.levels.size()) {
                throw DataError(row_label(i) + ": unknown level '" + field + "' for '" + c.name +
                                "'");
            }
            x.push_back(static_cast<double>(level));
        } else {
            x.push_back(parse_number(row, cov_cols[j], i, "covariate '" + c.name + "'"));
            validate_value(c, x.back(), i);
        }
    }
    return x;
}

std::vector<std::size_t> covariate_columns(const io::Table& table, const CovariateSchema& schema) {
    std::vector<std::size_t> cols;
    for (const auto& c : schema.covariates()) cols.push_back(require_column(table, c.name));
    return cols;
}

}  // namespace

Cohort ingest_cohort(std::istream& in, const CovariateSchema& schema) {
    const io::Table table = io::read_table(in);
    const std::size_t time_col = require_column(table, "time");
    const std::size_t event_col = require_column(table, "event");
    const std::size_t treat_col = require_column(table, "treatment");
    const auto cov_cols = covariate_columns(table, schema);

    std::vector<SurvivalRecord> records;
    records.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        check_width(table, i);
        const auto& row = table.rows[i];
        SurvivalRecord r;
        r.time = parse_number(row, time_col, i, "time");
        if (r.time < 0.0) throw DataError(row_label(i) + ": negative observed time");
        const double ev = parse_number(row, event_col, i, "event");
        if (ev != 0.0 && ev != 1.0) throw DataError(row_label(i) + ": event must be 0 or 1");
        r.event = ev == 1.0;
        const double a = parse_number(row, treat_col, i, "treatment");
        if (a != 0.0 && a != 1.0) throw DataError(row_label(i) + ": treatment must be 0 or 1");
        r.treatment = static_cast<int>(a);
        r.x = parse_covariates(schema, row, cov_cols, i);
        records.push_back(std::move(r));
    }
    return Cohort(schema, std::move(records));
}

std::vector<std::vector<double>> ingest_covariates(std::istream& in,
                                                   const CovariateSchema& schema) {
    const io::Table table = io::read_table(in);
    const auto cov_cols = covariate_columns(table, schema);
    std::vector<std::vector<double>> rows;
    rows.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        check_width(table, i);
        rows.push_back(parse_covariates(schema, table.rows[i], cov_cols, i));
    }
    if (rows.empty()) throw DataError("no data rows");
    return rows;
}

std::vector<std::vector<double>> read_covariates_csv(const std::string& path,
                                                     const CovariateSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open covariate file '" + path + "'");
    return ingest_covariates(in, schema);
}

Cohort read_cohort_csv(const std::string& path, const CovariateSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open cohort file '" + path + "'");
    return ingest_cohort(in, schema);
}

void write_cohort_csv(std::ostream& out, const Cohort& cohort) {
    const auto& schema = cohort.schema();
    out << "time,event,treatment";
    for (const auto& c : schema.covariates()) out << ',' << c.name;
    out << '\n';
    for (const auto& r : cohort.records()) {
        out << io::format_double(r.time) << ',' << (r.event ? 1 : 0) << ',' << r.treatment;
        for (std::size_t j = 0; j < schema.size(); ++j) {
            out << ',';
            if (schema[j].kind == CovariateKind::Categorical) {
                out << schema[j].levels[static_cast<std::size_t>(r.x[j])];
            } else {
                out << io::format_double(r.x[j]);
            }
        }
        out << '\n';
    }
}

CovariateSchema read_schema_json(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("schema '" + path + "' is not valid JSON: " + e.what());
    }
    return CovariateSchema::from_json(j);
}

}  // namespace survcate
