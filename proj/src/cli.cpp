#include "survcate/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "survcate/error.hpp"
#include "survcate/interpret.hpp"
#include "survcate/io.hpp"
#include "survcate/metalearners.hpp"
#include "survcate/parallel.hpp"
#include "survcate/rng.hpp"
#include "survcate/simbench.hpp"
#include "survcate/subgroup.hpp"

namespace survcate::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A JSON object whose keys must all be consumed. Every value read (or defaulted) is
// mirrored into `effective`, which is echoed next to the outputs.
class Section {
public:
    Section(const json& j, json& effective, std::string path)
        : j_(j), eff_(effective), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
        if (!eff_.is_object()) eff_ = json::object();
    }

    bool has(const std::string& key) {
        return j_.contains(key);
    }

    template <class T>
    T get(const std::string& key, T fallback) {
        used_.insert(key);
        T v = j_.contains(key) ? convert<T>(key) : std::move(fallback);
        eff_[key] = v;
        return v;
    }

    template <class T>
    T require(const std::string& key) {
        used_.insert(key);
        if (!j_.contains(key)) throw ConfigError("missing required key '" + qualified(key) + "'");
        T v = convert<T>(key);
        eff_[key] = v;
        return v;
    }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    Section sub(const std::string& key) {
        used_.insert(key);
        static const json empty = json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, eff_[key], qualified(key));
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!used_.count(key)) throw ConfigError("unknown key '" + qualified(key) + "'");
        }
    }

    json& effective() { return eff_; }

private:
    template <class T>
    T convert(const std::string& key) const {
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("key '" + qualified(key) + "' has the wrong type");
        }
    }
    std::string qualified(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }
    std::string where() const { return path_.empty() ? "configuration" : "'" + path_ + "'"; }

    const json& j_;
    json& eff_;
    std::string path_;
    std::set<std::string> used_;
};

struct Context {
    std::string config_text;   // verbatim config file, or "{}"
    json config;
    json effective = json::object();
    fs::path base_dir;         // relative paths resolve against the config file
    fs::path out_dir;
    std::uint64_t seed = 1;
    std::ostream* log = nullptr;

    std::string path(const std::string& p) const {
        const fs::path q(p);
        return (q.is_absolute() ? q : base_dir / q).string();
    }
    std::string output(const std::string& name) const { return (out_dir / name).string(); }
};

void write_text(const Context& ctx, const std::string& name, const std::string& text) {
    io::write_file(ctx.output(name), text);
}

template <class Writer>
void write_with(const Context& ctx, const std::string& name, Writer&& writer) {
    std::ostringstream os;
    writer(os);
    write_text(ctx, name, os.str());
}

void write_json(const Context& ctx, const std::string& name, const json& j) {
    write_text(ctx, name, j.dump(2) + "\n");
}

std::size_t get_size(Section& s, const std::string& key, std::size_t fallback) {
    const auto v = s.get<std::int64_t>(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError("key '" + key + "' must be nonnegative");
    return static_cast<std::size_t>(v);
}

NuisanceConfig parse_nuisance(Section s) {
    NuisanceConfig c;
    const auto outcome = s.get<std::string>("outcome_model", "rsf");
    if (outcome == "rsf") {
        c.outcome_model = OutcomeModel::SurvivalForest;
    } else if (outcome == "weibull") {
        c.outcome_model = OutcomeModel::Weibull;
    } else {
        throw ConfigError("nuisance.outcome_model must be 'rsf' or 'weibull'");
    }
    {
        Section f = s.sub("survival_forest");
        c.survival_forest.n_trees = get_size(f, "n_trees", c.survival_forest.n_trees);
        c.survival_forest.mtry = get_size(f, "mtry", c.survival_forest.mtry);
        c.survival_forest.min_leaf_events =
            get_size(f, "min_leaf_events", c.survival_forest.min_leaf_events);
        c.survival_forest.max_depth = get_size(f, "max_depth", c.survival_forest.max_depth);
        c.survival_forest.split_candidates =
            get_size(f, "split_candidates", c.survival_forest.split_candidates);
        f.finish();
    }
    {
        Section f = s.sub("propensity_forest");
        c.propensity_forest.n_trees = get_size(f, "n_trees", c.propensity_forest.n_trees);
        c.propensity_forest.mtry = get_size(f, "mtry", c.propensity_forest.mtry);
        c.propensity_forest.min_leaf_size =
            get_size(f, "min_leaf_size", c.propensity_forest.min_leaf_size);
        c.propensity_forest.max_depth = get_size(f, "max_depth", c.propensity_forest.max_depth);
        f.finish();
    }
    c.propensity_clip = s.get<double>("propensity_clip", c.propensity_clip);
    c.weight_cap = s.get<double>("weight_cap", c.weight_cap);
    c.stratify_censoring = s.get<bool>("stratify_censoring", c.stratify_censoring);
    c.out_of_bag = s.get<bool>("out_of_bag", c.out_of_bag);
    s.finish();
    return c;
}

RegressorParams parse_regressor(Section s) {
    RegressorParams r;
    const auto kind = s.get<std::string>("kind", "forest");
    if (kind == "forest") {
        r.kind = RegressorKind::Forest;
    } else if (kind == "ridge") {
        r.kind = RegressorKind::Ridge;
    } else {
        throw ConfigError("regressor.kind must be 'forest' or 'ridge'");
    }
    r.forest.n_trees = get_size(s, "n_trees", r.forest.n_trees);
    r.forest.mtry = get_size(s, "mtry", r.forest.mtry);
    r.forest.min_leaf_weight = s.get<double>("min_leaf_weight", r.forest.min_leaf_weight);
    r.forest.min_leaf_size = get_size(s, "min_leaf_size", r.forest.min_leaf_size);
    r.forest.max_depth = get_size(s, "max_depth", r.forest.max_depth);
    r.min_leaf_weight_factor = s.get<double>("min_leaf_weight_factor", r.min_leaf_weight_factor);
    r.ridge_lambda = s.get<double>("ridge_lambda", r.ridge_lambda);
    s.finish();
    return r;
}

MetaLearnerConfig parse_learner_config(Section& s, std::uint64_t seed) {
    MetaLearnerConfig c;
    c.nuisance = parse_nuisance(s.sub("nuisance"));
    c.regressor = parse_regressor(s.sub("regressor"));
    c.r_epsilon = s.get<double>("r_epsilon", c.r_epsilon);
    c.seed = seed;
    return c;
}

CovariateSchema load_schema(Section& s, const Context& ctx) {
    if (!s.has("schema")) throw ConfigError("missing required key 'schema'");
    const json& v = s.raw("schema");
    s.effective()["schema"] = v;
    if (v.is_string()) return read_schema_json(ctx.path(v.get<std::string>()));
    return CovariateSchema::from_json(v);
}

sim::ScenarioSpec parse_spec(Section& s, std::uint64_t seed) {
    sim::ScenarioSpec spec;
    spec.scenario = sim::parse_scenario(s.get<std::string>("scenario", "S1"));
    spec.design = sim::parse_design(s.get<std::string>("design", "rct"));
    spec.n_train = get_size(s, "n_train", spec.n_train);
    spec.n_test = get_size(s, "n_test", spec.n_test);
    spec.target_rule = sim::parse_target_rule(s.get<std::string>("target_rule", "median"));
    spec.censor_rate = s.get<double>("censor_rate", spec.censor_rate);
    spec.coding = sim::parse_coding(s.get<std::string>("binary_coding", "sign"));
    spec.seed = seed;
    spec.validate();
    return spec;
}

constexpr std::uint64_t kCalibrationStream = 0xCA11B;

void write_oracle_csv(std::ostream& os, const sim::SimulatedCohort& c, const sim::Oracle& o) {
    os << "row,propensity,t0,t1,censor,surv0,surv1,tau\n";
    for (std::size_t i = 0; i < c.cohort.size(); ++i) {
        os << i << ',' << io::format_double(c.propensity[i]) << ',' << io::format_double(c.t0[i])
           << ',' << io::format_double(c.t1[i]) << ',' << io::format_double(c.censor[i]) << ','
           << io::format_double(o.surv0[i]) << ',' << io::format_double(o.surv1[i]) << ','
           << io::format_double(o.tau[i]) << '\n';
    }
}

void cmd_simulate(Context& ctx, Section& s) {
    const auto spec = parse_spec(s, ctx.seed);
    s.finish();
    const double rate = sim::calibrate_censoring(spec.scenario, spec.design, spec.censor_rate,
                                                 derive_seed(ctx.seed, kCalibrationStream),
                                                 spec.coding);
    const auto train = sim::simulate_cohort(spec, spec.n_train, rate, derive_seed(ctx.seed, 0));
    const auto test = sim::simulate_cohort(spec, spec.n_test, rate, derive_seed(ctx.seed, 1));
    const double t_star = sim::target_time(train.cohort.times(), spec.target_rule);
    write_with(ctx, "train.csv", [&](std::ostream& os) { write_cohort_csv(os, train.cohort); });
    write_with(ctx, "test.csv", [&](std::ostream& os) { write_cohort_csv(os, test.cohort); });
    write_with(ctx, "train_oracle.csv", [&](std::ostream& os) {
        write_oracle_csv(os, train, sim::oracle_at(spec.scenario, train.x, t_star));
    });
    write_with(ctx, "test_oracle.csv", [&](std::ostream& os) {
        write_oracle_csv(os, test, sim::oracle_at(spec.scenario, test.x, t_star));
    });
    write_json(ctx, "schema.json", sim::simulation_schema().to_json());
    std::size_t censored = 0;
    for (const auto& r : train.cohort.records()) censored += r.event ? 0 : 1;
    write_json(ctx, "manifest.json",
               {{"scenario", sim::scenario_name(spec.scenario)},
                {"design", sim::design_name(spec.design)},
                {"n_train", spec.n_train},
                {"n_test", spec.n_test},
                {"binary_coding", sim::coding_name(spec.coding)},
                {"censor_target", spec.censor_rate},
                {"censor_rate_param", rate},
                {"train_censored_fraction",
                 static_cast<double>(censored) / static_cast<double>(spec.n_train)},
                {"target_rule", sim::target_rule_name(spec.target_rule)},
                {"t_star", t_star},
                {"seed", ctx.seed},
                {"predictive_set", sim::predictive_set(spec.scenario)},
                {"files",
                 {"train.csv", "test.csv", "train_oracle.csv", "test_oracle.csv", "schema.json"}}});
    *ctx.log << "simulated " << spec.n_train << " training and " << spec.n_test
             << " test subjects (t* = " << io::format_double(t_star) << ")\n";
}

double resolve_t_star(Section& s, const Cohort& cohort) {
    if (s.has("t_star")) {
        const double t = s.require<double>("t_star");
        return TargetTime(t).value();
    }
    const auto rule = sim::parse_target_rule(s.get<std::string>("t_star_rule", "median"));
    return sim::target_time(cohort.times(), rule);
}

void write_tau_csv(std::ostream& os, std::span<const double> tau) {
    os << "row,tau_hat\n";
    for (std::size_t i = 0; i < tau.size(); ++i) os << i << ',' << io::format_double(tau[i]) << '\n';
}

void cmd_fit(Context& ctx, Section& s) {
    const auto schema = load_schema(s, ctx);
    const Cohort cohort = read_cohort_csv(ctx.path(s.require<std::string>("data")), schema);
    const auto learner_str = s.require<std::string>("learner");
    const auto learner = parse_learner(learner_str);
    if (!learner) throw ConfigError("unknown learner '" + learner_str + "'");
    const TargetTime t(resolve_t_star(s, cohort));
    const std::size_t folds = get_size(s, "cross_fit_folds", 0);
    const MetaLearnerConfig cfg = parse_learner_config(s, ctx.seed);
    s.finish();

    const auto view = complete_case_view(cohort, t);
    json diag{{"learner", learner_name(*learner)},
              {"t_star", t.value()},
              {"seed", ctx.seed},
              {"n", cohort.size()},
              {"n_complete", view.n_complete()}};
    if (folds == 0) {
        auto fit = fit_metalearner(cohort, t, *learner, cfg);
        std::vector<double> tau(cohort.size());
        for (std::size_t i = 0; i < cohort.size(); ++i) tau[i] = fit.model.predict(cohort[i].x);
        write_json(ctx, "model.json", fit.model.to_json());
        write_with(ctx, "tau_hat.csv", [&](std::ostream& os) { write_tau_csv(os, tau); });
        diag["nuisance"] = fit.bundle.diagnostics.to_json();
        diag["n_pseudo"] = fit.pseudo.size();
        diag["n_dropped"] = fit.pseudo.n_dropped;
        diag["mode"] = "single";
    } else {
        auto cf = cross_fit_cate(cohort, t, *learner, folds, cfg);
        write_with(ctx, "tau_hat.csv", [&](std::ostream& os) { write_tau_csv(os, cf.tau_hat); });
        write_with(ctx, "folds.csv", [&](std::ostream& os) {
            std::vector<std::size_t> fold_of(cohort.size());
            for (std::size_t f = 0; f < cf.folds.size(); ++f) {
                for (std::size_t i : cf.folds[f]) fold_of[i] = f;
            }
            os << "row,fold\n";
            for (std::size_t i = 0; i < cohort.size(); ++i) os << i << ',' << fold_of[i] << '\n';
        });
        for (std::size_t f = 0; f < cf.models.size(); ++f) {
            write_json(ctx, "model_fold" + std::to_string(f) + ".json", cf.models[f].to_json());
        }
        diag["mode"] = "cross_fit";
        diag["folds"] = folds;
    }
    write_json(ctx, "diagnostics.json", diag);
    *ctx.log << "fitted " << learner_name(*learner) << "-learner on " << cohort.size()
             << " subjects (" << view.n_complete() << " complete cases)\n";
}

CateModel load_model(const std::string& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        throw DataError("model file '" + path + "' is not valid JSON");
    }
    try {
        return CateModel::from_json(j);
    } catch (const json::exception& e) {
        throw DataError("model file '" + path + "' is malformed: " + e.what());
    }
}

void cmd_predict(Context& ctx, Section& s) {
    const CateModel model = load_model(ctx.path(s.require<std::string>("model")));
    const auto rows = read_covariates_csv(ctx.path(s.require<std::string>("data")), model.schema());
    s.finish();
    std::vector<double> tau(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) tau[i] = model.predict(rows[i]);
    write_with(ctx, "predictions.csv", [&](std::ostream& os) { write_tau_csv(os, tau); });
    *ctx.log << "predicted " << rows.size() << " subjects\n";
}

std::vector<double> design_rows(const CovariateSchema& schema,
                                const std::vector<std::vector<double>>& rows,
                                std::span<const std::size_t> pick) {
    std::vector<double> out;
    for (std::size_t i : pick) {
        const auto d = expand_covariates(schema, rows[i]);
        out.insert(out.end(), d.begin(), d.end());
    }
    return out;
}

void cmd_explain(Context& ctx, Section& s) {
    const CateModel model = load_model(ctx.path(s.require<std::string>("model")));
    const std::string data_path = s.require<std::string>("data");
    const auto rows = read_covariates_csv(ctx.path(data_path), model.schema());
    const std::string bg_path = s.get<std::string>("background", data_path);
    const auto bg = bg_path == data_path ? rows
                                         : read_covariates_csv(ctx.path(bg_path), model.schema());
    const std::size_t bg_size = get_size(s, "background_size", 100);
    const std::size_t cap = get_size(s, "subjects_cap", 100);
    ShapConfig sc;
    sc.exact_threshold = get_size(s, "exact_threshold", sc.exact_threshold);
    sc.coalition_budget = get_size(s, "coalition_budget", sc.coalition_budget);
    sc.tree_traversal = s.get<bool>("tree_traversal", sc.tree_traversal);
    s.finish();
    if (bg_size == 0) throw ConfigError("background_size must be at least 1");
    if (cap == 0) throw ConfigError("subjects_cap must be at least 1");
    sc.seed = derive_seed(ctx.seed, 2);
    const auto bg_pick = sample_rows(bg.size(), bg_size, derive_seed(ctx.seed, 0));
    sc.background = design_rows(model.schema(), bg, bg_pick);
    const auto subj_pick = sample_rows(rows.size(), cap, derive_seed(ctx.seed, 1));
    const auto subjects = design_rows(model.schema(), rows, subj_pick);
    ShapMatrix shap = kernel_shap(model, subjects, sc);
    shap.subjects = subj_pick;
    const double tol = shap.exact ? 1e-6 : 1e-3;
    const double err = shap.max_additivity_error();
    if (!(err <= tol)) {
        throw NumericalError("SHAP local accuracy check failed (max error " +
                             io::format_double(err) + ")");
    }
    write_with(ctx, "shap_values.csv", [&](std::ostream& os) { write_shap_wide_csv(os, shap); });
    write_with(ctx, "shap_long.csv", [&](std::ostream& os) { write_shap_long_csv(os, shap); });
    write_json(ctx, "shap_summary.json", shap_summary_json(shap));
    *ctx.log << "explained " << shap.n_rows << " subjects against " << bg_pick.size()
             << " background rows\n";
}

std::vector<double> read_tau_csv(const std::string& path) {
    const io::Table table = io::read_table_file(path);
    const auto col = table.column("tau_hat");
    if (!col) throw DataError("'" + path + "' has no tau_hat column");
    std::vector<double> tau;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto v = *col < table.rows[i].size() ? io::parse_double(table.rows[i][*col])
                                                   : std::nullopt;
        if (!v || !std::isfinite(*v)) {
            throw DataError("row " + std::to_string(i + 1) + ": tau_hat is missing or not finite");
        }
        tau.push_back(*v);
    }
    return tau;
}

void cmd_subgroup(Context& ctx, Section& s) {
    std::optional<CateModel> model;
    if (s.has("model")) model = load_model(ctx.path(s.require<std::string>("model")));
    CovariateSchema schema = model && !s.has("schema") ? model->schema() : load_schema(s, ctx);
    const Cohort cohort = read_cohort_csv(ctx.path(s.require<std::string>("data")), schema);
    std::vector<double> tau;
    if (s.has("tau_hat")) {
        tau = read_tau_csv(ctx.path(s.require<std::string>("tau_hat")));
    } else if (model) {
        for (const auto& r : cohort.records()) tau.push_back(model->predict(r.x));
    } else {
        throw ConfigError("subgroup needs either 'tau_hat' or 'model'");
    }
    if (tau.size() != cohort.size()) {
        throw DataError("tau_hat has " + std::to_string(tau.size()) + " rows but the cohort has " +
                        std::to_string(cohort.size()));
    }
    double t_star = 0.0;
    if (s.has("t_star")) {
        t_star = s.require<double>("t_star");
    } else if (model) {
        t_star = model->t_star();
    } else {
        throw ConfigError("missing required key 't_star'");
    }
    const TargetTime t(t_star);
    std::vector<double> grid;
    if (s.has("grid")) {
        grid = s.require<std::vector<double>>("grid");
    } else {
        grid = default_mtd_grid(s.get<double>("grid_step", 0.1));
    }
    const double margin = s.get<double>("margin", 0.05);
    s.finish();
    const MtdCurve curve = mtd_curve(cohort, tau, grid, t, margin);
    write_with(ctx, "mtd_curve.csv", [&](std::ostream& os) { write_mtd_csv(os, curve); });
    write_json(ctx, "mtd_curve.json", mtd_json(curve));
    *ctx.log << "overall MTD " << io::format_double(curve.overall_mtd) << " over "
             << curve.points.size() << " curve points\n";
}

void cmd_bench(Context& ctx, Section& s) {
    sim::BenchConfig bc;
    bc.spec = parse_spec(s, ctx.seed);
    bc.learners = s.get<std::vector<std::string>>("learners", bc.learners);
    bc.reps = get_size(s, "reps", bc.reps);
    bc.bins = get_size(s, "bins", bc.bins);
    bc.shap_subjects = get_size(s, "shap_subjects", bc.shap_subjects);
    bc.shap_background = get_size(s, "shap_background", bc.shap_background);
    bc.shap_exact_threshold = get_size(s, "shap_exact_threshold", bc.shap_exact_threshold);
    bc.shap_budget = get_size(s, "shap_budget", bc.shap_budget);
    bc.record_runtime = s.get<bool>("record_runtime", bc.record_runtime);
    bc.learner = parse_learner_config(s, ctx.seed);
    s.finish();
    const auto report = sim::run_benchmark(bc);
    write_with(ctx, "replicates.csv",
               [&](std::ostream& os) { sim::write_replicates_csv(os, report); });
    write_json(ctx, "aggregate.json", sim::aggregate_json(report));
    write_with(ctx, "plot_table.csv",
               [&](std::ostream& os) { sim::write_plot_table_csv(os, report); });
    *ctx.log << "benchmarked " << bc.learners.size() << " learners over " << bc.reps
             << " replicates\n";
}

using Command = void (*)(Context&, Section&);

int classify(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
    if (dynamic_cast<const DataError*>(&e)) return kDataError;
    if (dynamic_cast<const NumericalError*>(&e)) return kNumericalError;
    return kInternalError;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Survival CATE meta-learners"};
    app.require_subcommand(1);
    const std::map<std::string, std::pair<Command, std::string>> commands = {
        {"simulate", {cmd_simulate, "Generate simulated train/test cohorts with oracle columns"}},
        {"fit", {cmd_fit, "Fit a meta-learner and write the model and diagnostics"}},
        {"predict", {cmd_predict, "Predict CATE with a fitted model"}},
        {"explain", {cmd_explain, "KernelSHAP attributions for a fitted model"}},
        {"subgroup", {cmd_subgroup, "MTD curve over CATE percentiles"}},
        {"bench", {cmd_bench, "Multi-replicate simulation benchmark"}},
    };
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, entry] : commands) {
        CLI::App* sub = app.add_subcommand(name, entry.second);
        sub->add_option("--config", config_path, "JSON configuration file");
        sub->add_option("--seed", seed, "Master seed (overrides the config)");
        sub->add_option("--threads", threads, "Worker threads (0 = all cores)");
        sub->add_option("--out", out_dir, "Output directory")->required();
        subs[name] = sub;
    }

    std::vector<const char*> argv{"survcate"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        Context ctx;
        ctx.log = &out;
        if (!config_path.empty()) {
            ctx.config_text = io::read_file(config_path);
            try {
                ctx.config = json::parse(ctx.config_text);
            } catch (const json::exception& e) {
                throw ConfigError("config '" + config_path + "' is not valid JSON: " + e.what());
            }
            ctx.base_dir = fs::path(config_path).parent_path();
        } else {
            ctx.config_text = "{}\n";
            ctx.config = json::object();
        }
        Section root(ctx.config, ctx.effective, "");
        const auto config_seed = root.get<std::uint64_t>("seed", 1);
        ctx.seed = seed.value_or(config_seed);
        ctx.effective["seed"] = ctx.seed;
        set_num_threads(threads);

        std::string command;
        for (const auto& [name, sub] : subs) {
            if (sub->parsed()) command = name;
        }
        ctx.out_dir = out_dir;
        std::error_code ec;
        fs::create_directories(ctx.out_dir, ec);
        if (ec) throw DataError("cannot create output directory '" + out_dir + "'");

        write_text(ctx, "config.json", ctx.config_text);
        commands.at(command).first(ctx, root);
        json effective = ctx.effective;
        effective["command"] = command;
        write_json(ctx, "effective_config.json", effective);
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return classify(e);
    }
}

}  // namespace survcate::cli
