// Command-line front end: one subcommand per pipeline stage plus `pipeline`,
// `validate` and `simulate`.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fmradio/error.hpp"
#include "fmradio/pipeline.hpp"
#include "fmradio/rng.hpp"
#include "fmradio/sim_bench.hpp"

namespace fs = std::filesystem;
using namespace fmradio;
using nlohmann::json;

namespace {

struct DataArgs {
    std::string input;
    std::string time_col;
    std::string status_col;
};

struct FactorArgs {
    double tau_r = 0.95;
    std::string filter_ties = "first";
    int cv_folds = 5;
    std::string m = "AUTO";
    double omega = 0.3;
    bool no_rotate = false;
};

struct OutArgs {
    std::string out;
    bool force = false;
};

void add_data(CLI::App* cmd, DataArgs& a, bool survival_default) {
    cmd->add_option("--input", a.input, "CSV file, first row header")->required();
    if (survival_default) {
        a.time_col = "time";
        a.status_col = "status";
    }
    cmd->add_option("--time-col", a.time_col, "observed time column");
    cmd->add_option("--status-col", a.status_col, "event indicator column (1 = event)");
}

void add_out(CLI::App* cmd, OutArgs& o) {
    cmd->add_option("--out", o.out, "output directory")->required();
    cmd->add_flag("--force", o.force, "overwrite existing artifacts");
}

void add_factor(CLI::App* cmd, FactorArgs& f, bool with_dimension) {
    cmd->add_option("--tau-r", f.tau_r, "redundancy threshold on |r|")->capture_default_str();
    cmd->add_option("--filter-ties", f.filter_ties, "first | last | largest_sum")->capture_default_str();
    cmd->add_option("--cv-folds", f.cv_folds, "folds for the penalty search")->capture_default_str();
    if (with_dimension) {
        cmd->add_option("--m", f.m, "AUTO or a number of factors")->capture_default_str();
        cmd->add_option("--omega", f.omega, "loading threshold for diagnostics")->capture_default_str();
        cmd->add_flag("--no-rotate", f.no_rotate, "keep the canonical (unrotated) solution");
    }
}

std::optional<int> parse_m(const std::string& s) {
    if (s == "AUTO" || s == "auto") return std::nullopt;
    try {
        std::size_t used = 0;
        const int m = std::stoi(s, &used);
        if (used == s.size() && m >= 1) return m;
    } catch (const std::exception&) {
    }
    throw InputError("--m must be AUTO or a positive integer, got '" + s + "'");
}

std::optional<double> parse_tau(const std::string& s) {
    if (s == "MEDIAN" || s == "median") return std::nullopt;
    try {
        std::size_t used = 0;
        const double t = std::stod(s, &used);
        if (used == s.size() && t > 0.0) return t;
    } catch (const std::exception&) {
    }
    throw InputError("--tau must be MEDIAN or a positive number, got '" + s + "'");
}

FactorConfig factor_config(const FactorArgs& f, std::uint64_t seed) {
    FactorConfig c;
    c.tau_r = f.tau_r;
    c.filter_ties = parse_tie_rule(f.filter_ties);
    c.cv_folds = f.cv_folds;
    c.m = parse_m(f.m);
    c.omega = f.omega;
    c.rotate = !f.no_rotate;
    c.seed = derive_seed(seed, hash_string("factor"));
    return c;
}

RawDataset load(const DataArgs& a) {
    try {
        std::optional<SurvivalColumns> cols;
        if (!a.time_col.empty() || !a.status_col.empty()) {
            if (a.time_col.empty() || a.status_col.empty())
                throw InputError("--time-col and --status-col must be given together");
            cols = SurvivalColumns{a.time_col, a.status_col};
        }
        return load_csv(a.input, cols);
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("ingest", e.what());
    }
}

fs::path prepare_dir(const OutArgs& o, const std::vector<std::string>& files, std::vector<fs::path>& paths) {
    const fs::path dir = o.out;
    try {
        fs::create_directories(dir);
        for (const auto& f : files) paths.push_back(dir / f);
        ensure_writable(paths, o.force);
    } catch (const std::exception& e) {
        throw StageError("output", e.what());
    }
    return dir;
}

json names_json(const std::vector<Eigen::Index>& idx, const std::vector<std::string>& names) {
    json out = json::array();
    for (auto j : idx) out.push_back(names.at(static_cast<std::size_t>(j)));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Factor-analytic compression of collinear features for survival prediction"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::uint64_t seed = 0;

    // filter
    DataArgs filter_data;
    OutArgs filter_out;
    double filter_tau = 0.95;
    std::string filter_ties = "first";
    auto* filter = app.add_subcommand("filter", "redundancy filter on the sample correlation matrix");
    add_data(filter, filter_data, false);
    add_out(filter, filter_out);
    filter->add_option("--tau,--tau-r", filter_tau, "threshold on |r|")->capture_default_str();
    filter->add_option("--ties", filter_ties, "first | last | largest_sum")->capture_default_str();

    // shrink
    DataArgs shrink_data;
    OutArgs shrink_out;
    FactorArgs shrink_factor;
    auto* shrink_cmd = app.add_subcommand("shrink", "filter, then choose the penalty by cross-validation");
    add_data(shrink_cmd, shrink_data, false);
    add_out(shrink_cmd, shrink_out);
    add_factor(shrink_cmd, shrink_factor, false);
    shrink_cmd->add_option("--seed", seed, "master seed");

    // fa
    DataArgs fa_data;
    OutArgs fa_out;
    FactorArgs fa_factor;
    auto* fa = app.add_subcommand("fa", "ML factor analysis of the shrunken correlation matrix");
    add_data(fa, fa_data, false);
    add_out(fa, fa_out);
    add_factor(fa, fa_factor, true);
    fa->add_option("--seed", seed, "master seed");

    // scores
    DataArgs scores_data;
    std::string scores_model;
    std::string scores_stats;
    std::string scores_out;
    bool scores_force = false;
    bool scores_validation = false;
    auto* scores_cmd = app.add_subcommand("scores", "Thomson factor scores from a fitted model");
    add_data(scores_cmd, scores_data, false);
    scores_cmd->add_option("--model", scores_model, "model.json from fa or pipeline")->required();
    scores_cmd->add_option("--stats", scores_stats, "training statistics JSON overriding those in the model");
    scores_cmd->add_option("--out", scores_out, "scores CSV path")->required();
    scores_cmd->add_flag("--force", scores_force, "overwrite an existing file");
    scores_cmd->add_flag("--validation", scores_validation, "mark rows as coming from outside the training data");

    // survfit
    DataArgs surv_data;
    OutArgs surv_out;
    std::string surv_ties = "efron";
    auto* survfit = app.add_subcommand("survfit", "Cox model on a table of predictors (e.g. factor scores)");
    add_data(survfit, surv_data, true);
    add_out(survfit, surv_out);
    survfit->add_option("--ties", surv_ties, "efron | breslow")->capture_default_str();

    // pipeline and brier share one configuration
    DataArgs run_data;
    OutArgs run_out;
    FactorArgs run_factor;
    std::string run_ties = "efron";
    std::string run_tau = "MEDIAN";
    std::string run_mode = "apparent";
    int run_folds = 5;
    int run_repeats = 500;
    std::string run_config;
    std::string run_model;
    bool run_recalibrate = false;
    auto add_run = [&](CLI::App* cmd) {
        add_data(cmd, run_data, true);
        add_out(cmd, run_out);
        add_factor(cmd, run_factor, true);
        cmd->add_option("--ties", run_ties, "efron | breslow")->capture_default_str();
        cmd->add_option("--tau", run_tau, "MEDIAN or an integration horizon")->capture_default_str();
        cmd->add_option("--mode", run_mode, "apparent | validate | cv")->capture_default_str();
        cmd->add_option("--folds", run_folds, "folds for cross-validated Brier scores")->capture_default_str();
        cmd->add_option("--repeats", run_repeats, "repeats for cross-validated Brier scores")->capture_default_str();
        cmd->add_option("--seed", seed, "master seed");
    };
    auto* pipeline = app.add_subcommand("pipeline", "filter -> shrink -> fa -> rotate -> scores -> survfit -> brier");
    add_run(pipeline);
    pipeline->add_option("--config", run_config, "JSON config (or a previous report.json) replacing the flags");
    auto* brier = app.add_subcommand("brier", "prediction-error curves (writes the pipeline artifacts it needs)");
    add_run(brier);
    brier->add_option("--model", run_model, "directory with model.json and cox.json (mode validate)");
    brier->add_flag("--recalibrate", run_recalibrate, "refit the Cox model on the validation scores (mode validate)");
    // --input is not required when --config supplies it
    pipeline->get_option("--input")->required(false);
    pipeline->get_option("--out")->required(false);

    // validate
    ValidationConfig vcfg;
    std::string v_model, v_input, v_stats, v_out, v_tau = "MEDIAN";
    auto* validate = app.add_subcommand("validate", "score external data with a trained model and compute Brier curves");
    validate->add_option("--model", v_model, "directory with model.json and cox.json")->required();
    validate->add_option("--input", v_input, "validation CSV")->required();
    validate->add_option("--stats", v_stats, "training statistics JSON overriding those in the model");
    validate->add_option("--time-col", vcfg.time_col, "observed time column")->capture_default_str();
    validate->add_option("--status-col", vcfg.status_col, "event indicator column")->capture_default_str();
    validate->add_option("--tau", v_tau, "MEDIAN or an integration horizon")->capture_default_str();
    validate->add_flag("--recalibrate", vcfg.recalibrate, "refit the Cox model on the validation scores");
    validate->add_option("--out", v_out, "output directory")->required();
    validate->add_flag("--force", vcfg.force, "overwrite existing artifacts");

    // simulate
    SimulationScenario scenario;
    std::string sim_balance = "balanced";
    std::string sim_config;
    std::string sim_out;
    bool sim_force = false;
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo study of dimensionality selection");
    simulate->add_option("--config", sim_config, "scenario file (key=value); flags given explicitly override it");
    simulate->add_option("--p", scenario.p)->capture_default_str();
    simulate->add_option("--m-true", scenario.m_true)->capture_default_str();
    simulate->add_option("--communality", scenario.communality)->capture_default_str();
    simulate->add_option("--balance", sim_balance, "balanced | unbalanced")->capture_default_str();
    simulate->add_option("--n", scenario.n, "sample sizes")->delimiter(',');
    simulate->add_option("--replicates", scenario.replicates)->capture_default_str();
    simulate->add_option("--seed", scenario.seed);
    simulate->add_option("--ic-max", scenario.ic_max, "largest m for AIC/BIC (0: table span)");
    simulate->add_flag("--rank-adjusted", scenario.lrt_rank_adjusted, "LRT with rank-adjusted degrees of freedom");
    simulate->add_option("--out", sim_out, "output directory")->required();
    simulate->add_flag("--force", sim_force, "overwrite existing artifacts");

    CLI11_PARSE(app, argc, argv);

    try {
        if (filter->parsed()) {
            const auto raw = load(filter_data);
            std::vector<fs::path> paths;
            prepare_dir(filter_out, {"stats.json", "filter.json", "filtered_correlation.csv"}, paths);
            const auto z = standardize(raw);
            const auto result = redundancy_filter(sample_correlation(z), filter_tau, parse_tie_rule(filter_ties));
            write_json(paths[0], to_json(z.stats));
            write_json(paths[1], {{"threshold", filter_tau},
                                  {"retained", names_json(result.retained, raw.feature_names)},
                                  {"removed", names_json(result.removed, raw.feature_names)}});
            write_matrix_csv(paths[2], result.filtered.names, result.filtered.values);
            std::cout << "retained " << result.retained.size() << " of " << raw.cols() << " features\n";
        } else if (shrink_cmd->parsed() || fa->parsed()) {
            const bool full = fa->parsed();
            const auto raw = load(full ? fa_data : shrink_data);
            auto config = factor_config(full ? fa_factor : shrink_factor, seed);
            std::vector<fs::path> paths;
            std::vector<std::string> files = {"stats.json", "filter.json", "filtered_correlation.csv",
                                              "shrunken_correlation.csv"};
            if (full) files.insert(files.end(), {"fa.json", "model.json", "loadings.csv"});
            prepare_dir(full ? fa_out : shrink_out, files, paths);

            FactorSolution solution;
            if (full) {
                solution = fit_factor_solution(raw.features, raw.feature_names, config);
            } else {
                // the shrink subcommand stops after the penalty search
                const auto z = standardize(raw);
                solution.input_names = raw.feature_names;
                solution.input_stats = z.stats;
                solution.filter = redundancy_filter(sample_correlation(z), config.tau_r, config.filter_ties);
                PenaltySearchOptions options;
                options.folds = config.cv_folds;
                options.seed = derive_seed(config.seed, hash_string("penalty"));
                try {
                    solution.penalty = cv_select_penalty(z.data(Eigen::all, solution.filter.retained), options);
                    solution.shrunk = shrink(solution.filter.filtered, solution.penalty.theta);
                    solution.condition_number = condition_number(solution.shrunk);
                } catch (const std::exception& e) {
                    throw StageError("shrink", e.what());
                }
            }
            write_json(paths[0], to_json(solution.input_stats));
            write_json(paths[1], {{"threshold", solution.filter.threshold},
                                  {"retained", names_json(solution.filter.retained, raw.feature_names)},
                                  {"removed", names_json(solution.filter.removed, raw.feature_names)},
                                  {"theta", solution.penalty.theta},
                                  {"cv_score", solution.penalty.cv_score},
                                  {"condition_number", solution.condition_number}});
            write_matrix_csv(paths[2], solution.filter.filtered.names, solution.filter.filtered.values);
            write_matrix_csv(paths[3], solution.filter.filtered.names, solution.shrunk.values());
            std::cout << "theta = " << solution.penalty.theta << ", condition number = " << solution.condition_number
                      << '\n';
            if (full) {
                const auto j = to_json(solution, config.omega);
                write_json(paths[4], j);
                write_json(paths[5], j);
                std::ofstream l(paths[6]);
                l << "feature";
                for (int k = 1; k <= solution.m; ++k) l << ",F" << k;
                l << '\n' << std::setprecision(17);
                for (Eigen::Index i = 0; i < solution.scoring.loadings.rows(); ++i) {
                    l << solution.scoring.stats.names[static_cast<std::size_t>(i)];
                    for (Eigen::Index k = 0; k < solution.scoring.loadings.cols(); ++k)
                        l << ',' << solution.scoring.loadings(i, k);
                    l << '\n';
                }
                std::cout << "Guttman bound = " << solution.guttman.m << ", m = " << solution.m << '\n';
                for (const auto& w : solution.warnings) std::cerr << "warning: " << w << '\n';
                if (solution.m_auto) std::cout << "advisory: " << j["advisory"].get<std::string>() << '\n';
            }
        } else if (scores_cmd->parsed()) {
            const auto raw = load(scores_data);
            ScoringModel model;
            try {
                model = scoring_model_from_json(read_json(scores_model));
                if (!scores_stats.empty()) {
                    const auto all = column_stats_from_json(read_json(scores_stats));
                    std::vector<Eigen::Index> idx;
                    for (const auto& name : model.stats.names) {
                        auto it = std::find(all.names.begin(), all.names.end(), name);
                        if (it == all.names.end()) throw InputError("stats file lacks feature '" + name + "'");
                        idx.push_back(it - all.names.begin());
                    }
                    model.stats = subset_stats(all, idx);
                }
            } catch (const std::exception& e) {
                throw StageError("ingest", e.what());
            }
            FactorScores s;
            try {
                s = score_dataset(model, raw, scores_validation ? ScoreSource::validation : ScoreSource::training);
                ensure_writable({scores_out}, scores_force);
            } catch (const std::exception& e) {
                throw StageError("scores", e.what());
            }
            std::vector<std::string> names;
            for (Eigen::Index k = 1; k <= s.values.cols(); ++k) names.push_back("F" + std::to_string(k));
            Eigen::MatrixXd table = s.values;
            if (raw.survival) {
                table.conservativeResize(Eigen::NoChange, table.cols() + 2);
                for (std::size_t i = 0; i < raw.survival->size(); ++i) {
                    table(static_cast<Eigen::Index>(i), table.cols() - 2) = raw.survival->time[i];
                    table(static_cast<Eigen::Index>(i), table.cols() - 1) = raw.survival->status[i];
                }
                names.push_back(scores_data.time_col);
                names.push_back(scores_data.status_col);
            }
            write_matrix_csv(scores_out, names, table);
        } else if (survfit->parsed()) {
            const auto raw = load(surv_data);
            std::vector<fs::path> paths;
            prepare_dir(surv_out, {"cox.json"}, paths);
            SurvivalFit fit;
            try {
                CoxOptions options;
                options.ties = parse_ties(surv_ties);
                fit.cox = fit_cox(raw.features, *raw.survival, options);
                fit.reference = km(*raw.survival);
            } catch (const std::exception& e) {
                throw StageError("survfit", e.what());
            }
            auto j = to_json(fit);
            j["predictors"] = raw.feature_names;
            write_json(paths[0], j);
            for (const auto& w : fit.cox.warnings) std::cerr << "warning: " << w << '\n';
        } else if (pipeline->parsed() || brier->parsed()) {
            PipelineConfig config;
            if (!run_config.empty()) {
                try {
                    auto j = read_json(run_config);
                    config = pipeline_config_from_json(j.contains("config") ? j["config"] : j);
                } catch (const std::exception& e) {
                    throw StageError("config", e.what());
                }
                if (!run_data.input.empty()) config.input = run_data.input;
                if (!run_out.out.empty()) config.output_dir = run_out.out;
                config.force = run_out.force;
            } else {
                if (run_data.input.empty() || run_out.out.empty())
                    throw StageError("config", "--input and --out are required without --config");
                config.input = run_data.input;
                config.output_dir = run_out.out;
                config.force = run_out.force;
                config.time_col = run_data.time_col;
                config.status_col = run_data.status_col;
                try {
                    config.factor = factor_config(run_factor, seed);
                    config.ties = parse_ties(run_ties);
                    config.tau = parse_tau(run_tau);
                    config.brier_mode = parse_brier_mode(run_mode);
                } catch (const std::exception& e) {
                    throw StageError("config", e.what());
                }
                config.brier_folds = run_folds;
                config.brier_repeats = run_repeats;
                config.seed = seed;
            }
            RunReport report;
            if (config.brier_mode == BrierMode::validate) {
                if (run_model.empty()) throw StageError("config", "--mode validate needs --model DIR");
                ValidationConfig v;
                v.model_dir = run_model;
                v.input = config.input;
                v.output_dir = config.output_dir;
                v.time_col = config.time_col;
                v.status_col = config.status_col;
                v.tau = config.tau;
                v.recalibrate = run_recalibrate;
                v.force = config.force;
                report = validate_external(v);
            } else {
                report = run_pipeline(config);
            }
            for (const auto& m : report.json["brier"]["models"])
                std::cout << m["model"].get<std::string>() << ": integrated Brier = " << m["b_integrated"] << ", R2 = "
                          << m["r2"] << '\n';
            if (report.json.contains("advisory")) std::cout << "advisory: " << report.json["advisory"].get<std::string>() << '\n';
            for (const auto& w : report.json["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
        } else if (validate->parsed()) {
            vcfg.model_dir = v_model;
            vcfg.input = v_input;
            if (!v_stats.empty()) vcfg.stats = v_stats;
            vcfg.output_dir = v_out;
            try {
                vcfg.tau = parse_tau(v_tau);
            } catch (const std::exception& e) {
                throw StageError("config", e.what());
            }
            const auto report = validate_external(vcfg);
            for (const auto& m : report.json["brier"]["models"])
                std::cout << m["model"].get<std::string>() << ": integrated Brier = " << m["b_integrated"] << ", R2 = "
                          << m["r2"] << '\n';
        } else if (simulate->parsed()) {
            if (!sim_config.empty()) {
                std::ifstream in(sim_config);
                if (!in) throw StageError("ingest", "cannot open scenario file '" + sim_config + "'");
                SimulationScenario from_file;
                try {
                    from_file = parse_scenario(in);
                } catch (const std::exception& e) {
                    throw StageError("config", e.what());
                }
                auto pick = [&](const char* flag, auto& field, const auto& value) {
                    if (simulate->count(flag) == 0) field = value;
                };
                pick("--p", scenario.p, from_file.p);
                pick("--m-true", scenario.m_true, from_file.m_true);
                pick("--communality", scenario.communality, from_file.communality);
                if (simulate->count("--balance") == 0) sim_balance = to_string(from_file.balance);
                pick("--n", scenario.n, from_file.n);
                pick("--replicates", scenario.replicates, from_file.replicates);
                pick("--seed", scenario.seed, from_file.seed);
                pick("--ic-max", scenario.ic_max, from_file.ic_max);
                if (simulate->count("--rank-adjusted") == 0) scenario.lrt_rank_adjusted = from_file.lrt_rank_adjusted;
                scenario.cv_folds = from_file.cv_folds;
                scenario.lrt_alpha = from_file.lrt_alpha;
            }
            std::vector<fs::path> paths;
            OutArgs o{sim_out, sim_force};
            prepare_dir(o, {"scenario.cfg", "table.csv", "table.txt", "histogram.csv", "timing.json"}, paths);
            ScenarioResult result;
            try {
                scenario.balance = parse_balance(sim_balance);
                result = run_scenario(scenario);
            } catch (const std::exception& e) {
                throw StageError("simulate", e.what());
            }
            std::ofstream(paths[0]) << [&] {
                std::ostringstream os;
                write_scenario(os, scenario);
                return os.str();
            }();
            {
                std::ofstream t(paths[1]);
                emit_table_csv(t, result);
            }
            {
                std::ofstream t(paths[2]);
                emit_table_text(t, result);
            }
            {
                std::ofstream t(paths[3]);
                emit_histogram_csv(t, result);
            }
            json timing = json::array();
            for (const auto& row : result.by_n) {
                timing.push_back({{"n", row.n}, {"mean_seconds_per_replicate", row.mean_seconds},
                                  {"failures", row.failures}, {"log", row.log}});
            }
            write_json(paths[4], timing);
            emit_table_text(std::cout, result);
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
