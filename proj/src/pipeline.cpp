#include "fmradio/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fmradio/error.hpp"
#include "fmradio/rng.hpp"

namespace fmradio {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename F>
auto run_stage(const char* stage, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (static_cast<Eigen::Index>(j[i].size()) != cols) throw InputError("matrix row has the wrong length");
        for (Eigen::Index k = 0; k < cols; ++k) m(static_cast<Eigen::Index>(i), k) = j[i][static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<std::string> names_of(const std::vector<Eigen::Index>& idx, const std::vector<std::string>& names) {
    std::vector<std::string> out;
    for (auto j : idx) out.push_back(names.at(static_cast<std::size_t>(j)));
    return out;
}

std::vector<std::string> factor_names(int m) {
    std::vector<std::string> out;
    for (int k = 1; k <= m; ++k) out.push_back("F" + std::to_string(k));
    return out;
}

void write_loadings_csv(const fs::path& path, const std::vector<std::string>& rows, const Eigen::MatrixXd& loadings) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << "feature";
    for (const auto& f : factor_names(static_cast<int>(loadings.cols()))) out << ',' << f;
    out << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < loadings.rows(); ++i) {
        out << rows.at(static_cast<std::size_t>(i));
        for (Eigen::Index k = 0; k < loadings.cols(); ++k) out << ',' << loadings(i, k);
        out << '\n';
    }
}

void write_scores_csv(const fs::path& path, const FactorScores& scores, const std::optional<SurvivalData>& outcome) {
    auto names = factor_names(static_cast<int>(scores.values.cols()));
    Eigen::MatrixXd table = scores.values;
    if (outcome) {
        table.conservativeResize(Eigen::NoChange, table.cols() + 2);
        for (std::size_t i = 0; i < outcome->size(); ++i) {
            table(static_cast<Eigen::Index>(i), table.cols() - 2) = outcome->time[i];
            table(static_cast<Eigen::Index>(i), table.cols() - 1) = outcome->status[i];
        }
        names.push_back("time");
        names.push_back("status");
    }
    write_matrix_csv(path, names, table);
}

json step_curve_json(const StepSurvivalCurve& c) { return {{"times", c.times}, {"values", c.values}}; }

StepSurvivalCurve step_curve_from_json(const json& j) {
    StepSurvivalCurve c;
    c.times = j.at("times").get<std::vector<double>>();
    c.values = j.at("values").get<std::vector<double>>();
    if (c.times.size() != c.values.size()) throw InputError("step curve times and values differ in length");
    return c;
}

json diagnostics_json(const DimensionDiagnostics& d) {
    json j;
    j["guttman_bound"] = d.guttman_m;
    j["eigen_gaps"] = vector_json(d.eigen_gaps);
    j["kmo"] = d.kmo ? json(*d.kmo) : json(nullptr);
    j["smc_lower_bounds"] = vector_json(d.smc_lower);
    j["communalities"] = vector_json(d.communalities);
    j["variance_explained"] = vector_json(d.variance.per_factor);
    j["variance_explained_cumulative"] = d.variance.cumulative;
    j["determinacy"] = vector_json(d.determinacy);
    j["ledermann_max"] = d.ledermann_max;
    j["significant_loadings"] = d.thresholded.significant;
    std::vector<int> weak;
    for (std::size_t k = 0; k < d.thresholded.weak.size(); ++k)
        if (d.thresholded.weak[k]) weak.push_back(static_cast<int>(k) + 1);
    j["weak_factors"] = weak;
    return j;
}

SurvivalData require_outcome(const RawDataset& raw) {
    if (!raw.survival) throw InputError("no survival columns were loaded");
    return *raw.survival;
}

}  // namespace

std::string to_string(BrierMode mode) {
    switch (mode) {
        case BrierMode::apparent: return "apparent";
        case BrierMode::validate: return "validate";
        case BrierMode::cv: return "cv";
    }
    return "?";
}

BrierMode parse_brier_mode(const std::string& s) {
    if (s == "apparent") return BrierMode::apparent;
    if (s == "validate") return BrierMode::validate;
    if (s == "cv") return BrierMode::cv;
    throw InputError("unknown Brier mode '" + s + "' (apparent, validate, cv)");
}

std::string to_string(Ties ties) { return ties == Ties::efron ? "efron" : "breslow"; }

Ties parse_ties(const std::string& s) {
    if (s == "efron") return Ties::efron;
    if (s == "breslow") return Ties::breslow;
    throw InputError("unknown ties rule '" + s + "' (efron, breslow)");
}

std::string to_string(TieRule rule) {
    switch (rule) {
        case TieRule::first: return "first";
        case TieRule::last: return "last";
        case TieRule::largest_sum: return "largest_sum";
    }
    return "?";
}

TieRule parse_tie_rule(const std::string& s) {
    if (s == "first") return TieRule::first;
    if (s == "last") return TieRule::last;
    if (s == "largest_sum") return TieRule::largest_sum;
    throw InputError("unknown filter tie rule '" + s + "' (first, last, largest_sum)");
}

FactorSolution fit_factor_solution(const Eigen::MatrixXd& features, const std::vector<std::string>& names,
                                   const FactorConfig& config) {
    FactorSolution out;
    out.input_names = names;

    const auto z = run_stage("filter", [&] { return standardize(features, names); });
    out.input_stats = z.stats;
    run_stage("filter", [&] {
        const auto r = sample_correlation(z);
        out.filter = redundancy_filter(r, config.tau_r, config.filter_ties);
    });

    const auto& kept = out.filter.retained;
    const Eigen::MatrixXd z_kept = z.data(Eigen::all, kept);
    run_stage("shrink", [&] {
        PenaltySearchOptions options;
        options.folds = config.cv_folds;
        options.seed = derive_seed(config.seed, hash_string("penalty"));
        out.penalty = cv_select_penalty(z_kept, options);
        out.shrunk = shrink(out.filter.filtered, out.penalty.theta);
        out.condition_number = condition_number(out.shrunk);
    });

    const int p = static_cast<int>(kept.size());
    run_stage("fa", [&] {
        out.guttman = guttman_bound(out.shrunk);
        const int ledermann = ledermann_max(p);
        if (config.m) {
            out.m_auto = false;
            out.m = *config.m;
        } else {
            if (out.guttman.m < 1)
                throw NumericalError("the Guttman bound is 0: R(theta) has no eigenvalue above 1, no common factor to extract");
            out.m = out.guttman.m;
            if (out.m > ledermann) {
                out.warnings.push_back("Guttman bound " + std::to_string(out.m) + " exceeds the Ledermann bound " +
                                       std::to_string(ledermann) + "; using " + std::to_string(ledermann));
                out.m = ledermann;
            }
        }
        if (out.m < 1 || out.m > ledermann)
            throw InputError("m = " + std::to_string(out.m) + " is outside [1, " + std::to_string(ledermann) +
                             "] for " + std::to_string(p) + " retained features");
        out.model = fit_ml_factor(out.shrunk, out.m, config.fit);
        out.model.names = out.filter.filtered.names;
        if (!out.model.converged) out.warnings.push_back("ML factor fit did not converge");
        const auto heywood = std::count(out.model.heywood.begin(), out.model.heywood.end(), true);
        if (heywood > 0) out.warnings.push_back(std::to_string(heywood) + " uniquenesses at the lower bound (Heywood)");
    });

    Eigen::MatrixXd loadings = out.model.loadings;
    if (config.rotate && out.m > 1) {
        run_stage("rotate", [&] {
            out.rotation = varimax(out.model.loadings);
            loadings = out.rotation->loadings;
            if (!out.rotation->converged) out.warnings.push_back("varimax did not converge");
        });
    }
    run_stage("fa", [&] { out.diagnostics = diagnose(out.shrunk, loadings, config.omega); });

    out.scoring.stats = subset_stats(z.stats, kept);
    out.scoring.loadings = loadings;
    out.scoring.uniquenesses = out.model.uniquenesses;
    return out;
}

FactorScores score_matrix(const ScoringModel& model, const Eigen::MatrixXd& x, ScoreSource source) {
    const auto z = apply_stats(x, model.stats);
    auto s = thomson_scores(z.data, model.loadings, model.uniquenesses, source);
    s.fingerprint = model.fingerprint();
    return s;
}

FactorScores score_dataset(const ScoringModel& model, const RawDataset& raw, ScoreSource source) {
    const auto selected = select_features(raw, model.stats.names);
    return score_matrix(model, selected.features, source);
}

NamedRule pipeline_rule(const FactorConfig& config, Ties ties, std::string label) {
    return {std::move(label), [config, ties](const Eigen::MatrixXd& x, const SurvivalData& data) -> SurvivalPredictor {
                std::vector<std::string> names;
                for (Eigen::Index j = 0; j < x.cols(); ++j) names.push_back("V" + std::to_string(j + 1));
                const auto solution = fit_factor_solution(x, names, config);
                const auto& kept = solution.filter.retained;
                const auto scores = score_matrix(solution.scoring, x(Eigen::all, kept), ScoreSource::training);
                CoxOptions options;
                options.ties = ties;
                auto cox = fit_cox(scores.values, data, options);
                return [scoring = solution.scoring, kept, cox = std::move(cox)](const Eigen::MatrixXd& xn,
                                                                                 const std::vector<double>& times) {
                    const auto s = score_matrix(scoring, xn(Eigen::all, kept), ScoreSource::validation);
                    return predict_survival(cox, s.values, times);
                };
            }};
}

json to_json(const PipelineConfig& c) {
    json j;
    j["input"] = c.input.string();
    j["output_dir"] = c.output_dir.string();
    j["time_col"] = c.time_col;
    j["status_col"] = c.status_col;
    j["tau_r"] = c.factor.tau_r;
    j["filter_ties"] = to_string(c.factor.filter_ties);
    j["cv_folds"] = c.factor.cv_folds;
    j["m"] = c.factor.m ? json(*c.factor.m) : json("AUTO");
    j["omega"] = c.factor.omega;
    j["rotate"] = c.factor.rotate;
    j["ties"] = to_string(c.ties);
    j["tau"] = c.tau ? json(*c.tau) : json("MEDIAN");
    j["brier_mode"] = to_string(c.brier_mode);
    j["brier_folds"] = c.brier_folds;
    j["brier_repeats"] = c.brier_repeats;
    j["seed"] = c.seed;
    return j;
}

PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig c;
    c.input = j.value("input", std::string{});
    c.output_dir = j.value("output_dir", std::string{});
    c.time_col = j.value("time_col", c.time_col);
    c.status_col = j.value("status_col", c.status_col);
    c.factor.tau_r = j.value("tau_r", c.factor.tau_r);
    c.factor.filter_ties = parse_tie_rule(j.value("filter_ties", std::string("first")));
    c.factor.cv_folds = j.value("cv_folds", c.factor.cv_folds);
    if (j.contains("m") && j["m"].is_number_integer()) c.factor.m = j["m"].get<int>();
    c.factor.omega = j.value("omega", c.factor.omega);
    c.factor.rotate = j.value("rotate", c.factor.rotate);
    c.ties = parse_ties(j.value("ties", std::string("efron")));
    if (j.contains("tau") && j["tau"].is_number()) c.tau = j["tau"].get<double>();
    c.brier_mode = parse_brier_mode(j.value("brier_mode", std::string("apparent")));
    c.brier_folds = j.value("brier_folds", c.brier_folds);
    c.brier_repeats = j.value("brier_repeats", c.brier_repeats);
    c.seed = j.value("seed", c.seed);
    c.factor.seed = c.seed;
    return c;
}

BrierSummary summarize_brier(std::vector<BrierCurve> curves, double tau) {
    BrierSummary out;
    out.tau = tau;
    for (const auto& c : curves) out.integrated.push_back(integrate_brier(c, tau));
    for (std::size_t k = 1; k < out.integrated.size(); ++k)
        out.integrated[k].r2 = r_squared(out.integrated[k], out.integrated.front());
    if (!out.integrated.empty()) out.integrated.front().r2 = 0.0;
    out.curves = std::move(curves);
    return out;
}

json to_json(const BrierSummary& s) {
    json models = json::array();
    for (std::size_t k = 0; k < s.curves.size(); ++k) {
        json m;
        m["model"] = s.curves[k].label;
        m["variant"] = to_string(s.curves[k].variant);
        m["b_integrated"] = s.integrated[k].integrated;
        m["r2"] = s.integrated[k].r2 ? json(*s.integrated[k].r2) : json(nullptr);
        m["tau"] = s.tau;
        models.push_back(std::move(m));
    }
    json j;
    j["tau"] = s.tau;
    j["reference"] = s.curves.empty() ? "" : s.curves.front().label;
    j["models"] = std::move(models);
    if (!s.log.empty()) j["log"] = s.log;
    return j;
}

void write_brier_curves(const fs::path& wide, const fs::path& long_format, const BrierSummary& s) {
    if (s.curves.empty()) return;
    std::ofstream w(wide);
    if (!w) throw InputError("cannot write '" + wide.string() + "'");
    w << "time";
    for (const auto& c : s.curves) w << ',' << c.label;
    w << '\n' << std::setprecision(17);
    for (std::size_t t = 0; t < s.curves.front().times.size(); ++t) {
        w << s.curves.front().times[t];
        for (const auto& c : s.curves) w << ',' << c.scores[t];
        w << '\n';
    }
    std::ofstream l(long_format);
    if (!l) throw InputError("cannot write '" + long_format.string() + "'");
    l << "model,variant,time,score\n" << std::setprecision(17);
    for (const auto& c : s.curves)
        for (std::size_t t = 0; t < c.times.size(); ++t)
            l << c.label << ',' << to_string(c.variant) << ',' << c.times[t] << ',' << c.scores[t] << '\n';
}

json to_json(const ColumnStats& stats) {
    return {{"names", stats.names}, {"means", vector_json(stats.means)}, {"sds", vector_json(stats.sds)}};
}

ColumnStats column_stats_from_json(const json& j) {
    ColumnStats s;
    s.names = j.at("names").get<std::vector<std::string>>();
    s.means = vector_from_json(j.at("means"));
    s.sds = vector_from_json(j.at("sds"));
    if (s.means.size() != static_cast<Eigen::Index>(s.names.size()) || s.sds.size() != s.means.size())
        throw InputError("column statistics: names, means and sds differ in length");
    return s;
}

json to_json(const ScoringModel& model) {
    json j;
    j["stats"] = to_json(model.stats);
    j["m"] = model.loadings.cols();
    j["loadings"] = matrix_json(model.loadings);
    j["uniquenesses"] = vector_json(model.uniquenesses);
    std::ostringstream fp;
    fp << std::hex << std::setw(16) << std::setfill('0') << model.fingerprint();
    j["fingerprint"] = fp.str();
    return j;
}

ScoringModel scoring_model_from_json(const json& j) {
    const json& src = j.contains("scoring") ? j.at("scoring") : j;
    ScoringModel model;
    model.stats = column_stats_from_json(src.at("stats"));
    model.loadings = matrix_from_json(src.at("loadings"), src.at("m").get<Eigen::Index>());
    model.uniquenesses = vector_from_json(src.at("uniquenesses"));
    if (model.loadings.rows() != model.uniquenesses.size() ||
        model.loadings.rows() != static_cast<Eigen::Index>(model.stats.names.size()))
        throw InputError("model: loadings, uniquenesses and feature names disagree in size");
    return model;
}

json to_json(const FactorSolution& s, double omega) {
    json j;
    j["input_features"] = s.input_names.size();
    j["filter"] = {{"threshold", s.filter.threshold},
                   {"retained", names_of(s.filter.retained, s.input_names)},
                   {"removed", names_of(s.filter.removed, s.input_names)}};
    j["theta"] = s.penalty.theta;
    j["cv_score"] = s.penalty.cv_score;
    j["cv_folds"] = s.penalty.folds;
    j["condition_number"] = s.condition_number;
    j["m"] = s.m;
    j["m_source"] = s.m_auto ? "AUTO" : "fixed";
    j["omega"] = omega;
    j["discrepancy"] = s.model.discrepancy;
    j["iterations"] = s.model.iterations;
    j["converged"] = s.model.converged;
    j["heywood"] = std::count(s.model.heywood.begin(), s.model.heywood.end(), true);
    j["rotated"] = s.rotation.has_value();
    if (s.rotation) {
        j["varimax_criterion"] = s.rotation->criterion;
        j["varimax_sweeps"] = s.rotation->sweeps;
    }
    j["diagnostics"] = diagnostics_json(s.diagnostics);
    j["scoring"] = to_json(s.scoring);
    j["warnings"] = s.warnings;
    if (s.m_auto)
        j["advisory"] = "m = " + std::to_string(s.m) +
                        " is the Guttman upper bound; inspect the diagnostics and consider a smaller m on substantive grounds";
    return j;
}

json to_json(const SurvivalFit& fit) {
    json j;
    j["ties"] = to_string(fit.cox.ties);
    j["beta"] = vector_json(fit.cox.beta);
    std::vector<int> dropped;
    for (std::size_t k = 0; k < fit.cox.dropped.size(); ++k)
        if (fit.cox.dropped[k]) dropped.push_back(static_cast<int>(k));
    j["dropped_columns"] = dropped;
    j["log_partial_likelihood"] = fit.cox.log_likelihood;
    j["iterations"] = fit.cox.iterations;
    j["converged"] = fit.cox.converged;
    j["score_inf_norm"] = fit.cox.score.size() ? fit.cox.score.lpNorm<Eigen::Infinity>() : 0.0;
    j["baseline_hazard"] = {{"times", fit.cox.hazard_times}, {"cumulative", fit.cox.cumulative_hazard}};
    j["reference_km"] = step_curve_json(fit.reference);
    j["warnings"] = fit.cox.warnings;
    return j;
}

SurvivalFit survival_fit_from_json(const json& j) {
    SurvivalFit fit;
    fit.cox.ties = parse_ties(j.value("ties", std::string("efron")));
    fit.cox.beta = vector_from_json(j.at("beta"));
    fit.cox.dropped.assign(static_cast<std::size_t>(fit.cox.beta.size()), false);
    for (int k : j.value("dropped_columns", std::vector<int>{})) fit.cox.dropped.at(static_cast<std::size_t>(k)) = true;
    fit.cox.log_likelihood = j.value("log_partial_likelihood", 0.0);
    fit.cox.iterations = j.value("iterations", 0);
    fit.cox.converged = j.value("converged", true);
    fit.cox.hazard_times = j.at("baseline_hazard").at("times").get<std::vector<double>>();
    fit.cox.cumulative_hazard = j.at("baseline_hazard").at("cumulative").get<std::vector<double>>();
    if (fit.cox.hazard_times.size() != fit.cox.cumulative_hazard.size())
        throw InputError("cox model: baseline hazard times and values differ in length");
    fit.reference = step_curve_from_json(j.at("reference_km"));
    return fit;
}

void ensure_writable(const std::vector<fs::path>& paths, bool force) {
    if (force) return;
    for (const auto& p : paths)
        if (fs::exists(p)) throw InputError("'" + p.string() + "' already exists; pass --force to overwrite");
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

RunReport run_pipeline(const PipelineConfig& config) {
    const fs::path dir = config.output_dir;
    const std::vector<fs::path> targets = {
        dir / "stats.json",       dir / "filter.json",       dir / "filtered_correlation.csv",
        dir / "shrunken_correlation.csv", dir / "model.json", dir / "loadings.csv",
        dir / "scores.csv",       dir / "cox.json",          dir / "brier.json",
        dir / "brier_curve.csv",  dir / "brier_long.csv",    dir / "report.json"};
    run_stage("output", [&] {
        if (config.output_dir.empty()) throw InputError("no output directory given");
        fs::create_directories(dir);
        ensure_writable(targets, config.force);
    });

    const auto raw = run_stage("ingest", [&] {
        auto r = load_csv(config.input, SurvivalColumns{config.time_col, config.status_col});
        if (!r.survival || r.survival->events() == 0) throw InputError("the outcome has no events");
        return r;
    });
    const SurvivalData& outcome = *raw.survival;

    FactorConfig factor = config.factor;
    factor.seed = derive_seed(config.seed, hash_string("factor"));
    const auto solution = fit_factor_solution(raw.features, raw.feature_names, factor);

    const auto scores = run_stage("scores", [&] { return score_dataset(solution.scoring, raw, ScoreSource::training); });
    const auto fit = run_stage("survfit", [&] {
        CoxOptions options;
        options.ties = config.ties;
        return SurvivalFit{fit_cox(scores.values, outcome, options), km(outcome)};
    });

    const auto brier = run_stage("brier", [&] {
        const double tau = config.tau ? *config.tau : median_time(outcome);
        const auto grid = evaluation_grid(outcome, tau);
        std::vector<BrierCurve> curves;
        std::vector<std::string> log;
        switch (config.brier_mode) {
            case BrierMode::apparent: {
                const auto g = reverse_km(outcome);
                const Eigen::MatrixXd km_pred = [&] {
                    Eigen::MatrixXd m(raw.rows(), static_cast<Eigen::Index>(grid.size()));
                    for (std::size_t k = 0; k < grid.size(); ++k)
                        m.col(static_cast<Eigen::Index>(k)).setConstant(fit.reference.at(grid[k]));
                    return m;
                }();
                curves.push_back(brier_curve(km_pred, outcome, grid, g, BrierVariant::apparent, "KM"));
                curves.push_back(brier_curve(predict_survival(fit.cox, scores.values, grid), outcome, grid, g,
                                             BrierVariant::apparent, "FMradio"));
                break;
            }
            case BrierMode::cv: {
                BrierCvOptions options;
                options.folds = config.brier_folds;
                options.repeats = config.brier_repeats;
                options.seed = derive_seed(config.seed, hash_string("brier_cv"));
                auto result = brier_cv(raw.features, outcome, {km_rule(), pipeline_rule(factor, config.ties)}, grid,
                                       options);
                curves = std::move(result.curves);
                log = std::move(result.log);
                break;
            }
            case BrierMode::validate:
                throw InputError("mode 'validate' needs a trained model; use the validate subcommand");
        }
        auto summary = summarize_brier(std::move(curves), tau);
        summary.log = std::move(log);
        return summary;
    });

    RunReport report;
    run_stage("output", [&] {
        write_json(targets[0], to_json(solution.input_stats));
        json filter_json = {{"threshold", solution.filter.threshold},
                            {"retained", names_of(solution.filter.retained, raw.feature_names)},
                            {"removed", names_of(solution.filter.removed, raw.feature_names)},
                            {"theta", solution.penalty.theta},
                            {"cv_score", solution.penalty.cv_score},
                            {"condition_number", solution.condition_number}};
        write_json(targets[1], filter_json);
        write_matrix_csv(targets[2], solution.filter.filtered.names, solution.filter.filtered.values);
        write_matrix_csv(targets[3], solution.filter.filtered.names, solution.shrunk.values());
        write_json(targets[4], to_json(solution, factor.omega));
        write_loadings_csv(targets[5], solution.scoring.stats.names, solution.scoring.loadings);
        write_scores_csv(targets[6], scores, outcome);
        write_json(targets[7], to_json(fit));
        write_json(targets[8], to_json(brier));
        write_brier_curves(targets[9], targets[10], brier);

        json& r = report.json;
        r["tool"] = "fmradio";
        r["version"] = kToolVersion;
        r["config"] = to_json(config);
        r["seed"] = config.seed;
        r["n"] = raw.rows();
        r["events"] = outcome.events();
        r["features_in"] = raw.cols();
        r["features_retained"] = solution.filter.retained.size();
        r["features_removed"] = solution.filter.removed.size();
        r["theta"] = solution.penalty.theta;
        r["cv_score"] = solution.penalty.cv_score;
        r["condition_number"] = solution.condition_number;
        r["guttman_bound"] = solution.guttman.m;
        r["m"] = solution.m;
        r["m_source"] = solution.m_auto ? "AUTO" : "fixed";
        r["factor_model"] = {{"discrepancy", solution.model.discrepancy},
                             {"converged", solution.model.converged},
                             {"iterations", solution.model.iterations},
                             {"rotated", solution.rotation.has_value()}};
        r["diagnostics"] = diagnostics_json(solution.diagnostics);
        r["cox"] = {{"beta", vector_json(fit.cox.beta)}, {"converged", fit.cox.converged}};
        r["brier"] = to_json(brier);
        std::vector<std::string> warnings = solution.warnings;
        warnings.insert(warnings.end(), fit.cox.warnings.begin(), fit.cox.warnings.end());
        r["warnings"] = warnings;
        if (solution.m_auto)
            r["advisory"] = "m = " + std::to_string(solution.m) +
                            " is the Guttman upper bound; inspect the diagnostics and consider a smaller m on substantive grounds";
        write_json(targets[11], r);
    });
    report.artifacts = targets;
    return report;
}

RunReport validate_external(const ValidationConfig& config) {
    const fs::path dir = config.output_dir;
    const std::vector<fs::path> targets = {dir / "validation_scores.csv", dir / "validation_brier.json",
                                           dir / "validation_brier_curve.csv", dir / "validation_brier_long.csv",
                                           dir / "validation_report.json"};
    run_stage("output", [&] {
        if (config.output_dir.empty()) throw InputError("no output directory given");
        fs::create_directories(dir);
        ensure_writable(targets, config.force);
    });

    auto [model_json, scoring, fit] = run_stage("ingest", [&] {
        auto mj = read_json(config.model_dir / "model.json");
        auto sm = scoring_model_from_json(mj);
        if (config.stats) {
            const auto all = column_stats_from_json(read_json(*config.stats));
            std::vector<Eigen::Index> idx;
            for (const auto& name : sm.stats.names) {
                auto it = std::find(all.names.begin(), all.names.end(), name);
                if (it == all.names.end()) throw InputError("stats file lacks feature '" + name + "'");
                idx.push_back(it - all.names.begin());
            }
            sm.stats = subset_stats(all, idx);
        }
        auto sf = survival_fit_from_json(read_json(config.model_dir / "cox.json"));
        return std::make_tuple(std::move(mj), std::move(sm), std::move(sf));
    });
    const auto raw = run_stage("ingest", [&] {
        return load_csv(config.input, SurvivalColumns{config.time_col, config.status_col});
    });
    const SurvivalData outcome = run_stage("ingest", [&] { return require_outcome(raw); });

    const auto scores = run_stage("scores", [&] { return score_dataset(scoring, raw, ScoreSource::validation); });
    if (fit.cox.beta.size() != scores.values.cols())
        throw StageError("survfit", "cox model has " + std::to_string(fit.cox.beta.size()) +
                                        " coefficients but the factor model has " +
                                        std::to_string(scores.values.cols()) + " factors");

    std::vector<std::string> warnings;
    if (config.recalibrate) {
        run_stage("survfit", [&] {
            CoxOptions options;
            options.ties = fit.cox.ties;
            fit.cox = fit_cox(scores.values, outcome, options);
            fit.reference = km(outcome);
            warnings = fit.cox.warnings;
        });
    }

    const auto brier = run_stage("brier", [&] {
        const double tau = config.tau ? *config.tau : median_time(outcome);
        const auto grid = evaluation_grid(outcome, tau);
        const auto g = reverse_km(outcome);
        Eigen::MatrixXd km_pred(raw.rows(), static_cast<Eigen::Index>(grid.size()));
        for (std::size_t k = 0; k < grid.size(); ++k)
            km_pred.col(static_cast<Eigen::Index>(k)).setConstant(fit.reference.at(grid[k]));
        std::vector<BrierCurve> curves;
        curves.push_back(brier_curve(km_pred, outcome, grid, g, BrierVariant::validated, "KM"));
        curves.push_back(brier_curve(predict_survival(fit.cox, scores.values, grid), outcome, grid, g,
                                     BrierVariant::validated, "FMradio"));
        return summarize_brier(std::move(curves), tau);
    });

    RunReport report;
    run_stage("output", [&] {
        write_scores_csv(targets[0], scores, outcome);
        write_json(targets[1], to_json(brier));
        write_brier_curves(targets[2], targets[3], brier);
        json& r = report.json;
        r["tool"] = "fmradio";
        r["version"] = kToolVersion;
        r["config"] = {{"model_dir", config.model_dir.string()},
                       {"input", config.input.string()},
                       {"stats", config.stats ? json(config.stats->string()) : json(nullptr)},
                       {"time_col", config.time_col},
                       {"status_col", config.status_col},
                       {"tau", config.tau ? json(*config.tau) : json("MEDIAN")},
                       {"recalibrate", config.recalibrate}};
        r["n"] = raw.rows();
        r["events"] = outcome.events();
        r["m"] = scores.values.cols();
        r["model_fingerprint"] = to_json(scoring)["fingerprint"];
        r["cox"] = {{"beta", vector_json(fit.cox.beta)}, {"recalibrated", config.recalibrate}};
        r["brier"] = to_json(brier);
        r["warnings"] = warnings;
        write_json(targets[4], r);
    });
    report.artifacts = targets;
    return report;
}

}  // namespace fmradio
