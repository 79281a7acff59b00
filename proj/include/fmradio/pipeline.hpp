#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fmradio/corr_shrink.hpp"
#include "fmradio/data_ingest.hpp"
#include "fmradio/fa_ml.hpp"
#include "fmradio/rotation.hpp"
#include "fmradio/scores.hpp"
#include "fmradio/survival.hpp"

namespace fmradio {

inline constexpr const char* kToolVersion = "0.1.0";

/// Outcome-blind settings: everything up to and including the factor solution.
struct FactorConfig {
    double tau_r = 0.95;
    TieRule filter_ties = TieRule::first;
    int cv_folds = 5;
    std::optional<int> m;  // empty means AUTO (Guttman bound, clamped to the Ledermann bound)
    double omega = 0.3;
    bool rotate = true;
    std::uint64_t seed = 0;
    FitOptions fit;
};

/// What is needed to score new rows: training statistics of the retained
/// features and the final (possibly rotated) loadings.
struct ScoringModel {
    ColumnStats stats;
    Eigen::MatrixXd loadings;
    Eigen::VectorXd uniquenesses;

    std::uint64_t fingerprint() const { return model_fingerprint(loadings, uniquenesses); }
};

struct FactorSolution {
    std::vector<std::string> input_names;
    ColumnStats input_stats;
    FilterResult filter;
    PenaltySearchResult penalty;
    ShrunkenCorrelation shrunk;
    double condition_number = 0.0;
    GuttmanBound guttman;
    int m = 0;
    bool m_auto = true;
    FactorModel model;                     // canonical (unrotated) ML solution
    std::optional<RotationResult> rotation;
    DimensionDiagnostics diagnostics;
    ScoringModel scoring;
    std::vector<std::string> warnings;
};

/// filter -> CV penalty -> shrink -> dimension -> ML fit -> rotation.
FactorSolution fit_factor_solution(const Eigen::MatrixXd& features, const std::vector<std::string>& names,
                                   const FactorConfig& config);

/// Thomson scores of raw rows: features are matched by name, standardized with
/// the training statistics, and projected with the training solution.
FactorScores score_dataset(const ScoringModel& model, const RawDataset& raw, ScoreSource source);

/// Same for a raw matrix whose columns are already in the model's order.
FactorScores score_matrix(const ScoringModel& model, const Eigen::MatrixXd& x, ScoreSource source);

/// Full refit of the factor pipeline plus Cox on the factor scores.
NamedRule pipeline_rule(const FactorConfig& config, Ties ties = Ties::efron, std::string label = "FMradio");

enum class BrierMode { apparent, validate, cv };
std::string to_string(BrierMode mode);
BrierMode parse_brier_mode(const std::string& s);
std::string to_string(Ties ties);
Ties parse_ties(const std::string& s);
std::string to_string(TieRule rule);
TieRule parse_tie_rule(const std::string& s);

struct PipelineConfig {
    std::filesystem::path input;
    std::filesystem::path output_dir;
    std::string time_col = "time";
    std::string status_col = "status";
    FactorConfig factor;
    Ties ties = Ties::efron;
    std::optional<double> tau;  // empty means the median observed time
    BrierMode brier_mode = BrierMode::apparent;
    int brier_folds = 5;
    int brier_repeats = 500;
    std::uint64_t seed = 0;
    bool force = false;
};

nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

/// Brier evaluation summary for a set of models against the KM reference.
struct BrierSummary {
    std::vector<BrierCurve> curves;  // reference first
    std::vector<IntegratedScore> integrated;
    double tau = 0.0;
    std::vector<std::string> log;
};

nlohmann::json to_json(const BrierSummary& summary);
void write_brier_curves(const std::filesystem::path& wide, const std::filesystem::path& long_format,
                        const BrierSummary& summary);

/// Integrates every curve and fills R^2 against curves.front().
BrierSummary summarize_brier(std::vector<BrierCurve> curves, double tau);

nlohmann::json to_json(const FactorSolution& solution, double omega);
nlohmann::json to_json(const ScoringModel& model);
ScoringModel scoring_model_from_json(const nlohmann::json& j);
ColumnStats column_stats_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ColumnStats& stats);

struct SurvivalFit {
    CoxModel cox;
    StepSurvivalCurve reference;  // KM of the training outcomes
};

nlohmann::json to_json(const SurvivalFit& fit);
SurvivalFit survival_fit_from_json(const nlohmann::json& j);

struct RunReport {
    nlohmann::json json;
    std::vector<std::filesystem::path> artifacts;
};

/// Runs every stage and writes the artifacts; stage failures surface as StageError.
RunReport run_pipeline(const PipelineConfig& config);

struct ValidationConfig {
    std::filesystem::path model_dir;  // holds model.json and cox.json
    std::filesystem::path input;
    std::optional<std::filesystem::path> stats;  // overrides the training stats stored in model.json
    std::filesystem::path output_dir;
    std::string time_col = "time";
    std::string status_col = "status";
    std::optional<double> tau;
    bool recalibrate = false;
    bool force = false;
};

RunReport validate_external(const ValidationConfig& config);

/// Refuses to replace existing files unless `force` is set.
void ensure_writable(const std::vector<std::filesystem::path>& paths, bool force);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace fmradio
