#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fmradio/survival_data.hpp"

namespace fmradio {

/// Right-continuous, non-increasing step function starting at 1.
struct StepSurvivalCurve {
    std::vector<double> times;   // jump times, ascending
    std::vector<double> values;  // value from times[i] (inclusive) until the next jump

    double at(double t) const;      // S(t)
    double before(double t) const;  // S(t-)
};

/// Product-limit estimator over event times.
StepSurvivalCurve km(const SurvivalData& data);
/// Product-limit estimator of the censoring distribution (status flipped).
StepSurvivalCurve reverse_km(const SurvivalData& data);

enum class Ties { breslow, efron };

struct CoxOptions {
    Ties ties = Ties::efron;
    int max_iter = 50;
    double grad_tol = 1e-9;
    double beta_bound = 30.0;  // larger |beta| is treated as divergence
};

struct CoxModel {
    Eigen::VectorXd beta;                  // zero for dropped columns
    std::vector<bool> dropped;             // constant predictor columns
    std::vector<double> hazard_times;      // distinct event times
    std::vector<double> cumulative_hazard; // Breslow H0 at hazard_times (x = 0 reference)
    Ties ties = Ties::efron;
    double log_likelihood = 0.0;
    Eigen::VectorXd score;                 // gradient at beta
    Eigen::MatrixXd information;           // negative Hessian at beta
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;

    double baseline_hazard(double t) const;
};

/// Log partial likelihood, with score and information when requested.
double cox_log_partial_likelihood(const Eigen::MatrixXd& x, const SurvivalData& data, const Eigen::VectorXd& beta,
                                  Ties ties, Eigen::VectorXd* score = nullptr, Eigen::MatrixXd* information = nullptr);

/// Newton-Raphson fit of the Cox model with step halving.
CoxModel fit_cox(const Eigen::MatrixXd& x, const SurvivalData& data, const CoxOptions& options = {});

/// S0(t)^exp(x beta) with S0 = exp(-H0).
double predict_survival(const CoxModel& model, const Eigen::VectorXd& x_row, double t);
/// n x times.size() matrix of predicted survival probabilities.
Eigen::MatrixXd predict_survival(const CoxModel& model, const Eigen::MatrixXd& x, const std::vector<double>& times);

enum class BrierVariant { apparent, validated, cv_averaged };
std::string to_string(BrierVariant variant);

struct BrierCurve {
    std::vector<double> times;
    std::vector<double> scores;
    double tau = 0.0;
    BrierVariant variant = BrierVariant::apparent;
    std::string label;
};

/// Median of the observed times.
double median_time(const SurvivalData& data);

/// 0, every distinct observed time below tau, and tau itself.
std::vector<double> evaluation_grid(const SurvivalData& data, double tau);

/// IPCW Brier score B(t) = (1/n) sum W_i(t) [1{T_i >= t} - pi_i(t)]^2.
/// `predictions` is n x times.size(); censoring weights use left limits of G.
BrierCurve brier_curve(const Eigen::MatrixXd& predictions, const SurvivalData& data, const std::vector<double>& times,
                       const StepSurvivalCurve& censoring, BrierVariant variant = BrierVariant::apparent,
                       std::string label = {});

struct IntegratedScore {
    double integrated = 0.0;
    double tau = 0.0;
    std::optional<double> r2;
};

/// (1/tau) * trapezoid integral of B over [0, tau].
IntegratedScore integrate_brier(const BrierCurve& curve, double tau);

/// 1 - model / reference.
double r_squared(double model, double reference);
double r_squared(const IntegratedScore& model, const IntegratedScore& reference);

/// Predicts survival probabilities at the requested times for each row of x.
using SurvivalPredictor = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x, const std::vector<double>& times)>;
/// Fits a predictor on training rows.
using PredictionRule = std::function<SurvivalPredictor(const Eigen::MatrixXd& x, const SurvivalData& data)>;

struct NamedRule {
    std::string label;
    PredictionRule fit;
};

/// Kaplan-Meier null model that ignores the predictors.
NamedRule km_rule(std::string label = "KM");
/// Cox model on the predictors as given.
NamedRule cox_rule(Ties ties = Ties::efron, std::string label = "Cox");

/// Each rule fitted and evaluated on the same data.
std::vector<BrierCurve> brier_apparent(const Eigen::MatrixXd& x, const SurvivalData& data,
                                       const std::vector<NamedRule>& rules, const std::vector<double>& times);

struct BrierCvOptions {
    int folds = 5;
    int repeats = 500;
    std::uint64_t seed = 0;
    int max_refold = 20;
};

struct BrierCvResult {
    std::vector<BrierCurve> curves;  // one per rule, in rule order
    int refolds = 0;
    std::vector<std::string> log;
};

/// Repeated K-fold cross-validated Brier curves; every rule sees the same folds.
/// Censoring weights come from the reverse KM of the full data. A fold split whose
/// training part has no events is redrawn with a new sub-seed.
BrierCvResult brier_cv(const Eigen::MatrixXd& x, const SurvivalData& data, const std::vector<NamedRule>& rules,
                                 const std::vector<double>& times, const BrierCvOptions& options);

}  // namespace fmradio
