#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fmradio/corr_shrink.hpp"

namespace fmradio {

enum class QuasiNewtonUpdate { bfgs, dfp };

struct FitOptions {
    double psi_floor = 0.005;
    double f_tol = 1e-9;     // |delta F| between accepted steps
    double grad_tol = 1e-6;  // infinity norm of the gradient in log-uniqueness space
    int max_iter = 500;
    QuasiNewtonUpdate update = QuasiNewtonUpdate::bfgs;
    /// Start values; empty means the classical (1 - m / 2p) / [R^-1]_jj.
    Eigen::VectorXd start;
};

/// Orthogonal common factor model Sigma = Lambda Lambda' + Psi on the correlation scale.
struct FactorModel {
    Eigen::MatrixXd loadings;       // p x m
    Eigen::VectorXd uniquenesses;   // diagonal of Psi
    int m = 0;
    double discrepancy = 0.0;       // F[Sigma; R]
    int iterations = 0;
    bool converged = false;
    std::vector<bool> heywood;      // uniqueness pinned at the floor
    std::vector<std::string> names;

    Eigen::MatrixXd implied() const;
    Eigen::VectorXd communalities() const;
};

/// ln|Sigma| + tr[R Sigma^-1] - ln|R| - p.
double discrepancy(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& r);

/// Concentrated discrepancy over log(psi - floor) and its gradient.
/// Exposed for gradient checks; fit_ml_factor is the normal entry point.
class ConcentratedDiscrepancy {
public:
    ConcentratedDiscrepancy(const Eigen::MatrixXd& r, int m, double psi_floor);

    double value(const Eigen::VectorXd& x) const;
    double value_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;
    /// Loadings of the canonical solution at x (columns ordered by descending Lambda' Psi^-1 Lambda).
    Eigen::MatrixXd loadings(const Eigen::VectorXd& x) const;
    Eigen::VectorXd psi(const Eigen::VectorXd& x) const;
    Eigen::VectorXd to_x(const Eigen::VectorXd& psi) const;

private:
    const Eigen::MatrixXd& r_;
    int m_;
    double floor_;
};

/// Maximum-likelihood factor analysis of a positive-definite correlation matrix.
/// Lambda is concentrated out for fixed Psi (eigen-solution of Psi^-1/2 R Psi^-1/2);
/// a quasi-Newton iteration runs over log uniquenesses.
FactorModel fit_ml_factor(const Eigen::MatrixXd& r, int m, const FitOptions& options = {});
FactorModel fit_ml_factor(const ShrunkenCorrelation& s, int m, const FitOptions& options = {});

struct GuttmanBound {
    int m = 0;
    Eigen::VectorXd gaps;  // (1 - theta)(d_j - 1), descending
};

/// Number of strictly positive eigenvalues of R(theta) - I.
GuttmanBound guttman_bound(const ShrunkenCorrelation& s);

/// Largest m with (p - m)^2 - (p + m) >= 0.
int ledermann_max(int p);

/// Free parameters p(m + 1) - m(m - 1)/2.
double free_parameters(int p, int m);
/// Degrees of freedom [(p - m)^2 - (p + m)] / 2.
double lrt_degrees_of_freedom(int p, int m);
/// Rank-adjusted p'(p' + 1)/2 - [pm + p - m(m - 1)/2].
double lrt_degrees_of_freedom_rank_adjusted(int p, int rank, int m);

/// Kaiser-Meyer-Olkin sampling adequacy of R(theta). Throws InputError at the identity.
double kmo(const Eigen::MatrixXd& r);
double kmo(const ShrunkenCorrelation& s);

/// SMC_j = 1 - 1 / [R^-1]_jj.
Eigen::VectorXd smc_lower_bounds(const Eigen::MatrixXd& r);
Eigen::VectorXd smc_lower_bounds(const ShrunkenCorrelation& s);

struct VarianceExplained {
    Eigen::VectorXd per_factor;  // (Lambda' Lambda)_kk / p
    double cumulative = 0.0;
};

VarianceExplained variance_explained(const Eigen::MatrixXd& loadings);

/// diag(Lambda' R(theta)^-1 Lambda).
Eigen::VectorXd determinacy(const Eigen::MatrixXd& loadings, const ShrunkenCorrelation& s);

struct ThresholdedLoadings {
    Eigen::MatrixXd loadings;
    std::vector<int> significant;  // per factor, count of |lambda| > omega
    std::vector<bool> weak;        // fewer than three significant loadings
};

ThresholdedLoadings threshold_loadings(const Eigen::MatrixXd& loadings, double omega = 0.3);

struct DimensionDiagnostics {
    int guttman_m = 0;
    Eigen::VectorXd eigen_gaps;
    std::optional<double> kmo;
    Eigen::VectorXd smc_lower;
    Eigen::VectorXd communalities;
    VarianceExplained variance;
    Eigen::VectorXd determinacy;
    int ledermann_max = 0;
    ThresholdedLoadings thresholded;
};

DimensionDiagnostics diagnose(const ShrunkenCorrelation& s, const Eigen::MatrixXd& loadings, double omega = 0.3);

enum class SelectionMethod { gb, aic, bic, lrt };
std::string to_string(SelectionMethod method);

struct SelectionTally {
    SelectionMethod method = SelectionMethod::gb;
    int chosen_m = 0;
    std::map<int, double> values;  // criterion value or test statistic per m
    bool accepted = true;          // LRT: false when no m was retained
    std::vector<std::string> warnings;
};

/// One ML fit per m on a fixed correlation matrix, shared by the selectors.
class FitCache {
public:
    explicit FitCache(Eigen::MatrixXd r, FitOptions options = {});

    const FactorModel& get(int m);
    const Eigen::MatrixXd& correlation() const noexcept { return r_; }
    int p() const noexcept { return static_cast<int>(r_.rows()); }
    double log_det_r() const noexcept { return log_det_r_; }

private:
    Eigen::MatrixXd r_;
    FitOptions options_;
    double log_det_r_ = 0.0;
    std::map<int, FactorModel> fits_;
};

/// n{p ln 2pi + ln|Sigma| + tr(Sigma^-1 R)} + penalty * eta, minimized over [m_lo, m_hi].
SelectionTally select_aic(FitCache& fits, int n, int m_lo, int m_hi);
SelectionTally select_bic(FitCache& fits, int n, int m_lo, int m_hi);
SelectionTally select_aic(const ShrunkenCorrelation& s, int n, int m_lo, int m_hi);
SelectionTally select_bic(const ShrunkenCorrelation& s, int n, int m_lo, int m_hi);

struct LrtOptions {
    double alpha = 0.05;
    int m_max = 0;               // 0 means the Ledermann bound
    bool rank_adjusted = false;  // use p' = rank(R) in the degrees of freedom
    int rank = 0;                // required when rank_adjusted
};

/// Sequential test of m = 1, 2, ... until (n - 1) F < chi2 critical value.
SelectionTally select_lrt(FitCache& fits, int n, const LrtOptions& options = {});
SelectionTally select_lrt(const ShrunkenCorrelation& s, int n, double alpha = 0.05);

}  // namespace fmradio
