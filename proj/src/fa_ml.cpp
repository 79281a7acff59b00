#include "fmradio/fa_ml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "fmradio/error.hpp"
#include "fmradio/numeric.hpp"

namespace fmradio {

Eigen::MatrixXd FactorModel::implied() const {
    Eigen::MatrixXd sigma = loadings * loadings.transpose();
    sigma.diagonal() += uniquenesses;
    return sigma;
}

Eigen::VectorXd FactorModel::communalities() const { return loadings.rowwise().squaredNorm(); }

double discrepancy(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& r) {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw NumericalError("discrepancy: model matrix is not positive definite");
    const double log_det_sigma = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double trace = llt.solve(r).trace();
    return log_det_sigma + trace - log_det_spd(r) - static_cast<double>(r.rows());
}

ConcentratedDiscrepancy::ConcentratedDiscrepancy(const Eigen::MatrixXd& r, int m, double psi_floor)
    : r_(r), m_(m), floor_(psi_floor) {}

Eigen::VectorXd ConcentratedDiscrepancy::psi(const Eigen::VectorXd& x) const {
    return (x.array().exp() + floor_).matrix();
}

Eigen::VectorXd ConcentratedDiscrepancy::to_x(const Eigen::VectorXd& psi) const {
    return (psi.array() - floor_).max(floor_).log().matrix();
}

namespace {

Eigen::MatrixXd scaled(const Eigen::MatrixXd& r, const Eigen::VectorXd& psi) {
    const Eigen::VectorXd s = psi.cwiseSqrt().cwiseInverse();
    return s.asDiagonal() * r * s.asDiagonal();
}

double tail_sum(const Eigen::VectorXd& ascending, int count) {
    double f = 0.0;
    for (int j = 0; j < count; ++j) {
        const double e = ascending(j);
        if (!(e > 0.0)) return std::numeric_limits<double>::infinity();
        f += e - std::log(e) - 1.0;
    }
    return f;
}

}  // namespace

double ConcentratedDiscrepancy::value(const Eigen::VectorXd& x) const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled(r_, psi(x)), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    return tail_sum(es.eigenvalues(), static_cast<int>(r_.rows()) - m_);
}

double ConcentratedDiscrepancy::value_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    const Eigen::VectorXd ps = psi(x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled(r_, ps));
    if (es.info() != Eigen::Success) throw NumericalError("fit_ml_factor: eigendecomposition failed");
    const auto p = static_cast<int>(r_.rows());
    const Eigen::VectorXd& theta = es.eigenvalues();
    const auto top = es.eigenvectors().rightCols(m_);
    // dF/dpsi_i = (psi_i sum_k (theta_k - 1) w_ik^2 + psi_i - r_ii) / psi_i^2
    const Eigen::ArrayXd excess = (theta.tail(m_).array() - 1.0);
    const Eigen::ArrayXd common = (top.array().square().rowwise() * excess.transpose()).rowwise().sum();
    const Eigen::ArrayXd dpsi = (ps.array() * common + ps.array() - r_.diagonal().array()) / ps.array().square();
    grad = (dpsi * (ps.array() - floor_)).matrix();
    return tail_sum(theta, p - m_);
}

Eigen::MatrixXd ConcentratedDiscrepancy::loadings(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd ps = psi(x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled(r_, ps));
    if (es.info() != Eigen::Success) throw NumericalError("fit_ml_factor: eigendecomposition failed");
    const Eigen::VectorXd theta = es.eigenvalues().tail(m_).reverse();
    const Eigen::MatrixXd top = es.eigenvectors().rightCols(m_).rowwise().reverse();
    const Eigen::VectorXd root = (theta.array() - 1.0).max(0.0).sqrt().matrix();
    Eigen::MatrixXd lambda = ps.cwiseSqrt().asDiagonal() * top * root.asDiagonal();
    for (Eigen::Index k = 0; k < lambda.cols(); ++k)
        if (lambda.col(k).sum() < 0.0) lambda.col(k) *= -1.0;
    return lambda;
}

FactorModel fit_ml_factor(const Eigen::MatrixXd& r, int m, const FitOptions& options) {
    const auto p = static_cast<int>(r.rows());
    if (r.cols() != r.rows()) throw InputError("fit_ml_factor: correlation matrix must be square");
    if (m < 1 || m > ledermann_max(p))
        throw InputError("fit_ml_factor: m = " + std::to_string(m) + " outside [1, " + std::to_string(ledermann_max(p)) +
                         "]");

    const ConcentratedDiscrepancy objective(r, m, options.psi_floor);

    Eigen::VectorXd start = options.start;
    if (start.size() == 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(r);
        if (llt.info() != Eigen::Success) throw NumericalError("fit_ml_factor: correlation matrix is not positive definite");
        const Eigen::VectorXd inv_diag = llt.solve(Eigen::MatrixXd::Identity(p, p)).diagonal();
        start = (1.0 - 0.5 * m / p) * inv_diag.cwiseInverse();
    }
    if (start.size() != p) throw InputError("fit_ml_factor: start vector has wrong length");

    Eigen::VectorXd x = objective.to_x(start);
    Eigen::VectorXd g;
    double f = objective.value_and_gradient(x, g);
    if (!std::isfinite(f)) throw NumericalError("fit_ml_factor: objective not finite at start");

    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(p, p);
    bool scaled_h = false;
    bool converged = false;
    int iter = 0;
    constexpr double max_step = 1.0;  // in log-uniqueness units

    while (iter < options.max_iter) {
        if (g.lpNorm<Eigen::Infinity>() < options.grad_tol) {
            converged = true;
            break;
        }
        ++iter;
        Eigen::VectorXd d = -h * g;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            h.setIdentity();
            scaled_h = false;
            d = -g;
            slope = g.dot(d);
        }
        const double biggest = d.lpNorm<Eigen::Infinity>();
        if (biggest > max_step) {
            d *= max_step / biggest;
            slope *= max_step / biggest;
        }

        // backtracking Armijo search with safeguarded quadratic interpolation
        double alpha = 1.0;
        double f_new = objective.value(x + d);
        bool accepted = false;
        for (int k = 0; k < 60; ++k) {
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            double next = 0.5 * alpha;
            if (std::isfinite(f_new)) {
                const double q = -slope * alpha * alpha / (2.0 * (f_new - f - slope * alpha));
                if (q > 0.1 * alpha && q < 0.5 * alpha) next = q;
            } else {
                next = 0.1 * alpha;
            }
            alpha = next;
            f_new = objective.value(x + alpha * d);
        }
        if (!accepted) {
            // no further decrease representable; accept the current point if it is stationary to working precision
            converged = g.lpNorm<Eigen::Infinity>() < std::sqrt(options.grad_tol);
            break;
        }

        const Eigen::VectorXd x_new = x + alpha * d;
        Eigen::VectorXd g_new;
        f_new = objective.value_and_gradient(x_new, g_new);
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled_h) {
                h = Eigen::MatrixXd::Identity(p, p) * (sy / y.squaredNorm());
                scaled_h = true;
            }
            if (options.update == QuasiNewtonUpdate::bfgs) {
                const Eigen::VectorXd hy = h * y;
                const double rho = 1.0 / sy;
                const double yhy = y.dot(hy);
                h += (rho * rho * yhy + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
            } else {
                const Eigen::VectorXd hy = h * y;
                h += (s * s.transpose()) / sy - (hy * hy.transpose()) / y.dot(hy);
            }
        }
        const double change = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        if (change < options.f_tol) {
            converged = true;
            break;
        }
    }
    if (!converged && g.lpNorm<Eigen::Infinity>() < options.grad_tol) converged = true;

    FactorModel model;
    model.m = m;
    model.loadings = objective.loadings(x);
    model.uniquenesses = objective.psi(x);
    model.iterations = iter;
    model.converged = converged;
    model.heywood.resize(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) model.heywood[static_cast<std::size_t>(j)] = model.uniquenesses(j) - options.psi_floor < 1e-3;
    model.discrepancy = std::max(0.0, discrepancy(model.implied(), r));
    return model;
}

FactorModel fit_ml_factor(const ShrunkenCorrelation& s, int m, const FitOptions& options) {
    FactorModel model = fit_ml_factor(s.values(), m, options);
    model.names = s.base.names;
    return model;
}

GuttmanBound guttman_bound(const ShrunkenCorrelation& s) {
    GuttmanBound out;
    out.gaps = ((1.0 - s.theta) * (s.base_eigenvalues.array() - 1.0)).matrix();
    out.m = static_cast<int>((out.gaps.array() > 0.0).count());
    return out;
}

int ledermann_max(int p) {
    if (p < 1) throw InputError("ledermann_max: p must be positive");
    int m = 0;
    while (m + 1 < p) {
        const long long next = m + 1;
        if ((p - next) * (p - next) - (p + next) < 0) break;
        m = static_cast<int>(next);
    }
    return m;
}

double free_parameters(int p, int m) { return static_cast<double>(p) * (m + 1) - 0.5 * m * (m - 1.0); }

double lrt_degrees_of_freedom(int p, int m) {
    const double d = static_cast<double>(p - m);
    return 0.5 * (d * d - (p + m));
}

double lrt_degrees_of_freedom_rank_adjusted(int p, int rank, int m) {
    return 0.5 * rank * (rank + 1.0) - (static_cast<double>(p) * m + p - 0.5 * m * (m - 1.0));
}

double kmo(const Eigen::MatrixXd& r) {
    const Eigen::Index p = r.rows();
    Eigen::LLT<Eigen::MatrixXd> llt(r);
    if (llt.info() != Eigen::Success) throw NumericalError("kmo: matrix is not positive definite");
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::VectorXd scale = inv.diagonal().cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd partial = scale.asDiagonal() * inv * scale.asDiagonal();
    double marginal = 0.0, partial_sum = 0.0;
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j) {
            if (i == j) continue;
            marginal += r(i, j) * r(i, j);
            partial_sum += partial(i, j) * partial(i, j);
        }
    if (marginal + partial_sum < 1e-24) throw InputError("kmo: undefined for the identity matrix");
    return marginal / (marginal + partial_sum);
}

double kmo(const ShrunkenCorrelation& s) { return kmo(s.values()); }

Eigen::VectorXd smc_lower_bounds(const Eigen::MatrixXd& r) {
    Eigen::LLT<Eigen::MatrixXd> llt(r);
    if (llt.info() != Eigen::Success) throw NumericalError("smc_lower_bounds: matrix is not positive definite");
    const Eigen::VectorXd inv_diag = llt.solve(Eigen::MatrixXd::Identity(r.rows(), r.cols())).diagonal();
    return (1.0 - inv_diag.array().inverse()).max(0.0).matrix();
}

Eigen::VectorXd smc_lower_bounds(const ShrunkenCorrelation& s) {
    const Eigen::VectorXd inv_diag = s.inverse().diagonal();
    return (1.0 - inv_diag.array().inverse()).max(0.0).matrix();
}

VarianceExplained variance_explained(const Eigen::MatrixXd& loadings) {
    VarianceExplained out;
    out.per_factor = loadings.colwise().squaredNorm().transpose() / static_cast<double>(loadings.rows());
    out.cumulative = out.per_factor.sum();
    return out;
}

Eigen::VectorXd determinacy(const Eigen::MatrixXd& loadings, const ShrunkenCorrelation& s) {
    return (loadings.transpose() * s.inverse() * loadings).diagonal();
}

ThresholdedLoadings threshold_loadings(const Eigen::MatrixXd& loadings, double omega) {
    if (!(omega >= 0.0)) throw InputError("threshold_loadings: omega must be nonnegative");
    ThresholdedLoadings out;
    out.loadings = (loadings.array().abs() > omega).select(loadings, 0.0);
    for (Eigen::Index k = 0; k < loadings.cols(); ++k) {
        const auto count = static_cast<int>((loadings.col(k).array().abs() > omega).count());
        out.significant.push_back(count);
        out.weak.push_back(count < 3);
    }
    return out;
}

DimensionDiagnostics diagnose(const ShrunkenCorrelation& s, const Eigen::MatrixXd& loadings, double omega) {
    DimensionDiagnostics out;
    const auto gb = guttman_bound(s);
    out.guttman_m = gb.m;
    out.eigen_gaps = gb.gaps;
    try {
        out.kmo = kmo(s);
    } catch (const InputError&) {
        out.kmo.reset();
    }
    out.smc_lower = smc_lower_bounds(s);
    out.communalities = loadings.rowwise().squaredNorm();
    out.variance = variance_explained(loadings);
    out.determinacy = determinacy(loadings, s);
    out.ledermann_max = ledermann_max(static_cast<int>(s.size()));
    out.thresholded = threshold_loadings(loadings, omega);
    return out;
}

std::string to_string(SelectionMethod method) {
    switch (method) {
        case SelectionMethod::gb: return "GB";
        case SelectionMethod::aic: return "AIC";
        case SelectionMethod::bic: return "BIC";
        case SelectionMethod::lrt: return "LRT";
    }
    return "?";
}

FitCache::FitCache(Eigen::MatrixXd r, FitOptions options) : r_(std::move(r)), options_(std::move(options)) {
    log_det_r_ = log_det_spd(r_);
}

const FactorModel& FitCache::get(int m) {
    auto it = fits_.find(m);
    if (it == fits_.end()) it = fits_.emplace(m, fit_ml_factor(r_, m, options_)).first;
    return it->second;
}

namespace {

SelectionTally select_ic(FitCache& fits, int n, int m_lo, int m_hi, SelectionMethod method) {
    const int p = fits.p();
    if (n < 2) throw InputError("information criterion: n must be at least 2");
    if (m_lo < 1 || m_hi < m_lo || m_hi > ledermann_max(p))
        throw InputError("information criterion: m range must lie within [1, " + std::to_string(ledermann_max(p)) + "]");
    const double per_parameter = method == SelectionMethod::aic ? 2.0 : std::log(static_cast<double>(n));
    const double const_term = p * std::log(2.0 * std::numbers::pi);

    SelectionTally out;
    out.method = method;
    double best = std::numeric_limits<double>::infinity();
    for (int m = m_lo; m <= m_hi; ++m) {
        const FactorModel& fit = fits.get(m);
        if (!fit.converged) {
            out.warnings.push_back("m = " + std::to_string(m) + " did not converge; skipped");
            continue;
        }
        const Eigen::MatrixXd sigma = fit.implied();
        Eigen::LLT<Eigen::MatrixXd> llt(sigma);
        const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        const double trace = llt.solve(fits.correlation()).trace();
        const double ic = n * (const_term + log_det + trace) + per_parameter * free_parameters(p, m);
        out.values[m] = ic;
        if (ic < best) {
            best = ic;
            out.chosen_m = m;
        }
    }
    if (out.values.empty()) throw NumericalError("information criterion: no fit converged");
    return out;
}

}  // namespace

SelectionTally select_aic(FitCache& fits, int n, int m_lo, int m_hi) {
    return select_ic(fits, n, m_lo, m_hi, SelectionMethod::aic);
}

SelectionTally select_bic(FitCache& fits, int n, int m_lo, int m_hi) {
    return select_ic(fits, n, m_lo, m_hi, SelectionMethod::bic);
}

SelectionTally select_aic(const ShrunkenCorrelation& s, int n, int m_lo, int m_hi) {
    FitCache fits(s.values());
    return select_aic(fits, n, m_lo, m_hi);
}

SelectionTally select_bic(const ShrunkenCorrelation& s, int n, int m_lo, int m_hi) {
    FitCache fits(s.values());
    return select_bic(fits, n, m_lo, m_hi);
}

SelectionTally select_lrt(FitCache& fits, int n, const LrtOptions& options) {
    const int p = fits.p();
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw InputError("select_lrt: alpha must lie in (0, 1)");
    if (options.rank_adjusted && options.rank < 1) throw InputError("select_lrt: rank required for the adjusted test");
    const int m_max = options.m_max > 0 ? std::min(options.m_max, ledermann_max(p)) : ledermann_max(p);

    SelectionTally out;
    out.method = SelectionMethod::lrt;
    out.accepted = false;
    for (int m = 1; m <= m_max; ++m) {
        const double df = options.rank_adjusted ? lrt_degrees_of_freedom_rank_adjusted(p, options.rank, m)
                                                : lrt_degrees_of_freedom(p, m);
        if (!(df > 0.0)) break;
        const FactorModel& fit = fits.get(m);
        if (!fit.converged) {
            out.warnings.push_back("m = " + std::to_string(m) + " did not converge; skipped");
            continue;
        }
        const double statistic = (n - 1.0) * fit.discrepancy;
        out.values[m] = statistic;
        out.chosen_m = m;
        if (statistic < chi2_critical(df, options.alpha)) {
            out.accepted = true;
            return out;
        }
    }
    return out;
}

SelectionTally select_lrt(const ShrunkenCorrelation& s, int n, double alpha) {
    FitCache fits(s.values());
    LrtOptions options;
    options.alpha = alpha;
    return select_lrt(fits, n, options);
}

}  // namespace fmradio
