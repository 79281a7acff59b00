#include "fmradio/corr_shrink.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "fmradio/error.hpp"
#include "fmradio/numeric.hpp"
#include "fmradio/rng.hpp"

namespace fmradio {

namespace {

void tidy_correlation(Eigen::MatrixXd& r) {
    r = 0.5 * (r + r.transpose()).eval();
    r = r.cwiseMax(-1.0).cwiseMin(1.0);
    r.diagonal().setOnes();
}

/// Symmetric eigendecomposition, eigenvalues descending.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> eigen_desc(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success) throw NumericalError("symmetric eigendecomposition failed");
    return {es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
}

}  // namespace

CorrelationMatrix sample_correlation(const StandardizedMatrix& z) {
    const Eigen::Index n = z.data.rows();
    if (n < 2) throw InputError("sample_correlation: at least two rows are required");
    if (!z.fitted_on_self) throw InputError("sample_correlation: input must be standardized on itself");
    CorrelationMatrix out;
    out.values = (z.data.transpose() * z.data) / static_cast<double>(n - 1);
    tidy_correlation(out.values);
    out.names = z.names();
    return out;
}

Eigen::MatrixXd pearson_correlation(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    if (n < 2) throw InputError("pearson_correlation: at least two rows are required");
    Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::VectorXd norms = centered.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < norms.size(); ++j)
        if (!(norms(j) > 0.0)) throw InputError("pearson_correlation: column " + std::to_string(j + 1) + " is constant");
    centered = centered.array().rowwise() / norms.transpose().array();
    Eigen::MatrixXd r = centered.transpose() * centered;
    tidy_correlation(r);
    return r;
}

FilterResult redundancy_filter(const CorrelationMatrix& r, double tau, TieRule ties) {
    if (!(tau > 0.0 && tau <= 1.0)) throw InputError("redundancy_filter: tau must lie in (0, 1]");
    const Eigen::Index p = r.size();
    std::vector<Eigen::Index> active(static_cast<std::size_t>(p));
    std::iota(active.begin(), active.end(), Eigen::Index{0});

    FilterResult out;
    out.threshold = tau;
    while (active.size() > 1) {
        // counts include the diagonal, so a feature with no redundant partner scores 1
        std::vector<int> count(active.size(), 0);
        std::vector<double> sum(active.size(), 0.0);
        for (std::size_t a = 0; a < active.size(); ++a)
            for (std::size_t b = 0; b < active.size(); ++b) {
                const double v = std::abs(r.values(active[a], active[b]));
                if (v >= tau) {
                    ++count[a];
                    sum[a] += v;
                }
            }
        const int max_count = *std::max_element(count.begin(), count.end());
        if (max_count < 2) break;

        std::size_t pick = active.size();
        for (std::size_t a = 0; a < active.size(); ++a) {
            if (count[a] != max_count) continue;
            if (pick == active.size()) {
                pick = a;
                continue;
            }
            if (ties == TieRule::last) pick = a;
            else if (ties == TieRule::largest_sum && sum[a] > sum[pick]) pick = a;
        }
        out.removed.push_back(active[pick]);
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    out.retained = active;
    const auto q = static_cast<Eigen::Index>(active.size());
    out.filtered.values.resize(q, q);
    for (Eigen::Index a = 0; a < q; ++a)
        for (Eigen::Index b = 0; b < q; ++b) out.filtered.values(a, b) = r.values(active[a], active[b]);
    if (!r.names.empty())
        for (auto j : active) out.filtered.names.push_back(r.names.at(static_cast<std::size_t>(j)));
    return out;
}

Eigen::VectorXd ShrunkenCorrelation::eigenvalues() const {
    return ((1.0 - theta) * base_eigenvalues.array() + theta).matrix();
}

Eigen::MatrixXd ShrunkenCorrelation::values() const {
    Eigen::MatrixXd out = (1.0 - theta) * base.values;
    out.diagonal().array() += theta;
    return out;
}

Eigen::MatrixXd ShrunkenCorrelation::inverse() const {
    const Eigen::VectorXd inv = eigenvalues().cwiseInverse();
    Eigen::MatrixXd out = eigenvectors * inv.asDiagonal() * eigenvectors.transpose();
    return 0.5 * (out + out.transpose());
}

ShrunkenCorrelation shrink(const CorrelationMatrix& r, double theta) {
    if (!(theta > 0.0 && theta <= 1.0)) throw InputError("shrink: theta must lie in (0, 1]");
    ShrunkenCorrelation out;
    out.base = r;
    out.theta = theta;
    std::tie(out.base_eigenvalues, out.eigenvectors) = eigen_desc(r.values);
    return out;
}

double condition_number(const Eigen::VectorXd& base_eigenvalues, double theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw InputError("condition_number: theta must lie in [0, 1]");
    const Eigen::ArrayXd shrunk = (1.0 - theta) * base_eigenvalues.array() + theta;
    const double lo = shrunk.minCoeff();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return shrunk.maxCoeff() / lo;
}

double condition_number(const ShrunkenCorrelation& s) { return condition_number(s.base_eigenvalues, s.theta); }

CvObjective::CvObjective(const Eigen::MatrixXd& z, std::vector<int> fold_of_row, int folds) : folds_(folds) {
    if (static_cast<Eigen::Index>(fold_of_row.size()) != z.rows())
        throw InputError("CvObjective: fold assignment length does not match rows");
    if (folds < 2) throw InputError("cv_select_penalty: at least two folds are required");
    for (int k = 0; k < folds; ++k) {
        std::vector<Eigen::Index> test, train;
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            (fold_of_row[static_cast<std::size_t>(i)] == k ? test : train).push_back(i);
        if (test.size() < 2)
            throw InputError("cv_select_penalty: fold " + std::to_string(k + 1) + " has fewer than two rows");
        if (train.size() < 2) throw InputError("cv_select_penalty: training part of a fold has fewer than two rows");

        Fold f;
        f.n_k = static_cast<double>(test.size());
        f.test_corr = pearson_correlation(z(test, Eigen::all));
        f.train_corr = pearson_correlation(z(train, Eigen::all));
        auto [d, v] = eigen_desc(f.train_corr);
        f.train_eigenvalues = d;
        f.projected_diag = (v.transpose() * f.test_corr * v).diagonal();
        folds_data_.push_back(std::move(f));
    }
}

double CvObjective::operator()(double theta) const {
    double total = 0.0;
    for (const auto& f : folds_data_) {
        const Eigen::ArrayXd shrunk = (1.0 - theta) * f.train_eigenvalues.array() + theta;
        if ((shrunk <= 0.0).any())
            throw NumericalError("cv_select_penalty: non-finite objective at theta = " + std::to_string(theta));
        total += f.n_k * (shrunk.log().sum() + (f.projected_diag.array() / shrunk).sum());
    }
    const double value = total / static_cast<double>(folds_);
    if (!std::isfinite(value))
        throw NumericalError("cv_select_penalty: non-finite objective at theta = " + std::to_string(theta));
    return value;
}

double CvObjective::naive(double theta) const {
    double total = 0.0;
    for (const auto& f : folds_data_) {
        Eigen::MatrixXd shrunk = (1.0 - theta) * f.train_corr;
        shrunk.diagonal().array() += theta;
        Eigen::LLT<Eigen::MatrixXd> llt(shrunk);
        if (llt.info() != Eigen::Success) throw NumericalError("CvObjective::naive: matrix not positive definite");
        const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        const double trace = llt.solve(f.test_corr).trace();
        total += f.n_k * (logdet + trace);
    }
    return total / static_cast<double>(folds_);
}

PenaltySearchResult cv_select_penalty(const Eigen::MatrixXd& z, const PenaltySearchOptions& options) {
    const auto n = static_cast<std::size_t>(z.rows());
    if (options.folds < 2 || static_cast<std::size_t>(options.folds) > n)
        throw InputError("cv_select_penalty: fold count must lie in [2, n]");
    if (!(options.lower > 0.0 && options.lower < options.upper && options.upper <= 1.0))
        throw InputError("cv_select_penalty: invalid search interval");

    PenaltySearchResult out;
    out.folds = options.folds;
    out.fold_assignment = assign_folds(n, options.folds, options.seed);
    const CvObjective objective(z, out.fold_assignment, options.folds);

    auto eval = [&](double theta) {
        const double v = objective(theta);
        out.trace.emplace_back(theta, v);
        return v;
    };

    // geometric scan brackets the global minimum, Brent polishes inside the bracket
    const int m = std::max(3, options.scan_points);
    std::vector<double> grid(static_cast<std::size_t>(m));
    const double ratio = std::log(options.upper / options.lower);
    for (int i = 0; i < m; ++i) grid[static_cast<std::size_t>(i)] = options.lower * std::exp(ratio * i / (m - 1));
    grid.back() = options.upper;
    std::vector<double> values;
    for (double t : grid) values.push_back(eval(t));
    const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
    const double lo = grid[best == 0 ? 0 : best - 1];
    const double hi = grid[std::min(best + 1, grid.size() - 1)];
    brent_minimize(eval, lo, hi, options.abs_tol, options.max_iter);

    // report the best evaluated point; ties resolve to the smaller penalty
    auto arg = out.trace.front();
    for (const auto& tv : out.trace)
        if (tv.second < arg.second || (tv.second == arg.second && tv.first < arg.first)) arg = tv;
    out.theta = arg.first;
    out.cv_score = arg.second;
    return out;
}

PenaltySearchResult cv_select_penalty(const StandardizedMatrix& z, int folds, std::uint64_t seed) {
    PenaltySearchOptions options;
    options.folds = folds;
    options.seed = seed;
    return cv_select_penalty(z.data, options);
}

}  // namespace fmradio
