#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fmradio/data_ingest.hpp"

namespace fmradio {

struct CorrelationMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> names;

    Eigen::Index size() const noexcept { return values.rows(); }
};

/// R = Z'Z / (n - 1) of a self-standardized matrix, with exact unit diagonal and symmetry.
CorrelationMatrix sample_correlation(const StandardizedMatrix& z);

/// Pearson correlation of the columns of `x` (re-centered and re-scaled).
/// Throws InputError on a column with zero variance or fewer than two rows.
Eigen::MatrixXd pearson_correlation(const Eigen::MatrixXd& x);

/// How the redundancy filter picks among features tied for the largest count.
enum class TieRule {
    first,        // first maximal index
    last,         // last maximal index
    largest_sum,  // largest sum of |r| >= tau among the tied, then first index
};

struct FilterResult {
    std::vector<Eigen::Index> retained;  // original indices, ascending
    std::vector<Eigen::Index> removed;   // original indices, in removal order
    CorrelationMatrix filtered;
    double threshold = 0.95;
};

/// Iteratively drops the feature with the most |r| >= tau (diagonal included)
/// until every feature's count is below 2.
FilterResult redundancy_filter(const CorrelationMatrix& r, double tau, TieRule ties = TieRule::first);

/// (1 - theta) R + theta I, held through the eigendecomposition of R.
struct ShrunkenCorrelation {
    CorrelationMatrix base;
    double theta = 1.0;
    Eigen::VectorXd base_eigenvalues;  // descending
    Eigen::MatrixXd eigenvectors;      // columns match base_eigenvalues

    Eigen::Index size() const noexcept { return base.size(); }
    /// (1 - theta) d_j + theta, descending.
    Eigen::VectorXd eigenvalues() const;
    /// The shrunken matrix, unit diagonal.
    Eigen::MatrixXd values() const;
    /// Inverse through the eigendecomposition.
    Eigen::MatrixXd inverse() const;
};

ShrunkenCorrelation shrink(const CorrelationMatrix& r, double theta);

/// Largest over smallest shrunken eigenvalue.
double condition_number(const ShrunkenCorrelation& s);
/// Same for raw eigenvalues and a penalty in [0, 1]; theta = 0 is allowed here.
double condition_number(const Eigen::VectorXd& base_eigenvalues, double theta);

/// K-fold cross-validated negative log-likelihood of R(theta).
///
/// For each fold the correlation of the remaining rows is eigendecomposed once;
/// ln|R(theta)_-k| and tr[R_k R(theta)_-k^{-1}] are then O(p) per theta.
class CvObjective {
public:
    CvObjective(const Eigen::MatrixXd& z, std::vector<int> fold_of_row, int folds);

    double operator()(double theta) const;
    /// Same objective by explicit factorization and solve; test oracle for small p.
    double naive(double theta) const;

    int folds() const noexcept { return folds_; }

private:
    struct Fold {
        double n_k = 0.0;
        Eigen::VectorXd train_eigenvalues;
        Eigen::VectorXd projected_diag;  // diag(V' R_k V)
        Eigen::MatrixXd train_corr;
        Eigen::MatrixXd test_corr;
    };
    std::vector<Fold> folds_data_;
    int folds_ = 0;
};

struct PenaltySearchOptions {
    int folds = 5;
    std::uint64_t seed = 0;
    double lower = 1e-6;
    double upper = 1.0;
    double abs_tol = 1e-8;
    int max_iter = 200;
    int scan_points = 64;  // coarse bracketing scan before Brent
};

struct PenaltySearchResult {
    double theta = 1.0;
    double cv_score = 0.0;
    int folds = 0;
    std::vector<int> fold_assignment;
    std::vector<std::pair<double, double>> trace;  // (theta, score) in evaluation order
};

PenaltySearchResult cv_select_penalty(const Eigen::MatrixXd& z, const PenaltySearchOptions& options);
PenaltySearchResult cv_select_penalty(const StandardizedMatrix& z, int folds, std::uint64_t seed);

}  // namespace fmradio
