#pragma once

#include <Eigen/Core>

namespace fmradio {

struct RotationResult {
    Eigen::MatrixXd gamma;     // m x m orthogonal
    Eigen::MatrixXd loadings;  // Lambda * gamma
    double criterion = 0.0;    // normalized varimax criterion of `loadings`
    int sweeps = 0;
    bool converged = false;
};

/// Normalized varimax criterion: rows scaled by 1/sqrt(communality).
double varimax_criterion(const Eigen::MatrixXd& loadings);

/// Kaiser-normalized varimax by cyclic planar rotations over all factor pairs.
///
/// Output columns have nonnegative sums and are ordered by descending sum of
/// squared loadings; gamma carries the same sign flips and permutation.
/// Throws InputError if a row has zero communality.
RotationResult varimax(const Eigen::MatrixXd& loadings, double tol = 1e-6, int max_sweeps = 100);

}  // namespace fmradio
