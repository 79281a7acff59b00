#pragma once

#include <functional>

#include <Eigen/Core>

namespace fmradio {

struct ScalarMinimum {
    double x = 0.0;
    double fx = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Brent's method (golden section + parabolic interpolation) on [lower, upper].
ScalarMinimum brent_minimize(const std::function<double(double)>& f, double lower, double upper,
                             double abs_tol = 1e-8, int max_iter = 200);

/// Upper-tail probability of a chi-square variable with `df` degrees of freedom.
double chi2_upper_tail(double x, double df);

/// Critical value c with P(X > c) = alpha for X ~ chi-square(df).
double chi2_critical(double df, double alpha);

/// ln|A| for a symmetric positive-definite matrix; throws NumericalError otherwise.
double log_det_spd(const Eigen::MatrixXd& a);

/// Number of worker threads: FMRADIO_THREADS if set and positive, else hardware concurrency.
unsigned thread_budget();

/// Runs body(i) for i in [0, count) on up to thread_budget() threads.
/// Exceptions are rethrown (lowest index first) after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace fmradio
