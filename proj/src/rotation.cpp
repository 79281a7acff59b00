#include "fmradio/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fmradio/error.hpp"

namespace fmradio {

namespace {

Eigen::VectorXd row_scales(const Eigen::MatrixXd& loadings) {
    const Eigen::VectorXd h = loadings.rowwise().norm();
    for (Eigen::Index j = 0; j < h.size(); ++j)
        if (!(h(j) > 0.0))
            throw InputError("varimax: row " + std::to_string(j + 1) + " has zero communality");
    return h;
}

double raw_criterion(const Eigen::MatrixXd& b) {
    const double p = static_cast<double>(b.rows());
    const Eigen::ArrayXXd sq = b.array().square();
    return (sq.square().colwise().sum() - sq.colwise().sum().square() / p).sum();
}

}  // namespace

double varimax_criterion(const Eigen::MatrixXd& loadings) {
    const Eigen::VectorXd h = row_scales(loadings);
    return raw_criterion(h.cwiseInverse().asDiagonal() * loadings);
}

RotationResult varimax(const Eigen::MatrixXd& loadings, double tol, int max_sweeps) {
    const Eigen::Index p = loadings.rows(), m = loadings.cols();
    if (m < 1) throw InputError("varimax: at least one factor is required");
    const Eigen::VectorXd h = row_scales(loadings);
    Eigen::MatrixXd b = h.cwiseInverse().asDiagonal() * loadings;
    Eigen::MatrixXd gamma = Eigen::MatrixXd::Identity(m, m);
    const double pd = static_cast<double>(p);

    RotationResult out;
    if (m == 1) out.converged = true;
    for (int sweep = 1; sweep <= max_sweeps && m > 1; ++sweep) {
        out.sweeps = sweep;
        double largest = 0.0;
        for (Eigen::Index j = 0; j + 1 < m; ++j)
            for (Eigen::Index k = j + 1; k < m; ++k) {
                const Eigen::ArrayXd x = b.col(j).array(), y = b.col(k).array();
                const Eigen::ArrayXd u = x.square() - y.square();
                const Eigen::ArrayXd v = 2.0 * x * y;
                const double a = u.sum(), bb = v.sum();
                const double c = (u.square() - v.square()).sum();
                const double d = 2.0 * (u * v).sum();
                const double num = d - 2.0 * a * bb / pd;
                const double den = c - (a * a - bb * bb) / pd;
                const double angle = 0.25 * std::atan2(num, den);
                largest = std::max(largest, std::abs(angle));
                if (angle == 0.0) continue;
                const double cs = std::cos(angle), sn = std::sin(angle);
                const Eigen::VectorXd bj = b.col(j), bk = b.col(k);
                b.col(j) = cs * bj + sn * bk;
                b.col(k) = -sn * bj + cs * bk;
                const Eigen::VectorXd gj = gamma.col(j), gk = gamma.col(k);
                gamma.col(j) = cs * gj + sn * gk;
                gamma.col(k) = -sn * gj + cs * gk;
            }
        if (largest < tol) {
            out.converged = true;
            break;
        }
    }

    Eigen::MatrixXd rotated = loadings * gamma;
    for (Eigen::Index k = 0; k < m; ++k)
        if (rotated.col(k).sum() < 0.0) {
            rotated.col(k) *= -1.0;
            gamma.col(k) *= -1.0;
        }
    const Eigen::VectorXd ss = rotated.colwise().squaredNorm().transpose();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index c) { return ss(a) > ss(c); });
    out.gamma = gamma(Eigen::all, order);
    out.loadings = rotated(Eigen::all, order);
    out.criterion = raw_criterion(h.cwiseInverse().asDiagonal() * out.loadings);
    return out;
}

}  // namespace fmradio
