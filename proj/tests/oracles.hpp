#pragma once

// Independent reference computations used as test oracles. Nothing here calls
// into the library; each routine takes the slow, literal route.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Pearson correlation by explicit double loops.
inline Eigen::MatrixXd pearson(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows(), p = x.cols();
    std::vector<double> mean(static_cast<std::size_t>(p), 0.0);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) mean[j] += x(i, j);
        mean[j] /= static_cast<double>(n);
    }
    Eigen::MatrixXd r(p, p);
    for (Eigen::Index a = 0; a < p; ++a)
        for (Eigen::Index b = 0; b < p; ++b) {
            double sab = 0, saa = 0, sbb = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double da = x(i, a) - mean[a], db = x(i, b) - mean[b];
                sab += da * db;
                saa += da * da;
                sbb += db * db;
            }
            r(a, b) = sab / std::sqrt(saa * sbb);
        }
    return r;
}

/// Random correlation matrix: normalized A A' + diag(u) with A of width k.
inline Eigen::MatrixXd random_correlation(int p, int k, std::mt19937_64& gen) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.05, 1.0);
    Eigen::MatrixXd a(p, k);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < k; ++j) a(i, j) = nd(gen);
    Eigen::MatrixXd s = a * a.transpose();
    for (int i = 0; i < p; ++i) s(i, i) += ud(gen);
    Eigen::VectorXd d = s.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd r = d.asDiagonal() * s * d.asDiagonal();
    for (int i = 0; i < p; ++i) r(i, i) = 1.0;
    return r;
}

/// Matrix of iid normals.
inline Eigen::MatrixXd normals(int n, int p, std::mt19937_64& gen) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd x(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) x(i, j) = nd(gen);
    return x;
}

/// Rows drawn from N(0, sigma) via a dense symmetric square root.
inline Eigen::MatrixXd mvn(int n, const Eigen::MatrixXd& sigma, std::mt19937_64& gen) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    const Eigen::MatrixXd root =
        es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    return normals(n, static_cast<int>(sigma.rows()), gen) * root;
}

/// Log partial likelihood of a one-covariate Cox model, evaluated term by term.
/// ties: 0 = Breslow, 1 = Efron.
inline double cox_loglik_1d(const std::vector<double>& x, const std::vector<double>& t, const std::vector<int>& d,
                            double beta, int ties) {
    const std::size_t n = x.size();
    std::vector<double> done;
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] != 1) continue;
        if (std::find(done.begin(), done.end(), t[i]) != done.end()) continue;
        done.push_back(t[i]);
        double risk = 0.0, tied = 0.0, tied_lin = 0.0;
        int count = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (t[j] >= t[i]) risk += std::exp(beta * x[j]);
            if (t[j] == t[i] && d[j] == 1) {
                tied += std::exp(beta * x[j]);
                tied_lin += beta * x[j];
                ++count;
            }
        }
        ll += tied_lin;
        for (int l = 0; l < count; ++l) {
            const double frac = ties == 1 ? static_cast<double>(l) / count : 0.0;
            ll -= std::log(risk - frac * tied);
        }
    }
    return ll;
}

/// Golden-section maximization on [lo, hi].
inline double golden_max(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - g * (b - a), e = a + g * (b - a);
    double fc = f(c), fe = f(e);
    while (b - a > tol) {
        if (fc > fe) {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = f(e);
        }
    }
    return 0.5 * (a + b);
}

/// Thomson scores through the full p x p inverse of Lambda Lambda' + Psi.
inline Eigen::MatrixXd thomson_direct(const Eigen::MatrixXd& z, const Eigen::MatrixXd& lambda, const Eigen::VectorXd& psi) {
    Eigen::MatrixXd sigma = lambda * lambda.transpose();
    sigma.diagonal() += psi;
    return z * sigma.inverse() * lambda;
}

/// Product-limit estimate at t by explicit risk-set counting.
inline double km_at(const std::vector<double>& time, const std::vector<int>& status, double t) {
    std::vector<double> ts;
    for (std::size_t i = 0; i < time.size(); ++i)
        if (status[i] == 1 && time[i] <= t) ts.push_back(time[i]);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    double s = 1.0;
    for (double u : ts) {
        int at_risk = 0, events = 0;
        for (std::size_t i = 0; i < time.size(); ++i) {
            at_risk += time[i] >= u;
            events += time[i] == u && status[i] == 1;
        }
        s *= 1.0 - static_cast<double>(events) / at_risk;
    }
    return s;
}

}  // namespace oracle
