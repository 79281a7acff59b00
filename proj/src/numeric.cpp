#include "fmradio/numeric.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <boost/math/distributions/chi_squared.hpp>

#include "fmradio/error.hpp"

namespace fmradio {

ScalarMinimum brent_minimize(const std::function<double(double)>& f, double lower, double upper,
                             double abs_tol, int max_iter) {
    constexpr double golden = 0.3819660112501051;  // (3 - sqrt(5)) / 2
    const double eps = std::sqrt(std::numeric_limits<double>::epsilon());

    double a = lower, b = upper;
    double x = a + golden * (b - a);
    double w = x, v = x;
    double fx = f(x);
    double fw = fx, fv = fx;
    double d = 0.0, e = 0.0;

    ScalarMinimum out;
    for (int iter = 1; iter <= max_iter; ++iter) {
        out.iterations = iter;
        const double xm = 0.5 * (a + b);
        const double tol1 = eps * std::abs(x) + abs_tol / 3.0;
        const double tol2 = 2.0 * tol1;
        if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) {
            out.converged = true;
            break;
        }
        bool golden_step = true;
        if (std::abs(e) > tol1) {
            // trial parabolic fit through x, w, v
            double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::abs(q);
            const double e_prev = e;
            e = d;
            if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x)) {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = (xm >= x) ? tol1 : -tol1;
                golden_step = false;
            }
        }
        if (golden_step) {
            e = (x >= xm) ? a - x : b - x;
            d = golden * e;
        }
        const double u = (std::abs(d) >= tol1) ? x + d : x + (d > 0.0 ? tol1 : -tol1);
        const double fu = f(u);
        if (fu <= fx) {
            if (u >= x) a = x; else b = x;
            v = w; fv = fw;
            w = x; fw = fx;
            x = u; fx = fu;
        } else {
            if (u < x) a = u; else b = u;
            if (fu <= fw || w == x) {
                v = w; fv = fw;
                w = u; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u; fv = fu;
            }
        }
    }
    out.x = x;
    out.fx = fx;
    return out;
}

double chi2_upper_tail(double x, double df) {
    if (!(df > 0.0)) throw InputError("chi2_upper_tail: degrees of freedom must be positive");
    if (x <= 0.0) return 1.0;
    boost::math::chi_squared dist(df);
    return boost::math::cdf(boost::math::complement(dist, x));
}

double chi2_critical(double df, double alpha) {
    if (!(df > 0.0)) throw InputError("chi2_critical: degrees of freedom must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("chi2_critical: alpha must lie in (0, 1)");
    boost::math::chi_squared dist(df);
    return boost::math::quantile(boost::math::complement(dist, alpha));
}

double log_det_spd(const Eigen::MatrixXd& a) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw NumericalError("matrix is not positive definite");
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

unsigned thread_budget() {
    if (const char* env = std::getenv("FMRADIO_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min<std::size_t>(thread_budget(), count);
    std::vector<std::exception_ptr> errors(count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        body(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace fmradio
