#include "fmradio/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>

#include "fmradio/error.hpp"
#include "fmradio/numeric.hpp"
#include "fmradio/rng.hpp"

namespace fmradio {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

StepSurvivalCurve product_limit(const std::vector<double>& time, const std::vector<int>& event) {
    const std::size_t n = time.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return time[a] < time[b]; });

    StepSurvivalCurve curve;
    double s = 1.0;
    std::size_t i = 0;
    while (i < n) {
        const double t = time[order[i]];
        const std::size_t at_risk = n - i;
        std::size_t d = 0;
        std::size_t j = i;
        for (; j < n && time[order[j]] == t; ++j) d += event[order[j]] == 1;
        if (d > 0) {
            s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
            curve.times.push_back(t);
            curve.values.push_back(s);
        }
        i = j;
    }
    return curve;
}

bool is_constant(const Eigen::VectorXd& col) {
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    return hi - lo <= 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
}

}  // namespace

double StepSurvivalCurve::at(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double StepSurvivalCurve::before(double t) const {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

StepSurvivalCurve km(const SurvivalData& data) {
    if (data.size() == 0) throw InputError("km: empty data");
    return product_limit(data.time, data.status);
}

StepSurvivalCurve reverse_km(const SurvivalData& data) {
    if (data.size() == 0) throw InputError("reverse_km: empty data");
    std::vector<int> flipped(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) flipped[i] = 1 - data.status[i];
    return product_limit(data.time, flipped);
}

double cox_log_partial_likelihood(const Eigen::MatrixXd& x, const SurvivalData& data, const Eigen::VectorXd& beta,
                                  Ties ties, Eigen::VectorXd* score, Eigen::MatrixXd* information) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (static_cast<std::size_t>(n) != data.size() || beta.size() != p)
        throw InputError("cox: predictor matrix, outcome and coefficient sizes disagree");

    const Eigen::VectorXd eta = x * beta;
    const double shift = n > 0 ? eta.maxCoeff() : 0.0;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return data.time[a] > data.time[b]; });

    const bool want_info = information != nullptr;
    double ll = 0.0;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

    std::size_t i = 0;
    const auto total = static_cast<std::size_t>(n);
    while (i < total) {
        const double t = data.time[order[i]];
        double d0 = 0.0;
        Eigen::VectorXd d1 = Eigen::VectorXd::Zero(p);
        Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(p, p);
        int d = 0;
        std::size_t j = i;
        for (; j < total && data.time[order[j]] == t; ++j) {
            const auto r = order[j];
            const double w = std::exp(eta[r] - shift);
            const auto xr = x.row(r).transpose();
            s0 += w;
            s1 += w * xr;
            if (want_info) s2.noalias() += w * xr * xr.transpose();
            if (data.status[r] == 1) {
                ++d;
                d0 += w;
                d1 += w * xr;
                if (want_info) d2.noalias() += w * xr * xr.transpose();
                ll += eta[r] - shift;
                grad += xr;
            }
        }
        for (int l = 0; l < d; ++l) {
            const double f = ties == Ties::efron ? static_cast<double>(l) / d : 0.0;
            const double a0 = s0 - f * d0;
            const Eigen::VectorXd a1 = s1 - f * d1;
            ll -= std::log(a0);
            grad -= a1 / a0;
            if (want_info) info += (s2 - f * d2) / a0 - a1 * a1.transpose() / (a0 * a0);
        }
        i = j;
    }
    if (score) *score = grad;
    if (information) *information = info;
    return ll;
}

double CoxModel::baseline_hazard(double t) const {
    auto it = std::upper_bound(hazard_times.begin(), hazard_times.end(), t);
    if (it == hazard_times.begin()) return 0.0;
    return cumulative_hazard[static_cast<std::size_t>(it - hazard_times.begin()) - 1];
}

CoxModel fit_cox(const Eigen::MatrixXd& x, const SurvivalData& data, const CoxOptions& options) {
    data.validate();
    if (static_cast<std::size_t>(x.rows()) != data.size())
        throw InputError("fit_cox: " + std::to_string(x.rows()) + " predictor rows for " +
                         std::to_string(data.size()) + " outcomes");
    if (data.events() == 0) throw InputError("fit_cox: no events");

    CoxModel model;
    model.ties = options.ties;
    model.dropped.assign(static_cast<std::size_t>(x.cols()), false);
    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (is_constant(x.col(j))) {
            model.dropped[static_cast<std::size_t>(j)] = true;
            model.warnings.push_back("fit_cox: dropped constant predictor column " + std::to_string(j));
        } else {
            kept.push_back(j);
        }
    }

    const Eigen::MatrixXd xk = x(Eigen::all, kept);
    const Eigen::RowVectorXd mean = xk.colwise().mean();
    const Eigen::MatrixXd xc = xk.rowwise() - mean;
    const Eigen::Index p = xc.cols();

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd grad;
    Eigen::MatrixXd info;
    double ll = cox_log_partial_likelihood(xc, data, beta, options.ties, &grad, &info);
    int iter = 0;
    bool converged = p == 0;
    while (!converged && iter < options.max_iter) {
        Eigen::LLT<Eigen::MatrixXd> llt(info);
        if (llt.info() != Eigen::Success)
            throw NumericalError("fit_cox: singular information matrix at iteration " + std::to_string(iter));
        const Eigen::VectorXd delta = llt.solve(grad);
        // A vanishing score with a large Newton step means the likelihood is still rising toward infinity.
        if (grad.lpNorm<Eigen::Infinity>() < options.grad_tol && delta.lpNorm<Eigen::Infinity>() < 1e-6) {
            converged = true;
            break;
        }
        double step = 1.0;
        bool accepted = false;
        Eigen::VectorXd cand;
        Eigen::VectorXd cand_grad;
        Eigen::MatrixXd cand_info;
        double cand_ll = ll;
        for (int h = 0; h < 40; ++h) {
            cand = beta + step * delta;
            cand_ll = cox_log_partial_likelihood(xc, data, cand, options.ties, &cand_grad, &cand_info);
            if (std::isfinite(cand_ll) && cand_ll >= ll - 1e-12 * std::abs(ll)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        ++iter;
        if (!accepted) {
            // No ascent possible at machine precision; accept if the score is already tiny.
            converged = grad.lpNorm<Eigen::Infinity>() < 1e-6;
            break;
        }
        beta = cand;
        ll = cand_ll;
        grad = cand_grad;
        info = cand_info;
        if (beta.lpNorm<Eigen::Infinity>() > options.beta_bound)
            throw NumericalError("fit_cox: coefficients diverge (|beta| > " + fmt(options.beta_bound) +
                                 "); the likelihood is monotone, suspect perfect separation");
    }
    if (!converged) model.warnings.push_back("fit_cox: Newton-Raphson did not converge");
    if (p > 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(info);
        if (llt.info() != Eigen::Success) throw NumericalError("fit_cox: singular information matrix at the estimate");
    }

    model.beta = Eigen::VectorXd::Zero(x.cols());
    for (Eigen::Index k = 0; k < p; ++k) model.beta[kept[static_cast<std::size_t>(k)]] = beta[k];
    model.log_likelihood = ll;
    model.score = grad;
    model.information = info;
    model.iterations = iter;
    model.converged = converged;

    // Breslow increments on centered predictors, then moved to the x = 0 reference.
    const Eigen::VectorXd eta = xc * beta;
    const double shift = eta.size() > 0 ? eta.maxCoeff() : 0.0;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return data.time[a] > data.time[b]; });
    std::vector<std::pair<double, double>> increments;
    double risk = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = data.time[order[i]];
        int d = 0;
        std::size_t j = i;
        for (; j < order.size() && data.time[order[j]] == t; ++j) {
            risk += std::exp(eta[static_cast<Eigen::Index>(order[j])] - shift);
            d += data.status[order[j]];
        }
        if (d > 0) increments.emplace_back(t, d / risk);
        i = j;
    }
    const double to_reference = std::exp(-shift - mean.dot(beta));
    double h = 0.0;
    for (auto it = increments.rbegin(); it != increments.rend(); ++it) {
        h += it->second * to_reference;
        model.hazard_times.push_back(it->first);
        model.cumulative_hazard.push_back(h);
    }
    return model;
}

double predict_survival(const CoxModel& model, const Eigen::VectorXd& x_row, double t) {
    if (x_row.size() != model.beta.size())
        throw InputError("predict_survival: expected " + std::to_string(model.beta.size()) + " predictors, got " +
                         std::to_string(x_row.size()));
    if (t < 0.0) throw InputError("predict_survival: negative time");
    const double h = model.baseline_hazard(t);
    if (h == 0.0) return 1.0;
    return std::exp(-h * std::exp(x_row.dot(model.beta)));
}

Eigen::MatrixXd predict_survival(const CoxModel& model, const Eigen::MatrixXd& x, const std::vector<double>& times) {
    if (x.cols() != model.beta.size())
        throw InputError("predict_survival: expected " + std::to_string(model.beta.size()) + " predictors, got " +
                         std::to_string(x.cols()));
    const Eigen::VectorXd risk = (x * model.beta).array().exp();
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(times.size()));
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < 0.0) throw InputError("predict_survival: negative time");
        const double h = model.baseline_hazard(times[k]);
        out.col(static_cast<Eigen::Index>(k)) = (-h * risk.array()).exp();
    }
    return out;
}

std::string to_string(BrierVariant variant) {
    switch (variant) {
        case BrierVariant::apparent: return "apparent";
        case BrierVariant::validated: return "validated";
        case BrierVariant::cv_averaged: return "cv_averaged";
    }
    return "unknown";
}

double median_time(const SurvivalData& data) {
    if (data.size() == 0) throw InputError("median_time: empty data");
    std::vector<double> t = data.time;
    std::sort(t.begin(), t.end());
    const std::size_t n = t.size();
    return n % 2 == 1 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

std::vector<double> evaluation_grid(const SurvivalData& data, double tau) {
    if (!(tau > 0.0)) throw InputError("evaluation_grid: tau must be positive");
    const double max_time = *std::max_element(data.time.begin(), data.time.end());
    if (tau > max_time) throw InputError("evaluation_grid: tau " + fmt(tau) + " exceeds the largest observed time");
    std::vector<double> grid{0.0};
    std::vector<double> t = data.time;
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    for (double v : t)
        if (v > 0.0 && v < tau) grid.push_back(v);
    grid.push_back(tau);
    return grid;
}

BrierCurve brier_curve(const Eigen::MatrixXd& predictions, const SurvivalData& data, const std::vector<double>& times,
                       const StepSurvivalCurve& censoring, BrierVariant variant, std::string label) {
    const std::size_t n = data.size();
    if (static_cast<std::size_t>(predictions.rows()) != n || static_cast<std::size_t>(predictions.cols()) != times.size())
        throw InputError("brier_curve: prediction matrix is " + std::to_string(predictions.rows()) + "x" +
                         std::to_string(predictions.cols()) + ", expected " + std::to_string(n) + "x" +
                         std::to_string(times.size()));
    if (n == 0) throw InputError("brier_curve: no subjects");
    if ((predictions.array() < -1e-12).any() || (predictions.array() > 1.0 + 1e-12).any())
        throw InputError("brier_curve: predictions outside [0, 1]");

    BrierCurve curve;
    curve.times = times;
    curve.scores.resize(times.size());
    curve.tau = times.empty() ? 0.0 : times.back();
    curve.variant = variant;
    curve.label = std::move(label);

    std::vector<double> event_weight(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (data.status[i] != 1) continue;
        const double g = censoring.before(data.time[i]);
        if (!(g > 0.0))
            throw NumericalError("brier_curve: censoring survival is zero just before t = " + fmt(data.time[i]));
        event_weight[i] = 1.0 / g;
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        double at_risk_weight = 0.0;
        bool needs_at_risk = false;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool alive = data.time[i] >= t;
            double w;
            if (alive) {
                if (!needs_at_risk) {
                    const double g = censoring.before(t);
                    if (!(g > 0.0))
                        throw NumericalError("brier_curve: censoring survival is zero just before t = " + fmt(t));
                    at_risk_weight = 1.0 / g;
                    needs_at_risk = true;
                }
                w = at_risk_weight;
            } else {
                w = event_weight[i];
            }
            if (w == 0.0) continue;
            const double r = (alive ? 1.0 : 0.0) - predictions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            sum += w * r * r;
        }
        curve.scores[k] = sum / static_cast<double>(n);
    }
    return curve;
}

IntegratedScore integrate_brier(const BrierCurve& curve, double tau) {
    if (!(tau > 0.0)) throw InputError("integrate_brier: tau must be positive");
    const auto& t = curve.times;
    const auto& b = curve.scores;
    if (t.empty() || t.front() > tau) throw InputError("integrate_brier: empty grid on [0, tau]");
    if (t.back() < tau) throw InputError("integrate_brier: tau " + fmt(tau) + " beyond the curve's last time " + fmt(t.back()));

    // Before the first grid point the curve is held at its first value.
    double area = t.front() * b.front();
    for (std::size_t k = 1; k < t.size() && t[k - 1] < tau; ++k) {
        double hi = t[k];
        double bhi = b[k];
        if (hi > tau) {
            const double frac = (tau - t[k - 1]) / (t[k] - t[k - 1]);
            bhi = b[k - 1] + frac * (b[k] - b[k - 1]);
            hi = tau;
        }
        area += 0.5 * (hi - t[k - 1]) * (b[k - 1] + bhi);
    }
    IntegratedScore out;
    out.integrated = area / tau;
    out.tau = tau;
    return out;
}

double r_squared(double model, double reference) {
    if (!(reference > 0.0)) throw InputError("r_squared: reference integrated Brier score must be positive");
    return 1.0 - model / reference;
}

double r_squared(const IntegratedScore& model, const IntegratedScore& reference) {
    return r_squared(model.integrated, reference.integrated);
}

NamedRule km_rule(std::string label) {
    return {std::move(label), [](const Eigen::MatrixXd&, const SurvivalData& data) -> SurvivalPredictor {
                return [curve = km(data)](const Eigen::MatrixXd& x, const std::vector<double>& times) {
                    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(times.size()));
                    for (std::size_t k = 0; k < times.size(); ++k)
                        out.col(static_cast<Eigen::Index>(k)).setConstant(curve.at(times[k]));
                    return out;
                };
            }};
}

NamedRule cox_rule(Ties ties, std::string label) {
    return {std::move(label), [ties](const Eigen::MatrixXd& x, const SurvivalData& data) -> SurvivalPredictor {
                CoxOptions options;
                options.ties = ties;
                return [model = fit_cox(x, data, options)](const Eigen::MatrixXd& xn, const std::vector<double>& times) {
                    return predict_survival(model, xn, times);
                };
            }};
}

std::vector<BrierCurve> brier_apparent(const Eigen::MatrixXd& x, const SurvivalData& data,
                                       const std::vector<NamedRule>& rules, const std::vector<double>& times) {
    const auto g = reverse_km(data);
    std::vector<BrierCurve> out;
    for (const auto& rule : rules) {
        const auto predictor = rule.fit(x, data);
        out.push_back(brier_curve(predictor(x, times), data, times, g, BrierVariant::apparent, rule.label));
    }
    return out;
}

BrierCvResult brier_cv(const Eigen::MatrixXd& x, const SurvivalData& data, const std::vector<NamedRule>& rules,
                       const std::vector<double>& times, const BrierCvOptions& options) {
    const std::size_t n = data.size();
    if (static_cast<std::size_t>(x.rows()) != n) throw InputError("brier_cv: predictor rows and outcomes disagree");
    if (options.folds < 2 || static_cast<std::size_t>(options.folds) > n)
        throw InputError("brier_cv: folds must lie in [2, n]");
    if (options.repeats < 1) throw InputError("brier_cv: repeats must be at least 1");
    if (rules.empty()) throw InputError("brier_cv: no prediction rules");

    const auto g = reverse_km(data);
    const auto k_folds = static_cast<std::size_t>(options.folds);
    const auto repeats = static_cast<std::size_t>(options.repeats);
    const std::size_t n_times = times.size();

    // scores[b][rule] holds the repeat-b curve.
    std::vector<std::vector<std::vector<double>>> scores(repeats);
    std::vector<std::vector<std::string>> logs(repeats);

    parallel_for(repeats, [&](std::size_t b) {
        const std::uint64_t repeat_seed = derive_seed(options.seed, b);
        std::vector<int> folds;
        int attempt = 0;
        while (true) {
            folds = assign_folds(n, options.folds, derive_seed(repeat_seed, static_cast<std::uint64_t>(attempt)));
            std::vector<std::size_t> events(k_folds, 0);
            for (std::size_t i = 0; i < n; ++i) events[static_cast<std::size_t>(folds[i])] += data.status[i];
            const std::size_t total = data.events();
            bool ok = true;
            for (std::size_t k = 0; k < k_folds; ++k) ok = ok && total > events[k];
            if (ok) break;
            if (attempt >= options.max_refold)
                throw NumericalError("brier_cv: repeat " + std::to_string(b) + " still has a training part without events after " +
                                     std::to_string(options.max_refold) + " refolds");
            logs[b].push_back("brier_cv: repeat " + std::to_string(b) + " refolded (training part without events)");
            ++attempt;
        }

        std::vector<std::vector<double>> acc(rules.size(), std::vector<double>(n_times, 0.0));
        for (std::size_t k = 0; k < k_folds; ++k) {
            std::vector<Eigen::Index> train;
            std::vector<Eigen::Index> test;
            std::vector<std::size_t> train_rows;
            std::vector<std::size_t> test_rows;
            for (std::size_t i = 0; i < n; ++i) {
                if (static_cast<std::size_t>(folds[i]) == k) {
                    test.push_back(static_cast<Eigen::Index>(i));
                    test_rows.push_back(i);
                } else {
                    train.push_back(static_cast<Eigen::Index>(i));
                    train_rows.push_back(i);
                }
            }
            const Eigen::MatrixXd x_train = x(train, Eigen::all);
            const Eigen::MatrixXd x_test = x(test, Eigen::all);
            const auto d_train = data.subset(train_rows);
            const auto d_test = data.subset(test_rows);
            for (std::size_t r = 0; r < rules.size(); ++r) {
                const auto predictor = rules[r].fit(x_train, d_train);
                const auto curve = brier_curve(predictor(x_test, times), d_test, times, g);
                for (std::size_t t = 0; t < n_times; ++t) acc[r][t] += curve.scores[t];
            }
        }
        for (auto& row : acc)
            for (double& v : row) v /= static_cast<double>(k_folds);
        scores[b] = std::move(acc);
    });

    BrierCvResult result;
    for (std::size_t r = 0; r < rules.size(); ++r) {
        BrierCurve curve;
        curve.times = times;
        curve.scores.assign(n_times, 0.0);
        curve.tau = times.empty() ? 0.0 : times.back();
        curve.variant = BrierVariant::cv_averaged;
        curve.label = rules[r].label;
        for (std::size_t b = 0; b < repeats; ++b)
            for (std::size_t t = 0; t < n_times; ++t) curve.scores[t] += scores[b][r][t];
        for (double& v : curve.scores) v /= static_cast<double>(repeats);
        result.curves.push_back(std::move(curve));
    }
    for (auto& l : logs) {
        result.refolds += static_cast<int>(l.size());
        result.log.insert(result.log.end(), l.begin(), l.end());
    }
    return result;
}

}  // namespace fmradio
