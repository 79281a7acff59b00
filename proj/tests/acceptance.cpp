// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fmradio/corr_shrink.hpp"
#include "fmradio/error.hpp"
#include "fmradio/fa_ml.hpp"
#include "fmradio/rotation.hpp"
#include "fmradio/scores.hpp"
#include "fmradio/sim_bench.hpp"
#include "fmradio/survival.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace fmradio;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double time_limit_seconds;
    std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 3) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

Eigen::MatrixXd sorted_desc(const Eigen::MatrixXd& a) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues().reverse();
}

// 1 ------------------------------------------------------------------------
Outcome redundancy_filter_exactness() {
    CorrelationMatrix r;
    r.values.resize(4, 4);
    r.values << 1, .95, .95, .30,  //
        .95, 1, .30, .30,          //
        .95, .30, 1, .95,          //
        .30, .30, .95, 1;
    r.names = {"A", "B", "C", "D"};
    const auto first = redundancy_filter(r, 0.95, TieRule::first);
    const auto last = redundancy_filter(r, 0.95, TieRule::last);
    const bool ok_first = first.filtered.names == std::vector<std::string>{"B", "D"} &&
                          first.filtered.values(0, 1) == 0.30 && first.filtered.values(1, 0) == 0.30;
    const bool ok_last = last.filtered.names == std::vector<std::string>{"A", "D"};
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
        return "{" + s + "}";
    };
    return {ok_first && ok_last, "first-index " + join(first.filtered.names) + " off-diagonal " +
                                     fmt(first.filtered.values(0, 1)) + "; last-index " + join(last.filtered.names)};
}

// 2 ------------------------------------------------------------------------
Outcome shrinkage_identities() {
    std::mt19937_64 gen(202);
    std::uniform_int_distribution<int> pd(2, 50);
    double worst = 0.0, smallest = 1e300;
    bool identity_exact = true;
    for (int trial = 0; trial < 100; ++trial) {
        const int p = pd(gen);
        CorrelationMatrix r;
        r.values = oracle::random_correlation(p, 1 + trial % 6, gen);
        const Eigen::VectorXd base = sorted_desc(r.values);
        for (double theta : {0.01, 0.1, 0.5, 0.9, 1.0}) {
            const auto s = shrink(r, theta);
            const Eigen::MatrixXd values = s.values();
            const Eigen::VectorXd direct = sorted_desc(values);
            const Eigen::VectorXd expected = ((1.0 - theta) * base.array() + theta).matrix();
            worst = std::max(worst, (direct - expected).cwiseAbs().maxCoeff());
            smallest = std::min(smallest, direct.minCoeff());
            if (theta == 1.0 && values != Eigen::MatrixXd::Identity(p, p)) identity_exact = false;
        }
    }
    return {worst <= 1e-10 && smallest > 0.0 && identity_exact,
            "max |eig error| " + fmt(worst) + " (tol 1e-10), min eigenvalue " + fmt(smallest) +
                ", theta=1 identity exact: " + (identity_exact ? "yes" : "no")};
}

// 3 ------------------------------------------------------------------------
Outcome cv_penalty_optimality() {
    std::mt19937_64 gen(303);
    const std::vector<std::pair<int, int>> shapes = {{40, 10}, {60, 20}, {100, 30}, {30, 60}, {50, 120}};
    double worst_gap = -1e300;
    int failures = 0;
    for (int d = 0; d < 20; ++d) {
        const auto [n, p] = shapes[static_cast<std::size_t>(d) % shapes.size()];
        const Eigen::MatrixXd x = oracle::mvn(n, oracle::random_correlation(p, 1 + d % 4, gen), gen);
        const auto z = standardize(x);
        PenaltySearchOptions options;
        options.seed = 1000 + static_cast<std::uint64_t>(d);
        const auto result = cv_select_penalty(z.data, options);
        const CvObjective objective(z.data, result.fold_assignment, options.folds);
        double grid_min = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 1000; ++i)
            grid_min = std::min(grid_min, objective(options.lower + (options.upper - options.lower) * i / 999.0));
        const double gap = objective(result.theta) - grid_min;
        worst_gap = std::max(worst_gap, gap);
        if (gap > 1e-6) ++failures;
    }
    return {failures == 0, "20 datasets, worst phi(theta*) - grid min = " + fmt(worst_gap) + " (tol 1e-6)"};
}

// 4 ------------------------------------------------------------------------
double matched_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    // every permutation of at most three columns, with per-column sign
    std::vector<int> perm(static_cast<std::size_t>(a.cols()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
        double worst = 0.0;
        for (Eigen::Index k = 0; k < a.cols(); ++k) {
            const auto col = b.col(perm[static_cast<std::size_t>(k)]);
            worst = std::max(worst, std::min((a.col(k) - col).cwiseAbs().maxCoeff(), (a.col(k) + col).cwiseAbs().maxCoeff()));
        }
        best = std::min(best, worst);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

Outcome ml_exact_recovery() {
    std::mt19937_64 gen(404);
    std::uniform_real_distribution<double> primary(0.55, 0.85);
    std::uniform_real_distribution<double> cross(-0.15, 0.15);
    double worst_f = 0.0, worst_loading = 0.0;
    int failures = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int m = 1 + trial % 3;
        const int p = 2 * m + 3 + trial % (18 - 2 * m);
        Eigen::MatrixXd lambda(p, m);
        for (int j = 0; j < p; ++j)
            for (int k = 0; k < m; ++k) lambda(j, k) = k == j % m ? primary(gen) : cross(gen);
        Eigen::MatrixXd r = lambda * lambda.transpose();
        r.diagonal().setOnes();
        const auto fit = fit_ml_factor(r, m);
        const Eigen::MatrixXd fitted = m > 1 ? varimax(fit.loadings, 1e-10).loadings : fit.loadings;
        const Eigen::MatrixXd truth = m > 1 ? varimax(lambda, 1e-10).loadings : lambda;
        const double dist = matched_distance(fitted, truth);
        worst_f = std::max(worst_f, fit.discrepancy);
        worst_loading = std::max(worst_loading, dist);
        if (!(fit.discrepancy < 1e-8) || !(dist <= 1e-3)) ++failures;
    }
    return {failures == 0, "50 models, max F " + fmt(worst_f) + " (tol 1e-8), max loading error " +
                               fmt(worst_loading) + " (tol 1e-3)"};
}

// 5, 6 ---------------------------------------------------------------------
int count_in(const Histogram& h, int lo, int hi) {
    int c = 0;
    for (const auto& [m, k] : h)
        if (m >= lo && m <= hi) c += k;
    return c;
}

std::string histogram_text(const Histogram& h) {
    std::string s;
    for (const auto& [m, k] : h) s += (s.empty() ? "" : " ") + std::to_string(m) + ":" + std::to_string(k);
    return "{" + s + "}";
}

Outcome simulation_high_communality() {
    SimulationScenario s;
    s.p = 100;
    s.m_true = 5;
    s.communality = 0.9;
    s.balance = Balance::balanced;
    s.n = {50, 250};
    s.replicates = 100;
    s.seed = 20240501;
    const auto result = run_scenario(s);
    bool pass = true;
    std::string detail;
    for (const auto& r : result.by_n) {
        for (SelectionMethod method : {SelectionMethod::gb, SelectionMethod::aic, SelectionMethod::bic}) {
            const int hits = count_in(r.histograms.at(method), 5, 5);
            if (hits < 95) pass = false;
            detail += to_string(method) + "(n=" + std::to_string(r.n) + ") m=5: " + std::to_string(hits) + "/100 " +
                      histogram_text(r.histograms.at(method)) + "; ";
        }
        if (r.n == 50) {
            const int low = count_in(r.histograms.at(SelectionMethod::lrt), 1, 3);
            if (low < 95) pass = false;
            detail += "lrt(n=50) m in 1..3: " + std::to_string(low) + "/100 " +
                      histogram_text(r.histograms.at(SelectionMethod::lrt)) + "; ";
        }
        if (r.failures > 0) pass = false;
        detail += "failures(n=" + std::to_string(r.n) + ")=" + std::to_string(r.failures) + "; ";
    }
    detail += "thresholds >= 95/100";
    return {pass, detail};
}

Outcome simulation_complex_structure() {
    SimulationScenario s;
    s.p = 100;
    s.m_true = 12;
    s.communality = 0.9;
    s.balance = Balance::balanced;
    s.n = {50};
    s.replicates = 100;
    s.seed = 20240502;
    const auto result = run_scenario(s);
    const auto& r = result.by_n.front();
    const int gb = count_in(r.histograms.at(SelectionMethod::gb), 12, 12);
    const int bic = count_in(r.histograms.at(SelectionMethod::bic), 12, 12);
    return {gb >= 95 && bic <= 10 && r.failures == 0,
            "gb m=12: " + std::to_string(gb) + "/100 (>= 95) " + histogram_text(r.histograms.at(SelectionMethod::gb)) +
                "; bic m=12: " + std::to_string(bic) + "/100 (<= 10) " +
                histogram_text(r.histograms.at(SelectionMethod::bic)) + "; failures " + std::to_string(r.failures)};
}

// 7 ------------------------------------------------------------------------
Outcome guttman_invariance() {
    std::mt19937_64 gen(707);
    std::uniform_int_distribution<int> pd(3, 40);
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        CorrelationMatrix r;
        r.values = oracle::random_correlation(pd(gen), 1 + trial % 8, gen);
        const int a = guttman_bound(shrink(r, 0.01)).m;
        const int b = guttman_bound(shrink(r, 0.5)).m;
        const int c = guttman_bound(shrink(r, 0.99)).m;
        if (a != b || b != c) ++mismatches;
    }
    return {mismatches == 0, "100 matrices, " + std::to_string(mismatches) + " with a penalty-dependent bound"};
}

// 8 ------------------------------------------------------------------------
Outcome thomson_woodbury() {
    std::mt19937_64 gen(808);
    std::uniform_int_distribution<int> pd(2, 50);
    std::uniform_real_distribution<double> ud(0.1, 0.9);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int p = pd(gen);
        const int m = 1 + trial % std::min(10, p);
        Eigen::MatrixXd lambda = oracle::normals(p, m, gen) * (0.6 / std::sqrt(m));
        Eigen::VectorXd psi(p);
        for (int j = 0; j < p; ++j) psi(j) = ud(gen);
        const Eigen::MatrixXd z = oracle::normals(25, p, gen);
        const auto fast = thomson_scores(z, lambda, psi);
        worst = std::max(worst, (fast.values - oracle::thomson_direct(z, lambda, psi)).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-10, "200 models, max |difference| " + fmt(worst) + " (tol 1e-10)"};
}

// 9 ------------------------------------------------------------------------
Outcome brier_benchmarks() {
    std::mt19937_64 gen(909);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const int n = 60;
    SurvivalData data;
    for (int i = 0; i < n; ++i) {
        data.time.push_back(0.01 + 5.0 * ud(gen));
        data.status.push_back(1);
    }
    const auto g = reverse_km(data);
    const auto grid = evaluation_grid(data, median_time(data));
    const auto cols = static_cast<Eigen::Index>(grid.size());

    bool constant_exact = true;
    for (double b : brier_curve(Eigen::MatrixXd::Constant(n, cols, 0.5), data, grid, g).scores)
        constant_exact = constant_exact && b == 0.25;

    Eigen::MatrixXd random(n, cols), perfect(n, cols);
    for (int i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) {
            random(i, k) = ud(gen);
            perfect(i, k) = data.time[static_cast<std::size_t>(i)] >= grid[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        }
    const auto curve = brier_curve(random, data, grid, g);
    double mse_gap = 0.0;
    for (Eigen::Index k = 0; k < cols; ++k) {
        const double mse = (perfect.col(k) - random.col(k)).squaredNorm() / n;
        mse_gap = std::max(mse_gap, std::abs(mse - curve.scores[static_cast<std::size_t>(k)]));
    }
    double perfect_max = 0.0;
    for (double b : brier_curve(perfect, data, grid, g).scores) perfect_max = std::max(perfect_max, b);
    return {constant_exact && mse_gap <= 1e-12 && perfect_max == 0.0,
            std::string("constant .5 gives .25 exactly: ") + (constant_exact ? "yes" : "no") + "; max |B - MSE| " +
                fmt(mse_gap) + " (tol 1e-12); perfect predictions max B " + fmt(perfect_max)};
}

// 10 -----------------------------------------------------------------------
Outcome cox_oracle() {
    std::mt19937_64 gen(1010);
    std::normal_distribution<double> nd;
    std::exponential_distribution<double> ed(1.0);
    std::bernoulli_distribution censor(0.2);
    std::uniform_int_distribution<int> nsize(4, 8);
    int compared = 0, skipped = 0;
    double worst = 0.0;
    while (compared < 25) {
        const int n = nsize(gen);
        std::vector<double> x, t;
        std::vector<int> d;
        for (int i = 0; i < n; ++i) {
            x.push_back(nd(gen));
            double ti = ed(gen) * std::exp(-0.5 * x.back());
            if (compared % 2 == 1) ti = std::ceil(ti * 2.0) / 2.0;  // ties
            t.push_back(ti + 0.01);
            d.push_back(censor(gen) ? 0 : 1);
        }
        d[0] = 1;
        const int ties = compared % 3 == 0 ? 0 : 1;
        const double brute =
            oracle::golden_max([&](double b) { return oracle::cox_loglik_1d(x, t, d, b, ties); }, -40.0, 40.0);
        if (std::abs(brute) > 15.0) {  // monotone likelihood, no finite maximizer
            ++skipped;
            continue;
        }
        SurvivalData data;
        data.time = t;
        data.status = d;
        CoxOptions options;
        options.ties = ties == 0 ? Ties::breslow : Ties::efron;
        const auto fit = fit_cox(Eigen::Map<const Eigen::VectorXd>(x.data(), n), data, options);
        worst = std::max(worst, std::abs(fit.beta(0) - brute));
        ++compared;
    }
    return {worst <= 1e-6, "25 datasets (" + std::to_string(skipped) + " monotone-likelihood draws skipped), max |beta - brute force| " +
                               fmt(worst) + " (tol 1e-6)"};
}

// 11 -----------------------------------------------------------------------
Outcome r2_consistency() {
    const double a = r_squared(0.098, 0.128);
    const double b = r_squared(0.129, 0.160);
    return {std::abs(a - 0.236) <= 0.01 && std::abs(b - 0.197) <= 0.01,
            "1 - .098/.128 = " + fmt(a) + " vs .236; 1 - .129/.160 = " + fmt(b) + " vs .197 (tol .01)"};
}

// 12 -----------------------------------------------------------------------
int run_cli(const std::string& args, std::string& output) {
    const std::string command = std::string("\"") + FMRADIO_CLI_PATH + "\" " + args + " 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    if (!pipe) return -1;
    std::array<char, 4096> buffer{};
    std::size_t got;
    while ((got = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) output.append(buffer.data(), got);
    const int status = pclose(pipe);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> directory_contents(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out[entry.path().filename().string()] = ss.str();
    }
    return out;
}

Outcome end_to_end_determinism() {
    const auto dir = synthetic::scratch_dir("acceptance_determinism");
    synthetic::write_csv(dir / "data.csv", synthetic::make_survival_set(200, 150, 4, 0.7, 1212));
    const std::string args =
        "pipeline --input " + (dir / "data.csv").string() + " --out " + (dir / "run").string() + " --seed 77";
    std::string log;
    if (run_cli(args, log) != 0) return {false, "first run failed: " + log};
    const auto first = directory_contents(dir / "run");
    fs::remove_all(dir / "run");
    if (run_cli(args, log) != 0) return {false, "second run failed: " + log};
    const auto second = directory_contents(dir / "run");
    std::vector<std::string> differing;
    for (const auto& [name, bytes] : first) {
        auto it = second.find(name);
        if (it == second.end() || it->second != bytes) differing.push_back(name);
    }
    const bool same_set = first.size() == second.size();
    fs::remove_all(dir);
    std::string detail = std::to_string(first.size()) + " artifacts compared, " + std::to_string(differing.size()) +
                         " differ";
    for (const auto& d : differing) detail += " " + d;
    return {same_set && differing.empty() && !first.empty(), detail};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "redundancy filter exactness", 0.001, redundancy_filter_exactness},
        {2, "shrinkage identities", 5, shrinkage_identities},
        {3, "CV penalty optimality", 60, cv_penalty_optimality},
        {4, "ML factor analysis exact recovery", 60, ml_exact_recovery},
        {5, "simulation, high communality (p=100, m=5, c=.9)", 1800, simulation_high_communality},
        {6, "simulation, complex structure (p=100, m=12, c=.9)", 2700, simulation_complex_structure},
        {7, "Guttman bound penalty invariance", 5, guttman_invariance},
        {8, "Thomson scores via Woodbury", 10, thomson_woodbury},
        {9, "Brier score benchmarks", 5, brier_benchmarks},
        {10, "Cox fit against brute-force likelihood", 10, cox_oracle},
        {11, "R-squared consistency with reported values", 0.001, r2_consistency},
        {12, "end-to-end determinism", 120, end_to_end_determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = seconds <= c.time_limit_seconds;
        const bool pass = outcome.pass && in_time;
        if (!pass) ++failed;
        std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << std::setw(2) << c.id << "  " << c.name << "  ["
                  << fmt(seconds, 4) << " s, limit " << fmt(c.time_limit_seconds) << " s" << (in_time ? "" : ", TOO SLOW")
                  << "]  " << outcome.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
