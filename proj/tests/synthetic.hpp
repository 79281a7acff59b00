#pragma once

// Synthetic factor-structured survival data shared by the test binaries.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace synthetic {

struct SurvivalSet {
    Eigen::MatrixXd features;  // n x p
    Eigen::MatrixXd factors;   // n x m, true latent values
    std::vector<std::string> names;
    std::vector<double> time;
    std::vector<int> status;
};

/// p features loading on m factors (block structure, loading `load`), with
/// exponential survival driven by the first factor and uniform censoring.
inline SurvivalSet make_survival_set(int n, int p, int m, double load, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    std::exponential_distribution<double> ed(1.0);
    std::uniform_real_distribution<double> cens(0.5, 4.0);
    SurvivalSet s;
    s.features.resize(n, p);
    s.factors.resize(n, m);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < m; ++k) s.factors(i, k) = nd(gen);
        for (int j = 0; j < p; ++j)
            s.features(i, j) = load * s.factors(i, j % m) + std::sqrt(1.0 - load * load) * nd(gen);
        const double t = ed(gen) * std::exp(-0.8 * s.factors(i, 0)) + 1e-3;
        const double c = cens(gen);
        s.time.push_back(std::min(t, c));
        s.status.push_back(t <= c ? 1 : 0);
    }
    for (int j = 0; j < p; ++j) s.names.push_back("g" + std::to_string(j + 1));
    return s;
}

inline void write_csv(const std::filesystem::path& path, const SurvivalSet& s) {
    std::ofstream out(path);
    out << std::setprecision(17);
    for (const auto& name : s.names) out << name << ',';
    out << "time,status\n";
    for (Eigen::Index i = 0; i < s.features.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.features.cols(); ++j) out << s.features(i, j) << ',';
        out << s.time[static_cast<std::size_t>(i)] << ',' << s.status[static_cast<std::size_t>(i)] << '\n';
    }
}

/// Fresh scratch directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("fmradio_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace synthetic
