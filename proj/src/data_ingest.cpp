#include "fmradio/data_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "fmradio/error.hpp"

namespace fmradio {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

bool parse_double(const std::string& cell, double& value) {
    if (cell.empty()) return false;
    const char* begin = cell.data();
    if (*begin == '+') ++begin;
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    return ec == std::errc() && ptr == end && std::isfinite(value);
}

}  // namespace

std::size_t SurvivalData::events() const noexcept {
    return static_cast<std::size_t>(std::count(status.begin(), status.end(), 1));
}

SurvivalData SurvivalData::subset(const std::vector<std::size_t>& rows) const {
    SurvivalData out;
    out.time.reserve(rows.size());
    out.status.reserve(rows.size());
    for (auto r : rows) {
        out.time.push_back(time.at(r));
        out.status.push_back(status.at(r));
    }
    return out;
}

void SurvivalData::validate() const {
    if (time.size() != status.size()) throw InputError("survival time and status lengths differ");
    for (std::size_t i = 0; i < time.size(); ++i) {
        if (!(time[i] > 0.0) || !std::isfinite(time[i]))
            throw InputError("survival time must be positive (row " + std::to_string(i + 1) + ")");
        if (status[i] != 0 && status[i] != 1)
            throw InputError("survival status must be 0 or 1 (row " + std::to_string(i + 1) + ")");
    }
}

RawDataset parse_csv(std::istream& in, const std::optional<SurvivalColumns>& survival_columns,
                     const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw InputError(source + ": empty file, header row expected");
    const auto header = split_line(line);
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j].empty()) throw InputError(source + ": empty column name at position " + std::to_string(j + 1));
        if (!position.emplace(header[j], j).second)
            throw InputError(source + ": duplicate column name '" + header[j] + "'");
    }

    std::ptrdiff_t time_col = -1, status_col = -1;
    if (survival_columns) {
        auto locate = [&](const std::string& name) -> std::ptrdiff_t {
            auto it = position.find(name);
            if (it == position.end()) throw InputError(source + ": survival column '" + name + "' not found");
            return static_cast<std::ptrdiff_t>(it->second);
        };
        time_col = locate(survival_columns->first);
        status_col = locate(survival_columns->second);
        if (time_col == status_col) throw InputError(source + ": time and status columns must differ");
    }

    std::vector<std::size_t> feature_cols;
    RawDataset out;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (static_cast<std::ptrdiff_t>(j) == time_col || static_cast<std::ptrdiff_t>(j) == status_col) continue;
        feature_cols.push_back(j);
        out.feature_names.push_back(header[j]);
    }

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size())
            throw InputError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                             " cells, expected " + std::to_string(header.size()));
        std::vector<double> values(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (!parse_double(cells[j], values[j]))
                throw InputError(source + ": non-numeric cell '" + cells[j] + "' at row " +
                                 std::to_string(rows.size() + 1) + ", column '" + header[j] + "'");
        }
        rows.push_back(std::move(values));
    }

    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n < 2) throw InputError(source + ": at least two data rows are required");
    if (feature_cols.empty()) throw InputError(source + ": no feature columns");

    out.features.resize(n, static_cast<Eigen::Index>(feature_cols.size()));
    for (Eigen::Index i = 0; i < n; ++i)
        for (std::size_t k = 0; k < feature_cols.size(); ++k)
            out.features(i, static_cast<Eigen::Index>(k)) = rows[i][feature_cols[k]];

    if (survival_columns) {
        SurvivalData surv;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double t = rows[i][time_col];
            const double s = rows[i][status_col];
            if (!(t > 0.0))
                throw InputError(source + ": survival time must be positive at row " + std::to_string(i + 1));
            if (s != 0.0 && s != 1.0)
                throw InputError(source + ": status must be 0 or 1 at row " + std::to_string(i + 1));
            surv.time.push_back(t);
            surv.status.push_back(static_cast<int>(s));
        }
        out.survival = std::move(surv);
    }
    return out;
}

RawDataset load_csv(const std::filesystem::path& path, const std::optional<SurvivalColumns>& survival_columns) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open input file '" + path.string() + "'");
    return parse_csv(in, survival_columns, path.string());
}

StandardizedMatrix standardize(const Eigen::MatrixXd& x, std::vector<std::string> names) {
    const Eigen::Index n = x.rows(), p = x.cols();
    if (n < 2) throw InputError("standardize: at least two rows are required");
    if (names.empty())
        for (Eigen::Index j = 0; j < p; ++j) names.push_back("V" + std::to_string(j + 1));
    if (static_cast<Eigen::Index>(names.size()) != p) throw InputError("standardize: name count does not match columns");

    StandardizedMatrix out;
    out.stats.names = std::move(names);
    out.stats.means = x.colwise().mean().transpose();
    out.stats.sds.resize(p);
    out.data.resize(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const Eigen::VectorXd centered = x.col(j).array() - out.stats.means(j);
        const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(n - 1));
        const double scale = std::max(1.0, std::abs(out.stats.means(j)));
        if (!(sd > 1e-12 * scale))
            throw InputError("standardize: column '" + out.stats.names[j] + "' has zero variance");
        out.stats.sds(j) = sd;
        out.data.col(j) = centered / sd;
    }
    out.fitted_on_self = true;
    return out;
}

StandardizedMatrix standardize(const RawDataset& raw) { return standardize(raw.features, raw.feature_names); }

StandardizedMatrix apply_stats(const Eigen::MatrixXd& x, const ColumnStats& stats) {
    if (x.cols() != stats.means.size() || x.cols() != stats.sds.size())
        throw InputError("apply_stats: data has " + std::to_string(x.cols()) + " columns, stats describe " +
                         std::to_string(stats.means.size()));
    StandardizedMatrix out;
    out.stats = stats;
    out.data = (x.rowwise() - stats.means.transpose()).array().rowwise() / stats.sds.transpose().array();
    out.fitted_on_self = false;
    return out;
}

StandardizedMatrix apply_stats(const RawDataset& raw, const ColumnStats& stats) {
    return apply_stats(raw.features, stats);
}

RawDataset select_features(const RawDataset& raw, const std::vector<std::string>& names) {
    std::unordered_map<std::string, Eigen::Index> position;
    for (std::size_t j = 0; j < raw.feature_names.size(); ++j)
        position.emplace(raw.feature_names[j], static_cast<Eigen::Index>(j));
    RawDataset out;
    out.survival = raw.survival;
    out.feature_names = names;
    out.features.resize(raw.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
        auto it = position.find(names[k]);
        if (it == position.end()) throw InputError("feature column '" + names[k] + "' is missing");
        out.features.col(static_cast<Eigen::Index>(k)) = raw.features.col(it->second);
    }
    return out;
}

ColumnStats subset_stats(const ColumnStats& stats, const std::vector<Eigen::Index>& columns) {
    ColumnStats out;
    out.means.resize(static_cast<Eigen::Index>(columns.size()));
    out.sds.resize(static_cast<Eigen::Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) {
        const auto j = columns[k];
        if (!stats.names.empty()) out.names.push_back(stats.names.at(static_cast<std::size_t>(j)));
        out.means(static_cast<Eigen::Index>(k)) = stats.means(j);
        out.sds(static_cast<Eigen::Index>(k)) = stats.sds(j);
    }
    return out;
}

void write_matrix_csv(std::ostream& out, const std::vector<std::string>& names, const Eigen::MatrixXd& m) {
    if (static_cast<Eigen::Index>(names.size()) != m.cols()) throw InputError("write_matrix_csv: header/column mismatch");
    for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
    out << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
        out << '\n';
    }
}

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                      const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    write_matrix_csv(out, names, m);
}

}  // namespace fmradio
