#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fmradio/survival_data.hpp"

namespace fmradio {

struct RawDataset {
    Eigen::MatrixXd features;  // n x p, rows are subjects
    std::vector<std::string> feature_names;
    std::optional<SurvivalData> survival;

    Eigen::Index rows() const noexcept { return features.rows(); }
    Eigen::Index cols() const noexcept { return features.cols(); }
};

/// Column means and sample standard deviations (denominator n - 1).
struct ColumnStats {
    std::vector<std::string> names;
    Eigen::VectorXd means;
    Eigen::VectorXd sds;
};

struct StandardizedMatrix {
    Eigen::MatrixXd data;
    ColumnStats stats;
    bool fitted_on_self = false;

    const std::vector<std::string>& names() const noexcept { return stats.names; }
};

/// Names of the time and status columns to split off the feature block.
using SurvivalColumns = std::pair<std::string, std::string>;

RawDataset load_csv(const std::filesystem::path& path,
                    const std::optional<SurvivalColumns>& survival_columns = std::nullopt);

/// Parses CSV text; `source` only labels error messages.
RawDataset parse_csv(std::istream& in, const std::optional<SurvivalColumns>& survival_columns,
                     const std::string& source = "<stream>");

/// Centers and scales every column by its own mean and sample sd.
StandardizedMatrix standardize(const RawDataset& raw);
StandardizedMatrix standardize(const Eigen::MatrixXd& x, std::vector<std::string> names = {});

/// Applies previously fitted (training) statistics.
StandardizedMatrix apply_stats(const RawDataset& raw, const ColumnStats& stats);
StandardizedMatrix apply_stats(const Eigen::MatrixXd& x, const ColumnStats& stats);

/// Reorders/subsets the feature block to `names`; a missing name is an InputError.
RawDataset select_features(const RawDataset& raw, const std::vector<std::string>& names);

/// Restricts stats to the given column indices.
ColumnStats subset_stats(const ColumnStats& stats, const std::vector<Eigen::Index>& columns);

/// Header + one row per matrix row, doubles printed with round-trip precision.
void write_matrix_csv(std::ostream& out, const std::vector<std::string>& names, const Eigen::MatrixXd& m);
void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                      const Eigen::MatrixXd& m);

}  // namespace fmradio
