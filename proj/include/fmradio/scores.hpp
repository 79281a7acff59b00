#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "fmradio/data_ingest.hpp"
#include "fmradio/fa_ml.hpp"

namespace fmradio {

enum class ScoreSource { training, validation };

struct FactorScores {
    Eigen::MatrixXd values;  // n x m
    std::uint64_t fingerprint = 0;
    ScoreSource source = ScoreSource::training;
};

/// FNV-1a over the bytes of the loadings and uniquenesses.
std::uint64_t model_fingerprint(const Eigen::MatrixXd& loadings, const Eigen::VectorXd& uniquenesses);

/// Thomson regression scores Z Psi^-1 Lambda (I + Lambda' Psi^-1 Lambda)^-1.
/// Only the m x m system is factorized.
FactorScores thomson_scores(const Eigen::MatrixXd& z, const Eigen::MatrixXd& loadings,
                            const Eigen::VectorXd& uniquenesses, ScoreSource source = ScoreSource::training);

FactorScores thomson_scores(const StandardizedMatrix& z, const FactorModel& model);

}  // namespace fmradio
