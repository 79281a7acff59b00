#include "fmradio/scores.hpp"

#include <cstring>

#include <Eigen/Cholesky>

#include "fmradio/error.hpp"

namespace fmradio {

std::uint64_t model_fingerprint(const Eigen::MatrixXd& loadings, const Eigen::VectorXd& uniquenesses) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const double* data, Eigen::Index count) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < static_cast<std::size_t>(count) * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    feed(loadings.data(), loadings.size());
    feed(uniquenesses.data(), uniquenesses.size());
    return h;
}

FactorScores thomson_scores(const Eigen::MatrixXd& z, const Eigen::MatrixXd& loadings,
                            const Eigen::VectorXd& uniquenesses, ScoreSource source) {
    if (z.cols() != loadings.rows() || loadings.rows() != uniquenesses.size())
        throw InputError("thomson_scores: data has " + std::to_string(z.cols()) + " columns, model has " +
                         std::to_string(loadings.rows()) + " features");
    if ((uniquenesses.array() <= 0.0).any()) throw InputError("thomson_scores: uniquenesses must be positive");

    const Eigen::MatrixXd weighted = uniquenesses.cwiseInverse().asDiagonal() * loadings;  // Psi^-1 Lambda
    Eigen::MatrixXd inner = loadings.transpose() * weighted;
    inner.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt(inner);
    if (llt.info() != Eigen::Success) throw NumericalError("thomson_scores: I + Lambda' Psi^-1 Lambda not positive definite");

    FactorScores out;
    out.values = llt.solve(weighted.transpose() * z.transpose()).transpose();
    out.fingerprint = model_fingerprint(loadings, uniquenesses);
    out.source = source;
    return out;
}

FactorScores thomson_scores(const StandardizedMatrix& z, const FactorModel& model) {
    return thomson_scores(z.data, model.loadings, model.uniquenesses,
                          z.fitted_on_self ? ScoreSource::training : ScoreSource::validation);
}

}  // namespace fmradio
