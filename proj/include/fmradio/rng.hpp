#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fmradio {

/// splitmix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Deterministic child seed from a parent seed and a stream of labels.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0) noexcept;

/// 64-bit FNV-1a.
std::uint64_t hash_string(std::string_view s) noexcept;

/// Portable random source. Only the raw mt19937_64 stream is used so draws are
/// identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform integer on [0, bound).
    std::uint64_t below(std::uint64_t bound);
    /// Standard normal (Marsaglia polar method).
    double normal();

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Rows shuffled by a seeded Rng, then dealt round-robin into k folds.
/// Returns the fold id (0-based) of every row.
std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed);

}  // namespace fmradio
