// rng.hpp
// Deterministic random streams. The engine is std::mt19937_64 (its output is
// fixed by the standard); distributions are implemented here because the
// standard library's are not reproducible across implementations.
#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace cog {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed of child stream `stream` under `seed`:
///   mix64(seed ^ mix64(stream + 0x9E3779B97F4A7C15)).
/// Used everywhere a per-prompt, per-run or per-sample stream is needed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    /// Uniform integer in [lo, hi] (inclusive), rejection sampled.
    int uniform_int(int lo, int hi);
    /// Standard normal via Box-Muller (pairs cached).
    double normal();
    Eigen::VectorXd normal_vector(Eigen::Index n);

    /// Independent child stream; does not advance this stream.
    Rng split(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cog
