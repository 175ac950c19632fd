#pragma once

#include <cstdint>
#include <string_view>

namespace coda::numerics {

/// Deterministic pseudo-random generator (xoshiro256++) with reproducible
/// named substreams, so that work split across threads draws exactly the
/// same variates as a sequential run.
///
/// All derived quantities (uniform, normal, gamma) are computed from the
/// raw 64-bit stream by fixed algorithms, so output is identical across
/// platforms and standard-library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Independent generator determined by (this seed, stream name, index).
    /// Typical use: one substream per bootstrap replicate.
    Rng substream(std::string_view name, std::uint64_t index = 0) const;

    std::uint64_t next_u64();

    /// Uniform on [0, 1) with 53-bit resolution.
    double uniform();

    /// Uniform integer in [0, n), n >= 1.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Standard normal deviate (Box-Muller).
    double normal();

    /// Gamma(shape, 1) deviate, shape > 0 (Marsaglia-Tsang).
    double gamma(double shape);

private:
    std::uint64_t state_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
    std::uint64_t origin_seed_ = 0;
};

} // namespace coda::numerics
