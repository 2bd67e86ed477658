#pragma once

#include <array>
#include <cstdint>

namespace reloc {

/// xoshiro256** seeded through splitmix64.
///
/// Seeding: the four state words are the first four outputs of a splitmix64
/// stream started at `seed`. Every derived quantity below consumes a fixed
/// number of 64-bit draws so that streams are reproducible across platforms:
///   uniform()      1 draw, top 53 bits
///   uniform_int()  1 or more draws (rejection sampling for exact uniformity)
///   normal()       2 draws per call (Box-Muller, the sine branch is discarded)
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next();

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n);
    /// Standard normal.
    double normal();

    std::array<std::uint64_t, 4> state() const { return s_; }

private:
    std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for an independent stream keyed by (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace reloc
