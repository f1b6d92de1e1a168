#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace phenonet {

// Deterministic xoshiro256** generator seeded through splitmix64.
// Identical seeds produce identical sequences on every platform; all
// floating-point draws are built from raw 64-bit outputs, never from
// implementation-defined <random> distributions.
//
// Every stochastic consumer (init, shuffle, dropout, negative sampling)
// should draw from its own named child stream: child("dropout") derives an
// independent generator from the parent seed and the stream name, so streams
// do not depend on each other's draw order.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    Rng child(std::string_view stream_name) const;

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
    double normal();

    // Uniform integer in [0, n); n must be > 0. Rejection sampling, unbiased.
    std::size_t below(std::size_t n);

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::uint64_t seed_ = 0;
    std::array<std::uint64_t, 4> state_{};
};

}  // namespace phenonet
