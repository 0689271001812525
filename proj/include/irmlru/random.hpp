#pragma once

#include <irmlru/core_model.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace irmlru {

/// Deterministic generator with independent streams keyed by (seed, stream).
/// The stream key is diffused through SplitMix64 before seeding, so replica
/// k of a run never overlaps replica k + 1 in practice.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
    {
        std::uint64_t state = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        std::seed_seq seq{split(state), split(state), split(state), split(state)};
        engine_.seed(seq);
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_open_low() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double exponential() { return -std::log(uniform_open_low()); }

    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

private:
    static std::uint32_t split(std::uint64_t& state)
    {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return static_cast<std::uint32_t>((z ^ (z >> 31)) >> 32);
    }

    std::mt19937_64 engine_;
};

/// Flat Dirichlet draw: a uniformly random point of the open simplex.
inline PopularityVector random_popularity(Rng& rng, std::size_t n)
{
    std::vector<double> w(n);
    for (double& x : w)
        x = rng.exponential();
    double total = 0.0;
    for (double x : w)
        total += x;
    for (double& x : w)
        x /= total;
    return validate_popularity(w);
}

} // namespace irmlru
