#pragma once

#include <cstdint>
#include <random>

namespace countmix {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream index so that independent tasks
/// (restarts, replicates, study cells) get decorrelated generators while
/// staying reproducible regardless of execution order.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 finalizer over the combined state
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double draw_gamma(Rng& rng, double shape, double scale) {
    if (shape <= 0.0) return 0.0;
    std::gamma_distribution<double> d(shape, scale);
    return d(rng);
}

inline double draw_beta(Rng& rng, double a, double b) {
    if (a <= 0.0) return 0.0;
    if (b <= 0.0) return 1.0;
    const double x = draw_gamma(rng, a, 1.0);
    const double y = draw_gamma(rng, b, 1.0);
    const double s = x + y;
    return s > 0.0 ? x / s : 0.0;
}

inline int draw_poisson(Rng& rng, double mean) {
    if (!(mean > 0.0)) return 0;
    std::poisson_distribution<int> d(mean);
    return d(rng);
}

inline int draw_binomial(Rng& rng, int n, double q) {
    if (n <= 0 || q <= 0.0) return 0;
    if (q >= 1.0) return n;
    std::binomial_distribution<int> d(n, q);
    return d(rng);
}

/// NB with mean mu and variance mu*(1+gamma), drawn as a gamma-Poisson mixture.
inline int draw_nb(Rng& rng, double mu, double gamma) {
    if (!(mu > 0.0)) return 0;
    const double rate = draw_gamma(rng, mu / gamma, gamma);
    return draw_poisson(rng, rate);
}

inline double draw_normal(Rng& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(rng);
}

inline double draw_uniform(Rng& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    return d(rng);
}

}  // namespace countmix
