#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fedprune/errors.hpp"

namespace fedprune {

/// Mixes a 64-bit value into a well-distributed one (splitmix64 finalizer).
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and up to two tags
/// (e.g. client id, round purpose). Same inputs give the same stream on every
/// platform, so trajectories are reproducible bit for bit.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag0 = 0,
                                 std::uint64_t tag1 = 0) {
    return mix64(mix64(mix64(master) ^ tag0) ^ mix64(tag1 ^ 0xa5a5a5a5a5a5a5a5ULL));
}

/// Deterministic random stream. Wraps mt19937_64 but hand-rolls the
/// distributions (uniform, normal, gamma, shuffle) because the standard
/// library leaves distribution algorithms implementation-defined and we
/// promise bit-identical runs for a fixed seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform double in the open interval (0, 1).
    double uniform() {
        // 53-bit mantissa, offset by half a step so 0 and 1 are excluded.
        return (static_cast<double>(gen_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling to kill modulo bias.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via the Marsaglia polar method.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Gamma(shape alpha, scale 1) via Marsaglia-Tsang squeeze rejection.
    /// Shapes below 1 use the boost trick Gamma(a) = Gamma(a+1) * U^(1/a).
    double gamma(double alpha) {
        if (alpha <= 0.0) throw ConfigError("gamma: shape alpha must be > 0");
        if (alpha < 1.0) {
            return gamma(alpha + 1.0) * std::pow(uniform(), 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * (x * x) * (x * x)) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double gamma(double alpha, double scale) { return gamma(alpha) * scale; }

    /// In-place Fisher-Yates shuffle (std::shuffle is implementation-defined).
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace fedprune
