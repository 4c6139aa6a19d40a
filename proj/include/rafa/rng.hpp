#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace rafa {

// Deterministic RNG wrapper. All sampling goes through these routines so a
// run is reproducible from its master seed alone; std::distributions are
// avoided because their algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // uniform in (0, 1]
    double uniform01_open_low() {
        return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    }

    // standard normal, Box-Muller with a cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01_open_low();
        const double u2 = uniform01();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double two_pi_u2 = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = mag * std::sin(two_pi_u2);
        has_spare_ = true;
        return mag * std::cos(two_pi_u2);
    }

    // index sampled by inverse CDF; the final bucket absorbs rounding slack
    std::size_t categorical(const double* probs, std::size_t n) {
        const double u = uniform01();
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return n - 1;
    }

    std::size_t categorical(const std::vector<double>& probs) {
        return categorical(probs.data(), probs.size());
    }

    // gamma(alpha, 1), Marsaglia-Tsang; boosts alpha < 1
    double gamma(double alpha) {
        if (alpha < 1.0) {
            const double u = uniform01_open_low();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform01_open_low();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return d * v;
            }
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

// Derives an independent stream from (master seed, purpose, index). Streams
// for distinct purposes never interact, so adding a consumer does not
// perturb the draws seen by existing ones.
inline Rng rng_stream(std::uint64_t master_seed, std::string_view purpose,
                      std::uint64_t index = 0) {
    std::uint64_t s = detail::splitmix64(master_seed ^ detail::fnv1a(purpose));
    s = detail::splitmix64(s ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    return Rng(s);
}

} // namespace rafa
