#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace vdsm {

// Deterministic random stream. The engine sequence is pinned by the standard,
// and every transform below is coded explicitly instead of going through the
// implementation-defined std distributions, so a seed reproduces the same
// draws on every build.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Uniform on the open interval (0,1).
    double uniform() {
        return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, pair cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double gumbel() { return -std::log(-std::log(uniform())); }

    double exponential(double rate) {
        if (!(rate > 0.0)) throw std::invalid_argument("exponential: rate must be positive");
        return -std::log(uniform()) / rate;
    }

    // Unbiased integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
        const std::uint64_t m = (UINT64_MAX % n + 1) % n;  // 2^64 mod n
        const std::uint64_t limit = UINT64_MAX - m;
        std::uint64_t r;
        do {
            r = engine_();
        } while (r > limit);
        return r % n;
    }

    int categorical(const double* p, int k) {
        const double u = uniform();
        double acc = 0.0;
        for (int i = 0; i < k; ++i) {
            acc += p[i];
            if (u <= acc) return i;
        }
        return k - 1;
    }

    int categorical(const std::vector<double>& p) {
        return categorical(p.data(), static_cast<int>(p.size()));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream; splitmix64 of (seed, tag).
    RngStream fork(std::uint64_t tag) const {
        std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ULL * (tag + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return RngStream(z);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace vdsm
