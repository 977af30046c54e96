#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace isacsim {

inline constexpr double kSpeedOfLight = 299792458.0; // m/s

using Complex = std::complex<double>;

/// Generic simulator error with an origin tag (module or pipeline stage).
class Error : public std::runtime_error {
public:
    Error(std::string origin, const std::string& what)
        : std::runtime_error(origin + ": " + what), origin_(std::move(origin)) {}
    const std::string& origin() const { return origin_; }

private:
    std::string origin_;
};

inline double db_to_power(double db) { return std::pow(10.0, db / 10.0); }

inline double power_to_db(double power) {
    if (power <= 0.0) return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(power);
}

/// Amplitude (sqrt of linear power) for a power given in dB-style units.
inline double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }

inline std::uint64_t next_splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_label(std::string_view label) {
    // FNV-1a, folded through splitmix for avalanche.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return next_splitmix64(h);
}

/// Derives a child seed from a parent seed, a label, and up to three indices.
/// Children for distinct (label, indices) are statistically independent; the
/// mapping is fixed so traces replay bit-identically.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view label,
                                 std::uint64_t a = 0, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = parent ^ hash_label(label);
    next_splitmix64(s);
    s ^= 0x1000193u + a;
    next_splitmix64(s);
    s ^= b * 0x9e3779b97f4a7c15ull + 1;
    next_splitmix64(s);
    s ^= c + 0x2545f4914f6cdd1dull;
    return next_splitmix64(s);
}

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Deterministic random source. Generator and all value mappings are written
/// out explicitly, so streams do not depend on standard-library internals and
/// replay bit-identically for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        // splitmix-derived init decorrelates small seeds.
        std::uint64_t s = seed;
        x_[0] = next_splitmix64(s);
        x_[1] = next_splitmix64(s);
        x_[2] = next_splitmix64(s);
        x_[3] = next_splitmix64(s);
    }

    std::uint64_t next_u64() {
        // xoshiro256++ (public-domain reference construction).
        const std::uint64_t result = rotl(x_[0] + x_[3], 23) + x_[0];
        const std::uint64_t t = x_[1] << 17;
        x_[2] ^= x_[0];
        x_[3] ^= x_[1];
        x_[1] ^= x_[2];
        x_[0] ^= x_[3];
        x_[2] ^= t;
        x_[3] = rotl(x_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller (pair generated, one cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform01(); // (0, 1]
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = kTwoPi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Circular complex Gaussian with total variance `power`.
    Complex complex_gaussian(double power) {
        double s = std::sqrt(power * 0.5);
        double u1 = 1.0 - uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = kTwoPi * u2;
        return {s * r * std::cos(a), s * r * std::sin(a)};
    }

private:
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
    std::uint64_t x_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace isacsim
