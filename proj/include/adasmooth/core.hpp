// Core numeric types, error types and seeded RNG helpers shared by the
// whole library. Everything is computed in 64-bit floats; NaN/Inf is
// treated as an error state, never silently propagated.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace adasmooth {

using RealVector = std::vector<double>;

/// Dense row-major matrix with explicit shape.
struct RealMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    RealMatrix() = default;
    RealMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    RealVector row(std::size_t i) const {
        return RealVector(data.begin() + static_cast<std::ptrdiff_t>(i * cols),
                          data.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols));
    }
    void set_row(std::size_t i, const RealVector& v) {
        std::copy(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(i * cols));
    }
};

// Error taxonomy. The CLI maps ConfigError to exit code 2 and
// NumericalError to exit code 3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& m) : std::runtime_error(m) {}
};
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& m) : std::invalid_argument(m) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}
inline void require_shape(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

inline bool all_finite(const RealVector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void require_finite(const RealVector& v, const std::string& what) {
    if (!all_finite(v)) throw NumericalError(what + ": non-finite value");
}

// ---- norms -----------------------------------------------------------

inline double norm_l2(const RealVector& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}
inline double norm_l1(const RealVector& v) {
    double s = 0;
    for (double x : v) s += std::abs(x);
    return s;
}
inline double norm_linf(const RealVector& v) {
    double s = 0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

/// Dual exponent of an lp attack norm: p=inf -> 1, p=2 -> 2.
enum class Norm { L2, Linf };

inline double norm_of(const RealVector& v, Norm p) {
    return p == Norm::L2 ? norm_l2(v) : norm_linf(v);
}
inline double dual_norm_of(const RealVector& v, Norm p) {
    return p == Norm::L2 ? norm_l2(v) : norm_l1(v);
}

// ---- deterministic seeding -------------------------------------------
//
// Every stochastic operation takes an explicit 64-bit seed. Sub-streams
// are derived with splitmix64 so that unrelated components never share a
// stream even when given the same top-level seed.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Derive a child seed from (seed, tag, index).
inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag,
                                 std::uint64_t index = 0) {
    return splitmix64(seed ^ splitmix64(fnv1a64(tag) + 0x9e3779b97f4a7c15ULL * (index + 1)));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}
inline double gaussian(Rng& rng, double mean = 0.0, double std = 1.0) {
    return std::normal_distribution<double>(mean, std)(rng);
}

inline std::size_t argmax(const RealVector& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Gap between the largest and second-largest entry; 0 for length-1 input.
inline double top_two_gap(const RealVector& v) {
    require(v.size() >= 1, "top_two_gap: empty vector");
    if (v.size() == 1) return 0.0;
    std::size_t best = argmax(v);
    double runner = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v.size(); ++i)
        if (i != best) runner = std::max(runner, v[i]);
    return v[best] - runner;
}

/// Signed margin of the label class: v[y] - max_{i != y} v[i].
inline double label_margin(const RealVector& v, std::size_t y) {
    require(y < v.size(), "label_margin: class index out of range");
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v.size(); ++i)
        if (i != y) other = std::max(other, v[i]);
    return v[y] - other;
}

}  // namespace adasmooth
