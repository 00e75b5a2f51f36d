// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace strata {

// Dense types, templated on scalar. The pipeline instantiates them with double.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using MaskMatrix = MatrixX<bool>;

enum class ErrorKind { validation, internal };

/// Error carrying a stable machine-readable code (e.g. "DuplicateCell").
/// Validation errors stem from user input; internal errors from corrupted
/// intermediate artifacts or broken invariants.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message,
          ErrorKind kind = ErrorKind::validation)
        : std::runtime_error(code + ": " + message), code_(std::move(code)), kind_(kind) {}

    const std::string& code() const noexcept { return code_; }
    ErrorKind kind() const noexcept { return kind_; }

private:
    std::string code_;
    ErrorKind kind_;
};

std::uint64_t fnv1a64(std::string_view text) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Named sub-stream of a global seed: hash(seed, stream, index).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t index = 0) noexcept;

/// Maps a 64-bit hash to [0, 1) using its top 53 bits.
inline double unit_interval(std::uint64_t h) noexcept {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Seeded generator. The engine is the standardized mt19937_64; the
/// distributions are implemented here so streams match across standard
/// libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform() { return unit_interval(engine_()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Integer in [lo, hi].
    long uniform_int(long lo, long hi);
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// Index drawn with probability proportional to weights; uniform if all zero.
    std::size_t discrete(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(i) - 1));
        std::swap(items[i - 1], items[j]);
    }
}

/// Number of worker threads used by parallel loops (default: hardware concurrency).
void set_thread_count(unsigned n);
unsigned thread_count();

}  // namespace strata
