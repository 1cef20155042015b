#pragma once

// Shared value types for the lazyvi library: error taxonomy, a seeded
// random stream, and a dense row-major matrix. Everything here is a plain
// value; no global state anywhere in the library.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lazyvi {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error { using Error::Error; };
struct NotPositiveDefinite : Error { using Error::Error; };
struct NonFiniteInput : Error { using Error::Error; };
struct OutOfRange : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct BadSize : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct BadFoldCount : Error { using Error::Error; };
struct BadSteps : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct MissingColumn : Error { using Error::Error; };
struct TooManyFeatures : Error { using Error::Error; };
struct MissingBeta : Error { using Error::Error; };
struct MissingTruth : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

using Vec = std::vector<double>;

/// Seed for a deterministic random stream. Same seed, same platform or not:
/// bit-identical draws (the bit-to-double mapping below avoids the
/// implementation-defined std distributions).
struct RngSeed {
  std::uint64_t value = 0;
};

/// Derive an independent stream seed from a base seed and a salt
/// (splitmix64 finalizer), so one experiment seed can deterministically fan
/// out into data/split/init streams.
inline RngSeed derive_seed(RngSeed base, std::uint64_t salt) {
  std::uint64_t z = base.value + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return RngSeed{z ^ (z >> 31)};
}

/// Deterministic random stream: xoshiro-free, just mt19937_64 with explicit
/// mappings. Normal deviates use Box-Muller with a cached spare.
class Rng {
 public:
  explicit Rng(RngSeed seed) : state_(seed.value) {}

  std::uint64_t next_u64() { return state_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::size_t uniform_below(std::size_t n) {
    if (n == 0) throw OutOfRange("uniform_below: n must be positive");
    const std::uint64_t span = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<std::size_t>(x % span);
  }

 private:
  // Minimal splitmix64 engine; period is plenty for desk-scale sampling and
  // the stream is trivially reproducible from the 64-bit seed.
  struct SplitMix {
    std::uint64_t s;
    explicit SplitMix(std::uint64_t seed) : s(seed) {}
    std::uint64_t operator()() {
      std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      return z ^ (z >> 31);
    }
  };
  SplitMix state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  Vec& data() { return data_; }
  const Vec& data() const { return data_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace lazyvi
