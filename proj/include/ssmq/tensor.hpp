#pragma once
// Small dense row-major matrix, RNG helpers, and misc numeric utilities
// shared across the library. Deliberately minimal; not a linalg package.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssmq {

struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }
};

// y = W x + b, W is (out x in).
inline std::vector<double> affine(const Matrix& w, const std::vector<double>& b,
                                  const std::vector<double>& x) {
  if (w.cols != x.size() || w.rows != b.size())
    throw std::invalid_argument("affine: dimension mismatch");
  std::vector<double> y(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = b[r];
    const double* wr = &w.data[r * w.cols];
    for (std::size_t c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
  return y;
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

inline double gelu(double x) {
  // Exact erf form.
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

inline double gelu_grad(double x) {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * 3.14159265358979323846);
  return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
}

using Rng = std::mt19937_64;

// Stable derived seed for (base seed, stream index) so per-sample streams are
// independent of evaluation order and thread count.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over the combined word
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double gaussian(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline bool any_nan(const std::vector<double>& v) {
  for (double x : v)
    if (std::isnan(x)) return true;
  return false;
}

}  // namespace ssmq
