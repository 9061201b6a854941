#pragma once
// Iterative radix-2 complex FFT plus an FFT-based causal convolution.
// Power-of-two transform sizes only; callers pad via next_pow2.

#include <complex>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace ssmq {

using cdouble = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

// Twiddle cache keyed by transform size: table[k] = exp(-2*pi*i*k/n), k < n/2.
inline const std::vector<cdouble>& twiddle_table(std::size_t n) {
  static thread_local std::unordered_map<std::size_t, std::vector<cdouble>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<cdouble> tab(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k)
    tab[k] = std::polar(1.0, -2.0 * kPi * double(k) / double(n));
  return cache.emplace(n, std::move(tab)).first->second;
}

}  // namespace detail

inline void fft_inplace(std::vector<cdouble>& a, bool inverse = false) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft_inplace: size must be a nonzero power of two");
  if (n == 1) return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j |= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const auto& tw = detail::twiddle_table(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        cdouble w = tw[k * stride];
        if (inverse) w = std::conj(w);
        const cdouble u = a[i + k];
        const cdouble v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / double(n);
    for (auto& x : a) x *= inv_n;
  }
}

// y_t = sum_{j<=t} k_j * u_{t-j}; k and u must have equal length L, y has length L.
inline std::vector<double> causal_conv_fft(const std::vector<double>& k,
                                           const std::vector<double>& u) {
  if (k.size() != u.size())
    throw std::invalid_argument("causal_conv_fft: kernel/input length mismatch");
  const std::size_t L = k.size();
  if (L == 0) return {};
  const std::size_t M = next_pow2(2 * L);
  std::vector<cdouble> fk(M), fu(M);
  for (std::size_t i = 0; i < L; ++i) {
    fk[i] = k[i];
    fu[i] = u[i];
  }
  fft_inplace(fk);
  fft_inplace(fu);
  for (std::size_t i = 0; i < M; ++i) fk[i] *= fu[i];
  fft_inplace(fk, /*inverse=*/true);
  std::vector<double> y(L);
  for (std::size_t i = 0; i < L; ++i) y[i] = fk[i].real();
  return y;
}

// Reference implementation used by tests; O(L^2).
inline std::vector<double> causal_conv_direct(const std::vector<double>& k,
                                              const std::vector<double>& u) {
  if (k.size() != u.size())
    throw std::invalid_argument("causal_conv_direct: kernel/input length mismatch");
  const std::size_t L = k.size();
  std::vector<double> y(L, 0.0);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t j = 0; j <= t; ++j) y[t] += k[j] * u[t - j];
  return y;
}

}  // namespace ssmq
