#pragma once
// Diagonal state-space kernel: ZOH discretization, recurrent scan,
// one-step-delayed (in-memory style) scan, and convolutional materialization.
// All kernels are diagonal over N complex modes; outputs are real via the
// projection y = 2*Re(sum_n c_n x_n) + d*u.

#include <complex>
#include <stdexcept>
#include <vector>

#include "ssmq/fft.hpp"

namespace ssmq {

// Continuous-time parameters of one diagonal kernel.
struct KernelParams {
  std::vector<cdouble> a;  // diagonal state matrix, Re(a) < 0 for stability
  std::vector<cdouble> b;  // input projection
  std::vector<cdouble> c;  // output projection
  double d = 0.0;          // feedthrough
  double dt = 1.0;         // step size, > 0

  std::size_t n() const { return a.size(); }
};

// Discrete-time (ZOH) parameters.
struct DiscreteKernel {
  std::vector<cdouble> abar;
  std::vector<cdouble> bbar;
  std::vector<cdouble> cbar;
  double dbar = 0.0;

  std::size_t n() const { return abar.size(); }
};

using StateVector = std::vector<cdouble>;

inline constexpr double kZohSmallA = 1e-8;  // |a| below this uses the dt*b limit

inline double real_projection(const std::vector<cdouble>& c, const StateVector& x) {
  cdouble acc(0.0, 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) acc += c[i] * x[i];
  return 2.0 * acc.real();
}

inline DiscreteKernel discretize_zoh(const KernelParams& p) {
  if (p.b.size() != p.n() || p.c.size() != p.n())
    throw std::invalid_argument("discretize_zoh: a/b/c size mismatch");
  DiscreteKernel k;
  k.abar.resize(p.n());
  k.bbar.resize(p.n());
  k.cbar = p.c;
  k.dbar = p.d;
  for (std::size_t i = 0; i < p.n(); ++i) {
    const cdouble s = p.dt * p.a[i];
    const cdouble abar = std::exp(s);
    k.abar[i] = abar;
    if (std::abs(p.a[i]) < kZohSmallA)
      k.bbar[i] = p.dt * p.b[i];
    else
      k.bbar[i] = (abar - 1.0) / p.a[i] * p.b[i];
  }
  return k;
}

// One recurrent step: x' = abar (.) x + bbar * u, y = 2 Re(cbar . x') + dbar * u.
inline double kernel_step(const DiscreteKernel& k, StateVector& x, double u) {
  if (x.size() != k.n()) throw std::invalid_argument("kernel_step: state size mismatch");
  for (std::size_t i = 0; i < k.n(); ++i) x[i] = k.abar[i] * x[i] + k.bbar[i] * u;
  return real_projection(k.cbar, x) + k.dbar * u;
}

// One-step-delayed readout: y_t = 2 Re(cbar . x_{t-1}) + dbar * u_t, then the
// state update. Matches hardware that reads the state register while the new
// input is still being integrated.
inline double imssa_step(const DiscreteKernel& k, StateVector& x, double u) {
  if (x.size() != k.n()) throw std::invalid_argument("imssa_step: state size mismatch");
  const double y = real_projection(k.cbar, x) + k.dbar * u;
  for (std::size_t i = 0; i < k.n(); ++i) x[i] = k.abar[i] * x[i] + k.bbar[i] * u;
  return y;
}

// K_j = 2 Re(sum_n cbar_n abar_n^j bbar_n), with the feedthrough folded into K_0.
inline std::vector<double> materialize_conv_kernel(const DiscreteKernel& k, std::size_t len) {
  std::vector<double> out(len, 0.0);
  std::vector<cdouble> pw(k.n());
  for (std::size_t i = 0; i < k.n(); ++i) pw[i] = k.cbar[i] * k.bbar[i];
  for (std::size_t j = 0; j < len; ++j) {
    cdouble acc(0.0, 0.0);
    for (std::size_t i = 0; i < k.n(); ++i) {
      acc += pw[i];
      pw[i] *= k.abar[i];
    }
    out[j] = 2.0 * acc.real();
  }
  if (len > 0) out[0] += k.dbar;
  return out;
}

// Delayed variant: K_0 = dbar, K_j = 2 Re(sum_n cbar_n abar_n^(j-1) bbar_n).
inline std::vector<double> materialize_imssa_kernel(const DiscreteKernel& k, std::size_t len) {
  std::vector<double> out(len, 0.0);
  if (len == 0) return out;
  std::vector<cdouble> pw(k.n());
  for (std::size_t i = 0; i < k.n(); ++i) pw[i] = k.cbar[i] * k.bbar[i];
  for (std::size_t j = 1; j < len; ++j) {
    cdouble acc(0.0, 0.0);
    for (std::size_t i = 0; i < k.n(); ++i) {
      acc += pw[i];
      pw[i] *= k.abar[i];
    }
    out[j] = 2.0 * acc.real();
  }
  out[0] = k.dbar;
  return out;
}

inline std::vector<double> conv_apply(const std::vector<double>& kernel,
                                      const std::vector<double>& u) {
  return causal_conv_fft(kernel, u);
}

// Full-sequence recurrent scan (fresh zero state).
inline std::vector<double> scan_recurrent(const DiscreteKernel& k, const std::vector<double>& u) {
  StateVector x(k.n(), cdouble(0.0, 0.0));
  std::vector<double> y(u.size());
  for (std::size_t t = 0; t < u.size(); ++t) y[t] = kernel_step(k, x, u[t]);
  return y;
}

inline std::vector<double> scan_imssa(const DiscreteKernel& k, const std::vector<double>& u) {
  StateVector x(k.n(), cdouble(0.0, 0.0));
  std::vector<double> y(u.size());
  for (std::size_t t = 0; t < u.size(); ++t) y[t] = imssa_step(k, x, u[t]);
  return y;
}

}  // namespace ssmq
