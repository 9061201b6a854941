#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "ssmq/fft.hpp"
#include "ssmq/kernel.hpp"

using namespace ssmq;
using Catch::Approx;

TEST_CASE("zoh discretization matches hand-computed values") {
  KernelParams p;
  p.a = {cdouble(-1.0, 0.0)};
  p.b = {cdouble(1.0, 0.0)};
  p.c = {cdouble(1.0, 0.0)};
  p.dt = std::log(2.0);
  const DiscreteKernel k = discretize_zoh(p);
  CHECK(k.abar[0].real() == Approx(0.5).epsilon(1e-12));
  CHECK(k.abar[0].imag() == Approx(0.0).margin(1e-15));
  // bbar = (abar - 1)/a * b = (0.5 - 1)/(-1) = 0.5
  CHECK(k.bbar[0].real() == Approx(0.5).epsilon(1e-12));

  KernelParams q;
  q.a = {cdouble(-0.5, kPi)};
  q.b = {cdouble(1.0, 0.0)};
  q.c = {cdouble(1.0, 0.0)};
  q.dt = 1.0;
  const DiscreteKernel k2 = discretize_zoh(q);
  CHECK(k2.abar[0].real() == Approx(-std::exp(-0.5)).epsilon(1e-12));
  CHECK(k2.abar[0].imag() == Approx(0.0).margin(1e-12));
}

TEST_CASE("zoh small-a branch takes the dt*b limit") {
  KernelParams p;
  p.a = {cdouble(0.0, 0.0), cdouble(1e-12, 0.0), cdouble(-1e-6, 0.0)};
  p.b = {cdouble(3.0, 0.0), cdouble(3.0, 0.0), cdouble(3.0, 0.0)};
  p.c = {cdouble(1.0, 0.0), cdouble(1.0, 0.0), cdouble(1.0, 0.0)};
  p.dt = 0.25;
  const DiscreteKernel k = discretize_zoh(p);
  CHECK(k.bbar[0].real() == Approx(0.75).epsilon(1e-15));  // a = 0 exactly
  CHECK(k.bbar[1].real() == Approx(0.75).epsilon(1e-9));   // |a| < threshold
  // above the threshold the exact formula applies and the limit approximates it
  CHECK(k.bbar[2].real() == Approx(0.75).epsilon(1e-6));
  CHECK(k.bbar[2].real() != 0.75);
}

static DiscreteKernel half_decay_kernel() {
  DiscreteKernel k;
  k.abar = {cdouble(0.5, 0.0)};
  k.bbar = {cdouble(1.0, 0.0)};
  k.cbar = {cdouble(1.0, 0.0)};
  k.dbar = 0.0;
  return k;
}

TEST_CASE("conv kernel materialization is the impulse response") {
  const std::vector<double> K = materialize_conv_kernel(half_decay_kernel(), 3);
  REQUIRE(K.size() == 3);
  CHECK(K[0] == Approx(2.0));
  CHECK(K[1] == Approx(1.0));
  CHECK(K[2] == Approx(0.5));
  // dbar lands in the first tap only
  DiscreteKernel kd = half_decay_kernel();
  kd.dbar = 0.25;
  const std::vector<double> K2 = materialize_conv_kernel(kd, 2);
  CHECK(K2[0] == Approx(2.25));
  CHECK(K2[1] == Approx(1.0));
}

TEST_CASE("causal convolution by hand") {
  const std::vector<double> y = conv_apply({2.0, 1.0, 0.5}, {1.0, 0.0, 1.0});
  REQUIRE(y.size() == 3);
  CHECK(y[0] == Approx(2.0));
  CHECK(y[1] == Approx(1.0));
  CHECK(y[2] == Approx(2.5));
}

TEST_CASE("recurrent and delayed steps match hand values") {
  const DiscreteKernel k = half_decay_kernel();
  StateVector x(1, cdouble(0.0, 0.0));
  std::vector<double> y;
  for (double u : {1.0, 1.0}) y.push_back(kernel_step(k, x, u));
  CHECK(y[0] == Approx(2.0));
  CHECK(y[1] == Approx(3.0));

  StateVector xi(1, cdouble(0.0, 0.0));
  std::vector<double> yi;
  for (double u : {1.0, 1.0}) yi.push_back(imssa_step(k, xi, u));
  CHECK(yi[0] == Approx(0.0).margin(1e-15));
  CHECK(yi[1] == Approx(2.0));
}

TEST_CASE("imssa scan is the one-step-delayed recurrent scan plus feedthrough") {
  KernelParams p;
  p.a = {cdouble(-0.3, 1.7), cdouble(-1.1, -0.4)};
  p.b = {cdouble(0.8, 0.2), cdouble(-0.5, 0.9)};
  p.c = {cdouble(0.4, -0.6), cdouble(1.2, 0.1)};
  p.d = 0.37;
  p.dt = 0.13;
  const DiscreteKernel k = discretize_zoh(p);
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<double> u(40);
  for (auto& v : u) v = uni(rng);

  const std::vector<double> yr = scan_recurrent(k, u);
  const std::vector<double> yi = scan_imssa(k, u);
  // y_imssa[t] = y_rec[t-1] - dbar*u[t-1] + dbar*u[t]
  CHECK(yi[0] == Approx(k.dbar * u[0]).margin(1e-12));
  for (std::size_t t = 1; t < u.size(); ++t)
    CHECK(yi[t] == Approx(yr[t - 1] - k.dbar * u[t - 1] + k.dbar * u[t]).margin(1e-12));
}

TEST_CASE("recurrent scan equals FFT convolution with the materialized kernel") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t N = 1 + std::size_t(rng() % 8);
    const std::size_t L = 16 + std::size_t(rng() % 100);
    KernelParams p;
    for (std::size_t i = 0; i < N; ++i) {
      p.a.push_back(cdouble(-0.05 - std::fabs(uni(rng)), 3.0 * uni(rng)));
      p.b.push_back(cdouble(uni(rng), uni(rng)));
      p.c.push_back(cdouble(uni(rng), uni(rng)));
    }
    p.d = uni(rng);
    p.dt = 0.05 + 0.2 * std::fabs(uni(rng));
    const DiscreteKernel k = discretize_zoh(p);
    std::vector<double> u(L);
    for (auto& v : u) v = uni(rng);

    const std::vector<double> K = materialize_conv_kernel(k, L);
    const std::vector<double> y_conv = causal_conv_fft(K, u);
    const std::vector<double> y_rec = scan_recurrent(k, u);
    for (std::size_t t = 0; t < L; ++t) CHECK(y_conv[t] == Approx(y_rec[t]).margin(1e-9));
  }
}

TEST_CASE("fft convolution matches the direct sum") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (std::size_t L : {1u, 2u, 3u, 17u, 64u, 100u}) {
    std::vector<double> k(L), u(L);
    for (auto& v : k) v = uni(rng);
    for (auto& v : u) v = uni(rng);
    const auto a = causal_conv_fft(k, u);
    const auto b = causal_conv_direct(k, u);
    for (std::size_t t = 0; t < L; ++t) CHECK(a[t] == Approx(b[t]).margin(1e-10));
  }
}

TEST_CASE("fft round trip and next_pow2") {
  CHECK(next_pow2(1) == 1);
  CHECK(next_pow2(2) == 2);
  CHECK(next_pow2(3) == 4);
  CHECK(next_pow2(1023) == 1024);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<cdouble> a(64);
  for (auto& z : a) z = cdouble(uni(rng), uni(rng));
  std::vector<cdouble> b = a;
  fft_inplace(b, false);
  fft_inplace(b, true);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("materialized imssa kernel reproduces the delayed scan") {
  KernelParams p;
  p.a = {cdouble(-0.7, 0.9)};
  p.b = {cdouble(1.0, -0.3)};
  p.c = {cdouble(0.6, 0.4)};
  p.d = 0.21;
  p.dt = 0.3;
  const DiscreteKernel k = discretize_zoh(p);
  std::vector<double> u = {1.0, -0.5, 0.25, 0.8, -0.1, 0.4};
  const std::vector<double> Ki = materialize_imssa_kernel(k, u.size());
  const std::vector<double> y_conv = conv_apply(Ki, u);
  const std::vector<double> y_scan = scan_imssa(k, u);
  for (std::size_t t = 0; t < u.size(); ++t)
    CHECK(y_conv[t] == Approx(y_scan[t]).margin(1e-12));
}
