#pragma once
// Symmetric uniform quantization on a dynamic full-scale grid.
// A tensor is quantized as x_q = round(x * n / f) * f / n with f = max|x| and
// n = 2^(bits-1) - 1 signed levels per side; complex tensors quantize real and
// imaginary parts as two independent real tensors with their own scales.

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssmq {

inline long quant_levels(int bits) {
  if (bits < 1) throw std::invalid_argument("quant_levels: bits must be >= 1");
  if (bits == 1) return 1;
  return (1L << (bits - 1)) - 1;
}

inline double quantize_value(double x, double f_scale, long n_levels) {
  if (f_scale == 0.0) return x;
  return std::round(x * double(n_levels) / f_scale) * (f_scale / double(n_levels));
}

struct QuantizedTensor {
  std::vector<double> values;
  double f_scale = 0.0;
  long n_levels = 0;
};

inline QuantizedTensor quantize_tensor(const std::vector<double>& x, int bits) {
  QuantizedTensor q;
  if (bits < 1) {  // 0 means "off": pass the tensor through untouched
    q.values = x;
    return q;
  }
  q.n_levels = quant_levels(bits);
  q.f_scale = 0.0;
  for (double v : x) q.f_scale = std::max(q.f_scale, std::fabs(v));
  q.values.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    q.values[i] = quantize_value(x[i], q.f_scale, q.n_levels);
  return q;
}

// In-place variant; returns the full-scale used.
inline double quantize_inplace(std::vector<double>& x, int bits) {
  QuantizedTensor q = quantize_tensor(x, bits);
  x = std::move(q.values);
  return q.f_scale;
}

// Complex tensors: real and imaginary parts are independent grids.
inline void quantize_complex_inplace(std::vector<std::complex<double>>& x, int bits) {
  std::vector<double> re(x.size()), im(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    re[i] = x[i].real();
    im[i] = x[i].imag();
  }
  quantize_inplace(re, bits);
  quantize_inplace(im, bits);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = {re[i], im[i]};
}

// Per-group weight/activation precisions, in bits. 0 means "off" (keep full
// precision); the hardware-cost reference width for "off" groups is a separate
// knob on the metrics side.
struct QuantSpec {
  int r_a = 0;       // state matrix
  int r_b = 0;       // input projection
  int r_c = 0;       // output projection
  int r_dt = 0;      // step size (quantized in the exponentiated domain)
  int r_state = 0;   // recurrent state / indirect conv split
  int r_act = 0;     // block activations
  int r_linear = 0;  // channel-mixing linear layers
  int r_coder = 0;   // encoder/decoder linear layers

  bool any() const {
    return r_a || r_b || r_c || r_dt || r_state || r_act || r_linear || r_coder;
  }
};

// Indirect state quantization budget for the convolutional path: the state
// precision is split evenly between the materialized kernel and the layer
// input. Odd budgets have no even split and are rejected.
struct StateQuantSplit {
  int kernel_bits = 0;
  int input_bits = 0;
};

inline StateQuantSplit state_quantization_split(int r_state) {
  if (r_state < 0) throw std::invalid_argument("state_quantization_split: negative bits");
  if (r_state == 0) return {0, 0};
  if (r_state % 2 != 0)
    throw std::invalid_argument(
        "state_quantization_split: odd state budget cannot be split evenly between "
        "kernel and input; use an even bit count");
  return {r_state / 2, r_state / 2};
}

}  // namespace ssmq
