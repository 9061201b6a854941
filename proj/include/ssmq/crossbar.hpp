#pragma once
// Memristive crossbar simulation. Signed values become one-sided differential
// conductance pairs; complex values become 4x4 blocks; a whole discrete kernel
// maps onto one array as the augmented matrix [[Abar, Bbar], [Cbar, Dbar]]
// (state rows compute Abar*x + Bbar*u, the extra row computes Cbar*x + Dbar*u,
// so the kernel output lags the state by one step). Programming snaps targets
// to 2^program_bits conductance levels plus static write noise; reads add
// transient noise. Row readout applies one scale per row group, so under
// per-parameter scaling the Bbar*u contribution entering the state rows is
// distorted by s_a/s_b — common-max scaling decodes exactly.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ssmq/errors.hpp"
#include "ssmq/io.hpp"
#include "ssmq/kernel.hpp"
#include "ssmq/model.hpp"
#include "ssmq/quantizer.hpp"
#include "ssmq/tensor.hpp"

namespace ssmq {

struct DeviceModel {
  double g_min = 0.0;
  double g_max = 1.0;
  int program_bits = 3;          // 0 = continuous programming (debug)
  double sigma_write_rel = 0.0;  // static, relative to g_max - g_min
  double sigma_read_rel = 0.0;   // transient, relative to g_max - g_min

  double range() const { return g_max - g_min; }
  void validate() const {
    if (!(g_min < g_max) || g_min < 0.0)
      throw config_error("device: need 0 <= g_min < g_max");
    if (program_bits < 0) throw config_error("device: program_bits must be >= 0");
    if (sigma_write_rel < 0.0 || sigma_read_rel < 0.0)
      throw config_error("device: noise sigmas must be >= 0");
  }
};

struct CrossbarArray {
  Matrix g;        // programmed conductances
  Matrix targets;  // continuous targets (diagnostics / reprogramming)
  DeviceModel device;
};

// --- scalar encodings -------------------------------------------------------

// One-sided differential pair: g+ - g- = m * range / s, baseline g_min.
inline std::pair<double, double> encode_signed(double m, double s,
                                               const DeviceModel& dev) {
  if (s <= 0.0) throw config_error("encode_signed: scale must be positive");
  if (std::fabs(m) > s * (1.0 + 1e-12))
    throw config_error("encode_signed: |" + format_double(m) + "| exceeds scale " +
                       format_double(s));
  const double k = dev.range() / s;
  return {dev.g_min + std::max(m, 0.0) * k, dev.g_min + std::max(-m, 0.0) * k};
}

inline double decode_signed(double gp, double gm, double s, const DeviceModel& dev) {
  return (gp - gm) * s / dev.range();
}

// 4x4 block on rows/columns ordered (r+, r-, i+, i-). Acting on the expanded
// voltage vector of x (x_re+/-, x_im+/-), the differential row currents give
// Re(m*x) and Im(m*x).
inline void encode_complex_block(cdouble m, double s, const DeviceModel& dev,
                                 Matrix& out, std::size_t row0, std::size_t col0) {
  const auto [grp, grm] = encode_signed(m.real(), s, dev);
  const auto [gip, gim] = encode_signed(m.imag(), s, dev);
  const double block[4][4] = {{grp, grm, gim, gip},
                              {grm, grp, gip, gim},
                              {gip, gim, grp, grm},
                              {gim, gip, grm, grp}};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) out.at(row0 + r, col0 + c) = block[r][c];
}

inline cdouble decode_complex_block(const Matrix& g, std::size_t row0, std::size_t col0,
                                    double s, const DeviceModel& dev) {
  return {decode_signed(g.at(row0, col0), g.at(row0, col0 + 1), s, dev),
          decode_signed(g.at(row0 + 2, col0), g.at(row0 + 2, col0 + 1), s, dev)};
}

// --- kernel layout ----------------------------------------------------------

enum class ScalingMode { kCommonMax, kPerParameter };

inline const char* scaling_mode_name(ScalingMode m) {
  return m == ScalingMode::kCommonMax ? "common-max" : "per-parameter";
}

struct ImssaLayout {
  std::size_t n_state = 0;
  std::size_t dim = 0;  // 4 * (n_state + 1) occupied rows/columns
  ScalingMode scaling = ScalingMode::kCommonMax;
  double s_a = 1.0, s_b = 1.0, s_c = 1.0, s_d = 1.0;
  std::vector<cdouble> ideal;  // augmented (N+1)^2 matrix, row-major

  cdouble ideal_at(std::size_t r, std::size_t c) const {
    return ideal[r * (n_state + 1) + c];
  }
  double scale_at(std::size_t r, std::size_t c) const {
    const std::size_t N = n_state;
    if (r < N && c < N) return s_a;
    if (r < N) return s_b;   // B column
    if (c < N) return s_c;   // C row
    return s_d;              // D corner
  }
};

struct MappedKernel {
  CrossbarArray array;
  ImssaLayout layout;
};

// Map one discrete kernel onto array targets. The corner stores dbar/2 so the
// doubled real readout recovers dbar*u alongside 2*Re(Cbar x).
inline MappedKernel map_imssa(const DiscreteKernel& k, const DeviceModel& dev,
                              ScalingMode scaling, std::size_t array_size = 64) {
  dev.validate();
  const std::size_t N = k.n();
  const std::size_t dim = 4 * (N + 1);
  if (dim > array_size)
    throw config_error("map_imssa: kernel needs " + std::to_string(dim) +
                       " rows, array has " + std::to_string(array_size));

  MappedKernel mk;
  ImssaLayout& lay = mk.layout;
  lay.n_state = N;
  lay.dim = dim;
  lay.scaling = scaling;
  lay.ideal.assign((N + 1) * (N + 1), cdouble(0.0, 0.0));
  for (std::size_t n = 0; n < N; ++n) {
    lay.ideal[n * (N + 1) + n] = k.abar[n];
    lay.ideal[n * (N + 1) + N] = k.bbar[n];
    lay.ideal[N * (N + 1) + n] = k.cbar[n];
  }
  lay.ideal[N * (N + 1) + N] = cdouble(k.dbar / 2.0, 0.0);

  auto part_max = [](const std::vector<cdouble>& v) {
    double m = 0.0;
    for (cdouble z : v) m = std::max({m, std::fabs(z.real()), std::fabs(z.imag())});
    return m;
  };
  const double ma = part_max(k.abar), mb = part_max(k.bbar), mc = part_max(k.cbar);
  const double md = std::fabs(k.dbar) / 2.0;
  const double mall = std::max({ma, mb, mc, md});
  if (mall <= 0.0) throw config_error("map_imssa: all kernel parameters are zero");
  // An all-zero group encodes exact zeros under any scale; fall back to the
  // common maximum so its scale stays positive.
  auto pick = [&](double group_max) {
    return scaling == ScalingMode::kCommonMax
               ? mall
               : (group_max > 0.0 ? group_max : mall);
  };
  lay.s_a = pick(ma);
  lay.s_b = pick(mb);
  lay.s_c = pick(mc);
  lay.s_d = pick(md);

  CrossbarArray& arr = mk.array;
  arr.device = dev;
  arr.targets = Matrix(array_size, array_size, dev.g_min);
  for (std::size_t r = 0; r <= N; ++r)
    for (std::size_t c = 0; c <= N; ++c)
      encode_complex_block(lay.ideal_at(r, c), lay.scale_at(r, c), dev, arr.targets,
                           4 * r, 4 * c);
  return mk;
}

// Decoded augmented matrix (per-entry group scales) from targets or from the
// programmed conductances.
inline std::vector<cdouble> decode_layout(const Matrix& g, const ImssaLayout& lay,
                                          const DeviceModel& dev) {
  const std::size_t N = lay.n_state;
  std::vector<cdouble> out((N + 1) * (N + 1));
  for (std::size_t r = 0; r <= N; ++r)
    for (std::size_t c = 0; c <= N; ++c)
      out[r * (N + 1) + c] =
          decode_complex_block(g, 4 * r, 4 * c, lay.scale_at(r, c), dev);
  return out;
}

// --- device programming and reads --------------------------------------------

// Snap each target to the nearest of 2^program_bits levels in [g_min, g_max],
// add static write noise, clamp. program_bits = 0 keeps continuous targets.
inline void program(CrossbarArray& arr, Rng& rng) {
  arr.device.validate();
  const DeviceModel& dev = arr.device;
  arr.g = arr.targets;
  const int levels = dev.program_bits > 0 ? (1 << dev.program_bits) : 0;
  for (auto& g : arr.g.data) {
    if (levels > 1) {
      const double step = dev.range() / double(levels - 1);
      g = dev.g_min + std::round((g - dev.g_min) / step) * step;
    }
    if (dev.sigma_write_rel > 0.0) g += dev.sigma_write_rel * dev.range() * gaussian(rng);
    g = std::min(dev.g_max, std::max(dev.g_min, g));
  }
}

// i = (G + E) v with E fresh i.i.d. Gaussian read noise per call. The noise
// enters each row as sum_c eps_rc * v_c ~ N(0, sigma^2 ||v||^2), so one draw
// per row with that variance reproduces the per-device model exactly.
inline std::vector<double> mvm_read(const CrossbarArray& arr,
                                    const std::vector<double>& v, Rng* rng = nullptr) {
  if (v.size() != arr.g.cols) throw config_error("mvm_read: voltage length mismatch");
  std::vector<double> i(arr.g.rows, 0.0);
  for (std::size_t r = 0; r < arr.g.rows; ++r) {
    const double* row = &arr.g.data[r * arr.g.cols];
    double acc = 0.0;
    for (std::size_t c = 0; c < v.size(); ++c) acc += row[c] * v[c];
    i[r] = acc;
  }
  const double sigma = arr.device.sigma_read_rel * arr.device.range();
  if (sigma > 0.0) {
    if (!rng) throw config_error("mvm_read: read noise requires an rng");
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    const double s = sigma * std::sqrt(norm2);
    for (auto& x : i) x += s * gaussian(*rng);
  }
  return i;
}

// --- full kernel execution -----------------------------------------------------

struct CrossbarRunOptions {
  int r_state = 0;     // digitize the state to this many bits between steps
  double v_fs = 0.0;   // voltage full-scale in value units; 0 = unlimited
  Rng* rng = nullptr;  // consumed by read noise
};

// Step the array over a scalar input sequence. Each step reads
// [x_t; y_raw] = M_decoded * [x_{t-1}; u_t]; the output row carries the
// one-step-delayed kernel output y_t = 2*Re(Cbar x_{t-1}) + dbar*u_t.
inline std::vector<double> run_kernel_on_crossbar(const CrossbarArray& arr,
                                                  const ImssaLayout& lay,
                                                  const std::vector<double>& u,
                                                  const CrossbarRunOptions& opt = {}) {
  if (arr.g.data.empty()) throw config_error("run_kernel_on_crossbar: array not programmed");
  const std::size_t N = lay.n_state;
  const double range = arr.device.range();
  std::vector<cdouble> x(N, cdouble(0.0, 0.0));
  std::vector<double> v(arr.g.cols, 0.0);
  std::vector<double> y(u.size(), 0.0);
  std::vector<double> xre(N), xim(N);

  for (std::size_t t = 0; t < u.size(); ++t) {
    auto lane = [&](std::size_t base, double val) {
      v[base] = std::max(val, 0.0);
      v[base + 1] = std::max(-val, 0.0);
    };
    for (std::size_t n = 0; n < N; ++n) {
      if (opt.v_fs > 0.0 &&
          std::max(std::fabs(x[n].real()), std::fabs(x[n].imag())) > opt.v_fs)
        throw numerical_error("crossbar state exceeds voltage full-scale at step " +
                              std::to_string(t));
      lane(4 * n, x[n].real());
      lane(4 * n + 2, x[n].imag());
    }
    if (opt.v_fs > 0.0 && std::fabs(u[t]) > opt.v_fs)
      throw numerical_error("crossbar input exceeds voltage full-scale at step " +
                            std::to_string(t));
    lane(4 * N, u[t]);
    v[4 * N + 2] = 0.0;  // scalar input: imaginary sub-lanes idle
    v[4 * N + 3] = 0.0;

    const std::vector<double> i = mvm_read(arr, v, opt.rng);
    // state rows decode with s_a; the C row group with s_c
    for (std::size_t n = 0; n < N; ++n)
      x[n] = {(i[4 * n] - i[4 * n + 1]) * lay.s_a / range,
              (i[4 * n + 2] - i[4 * n + 3]) * lay.s_a / range};
    y[t] = 2.0 * (i[4 * N] - i[4 * N + 1]) * lay.s_c / range;

    if (opt.r_state > 0) {
      for (std::size_t n = 0; n < N; ++n) {
        xre[n] = x[n].real();
        xim[n] = x[n].imag();
      }
      quantize_inplace(xre, opt.r_state);
      quantize_inplace(xim, opt.r_state);
      for (std::size_t n = 0; n < N; ++n) x[n] = {xre[n], xim[n]};
    }
  }
  return y;
}

// --- model-level evaluation ------------------------------------------------------

// One programmed array per kernel, built from the effective (quantized,
// masked) discrete banks.
inline std::vector<std::vector<MappedKernel>> map_model_kernels(
    const ModelParams& m, const QuantSpec* quant, const DeviceModel& dev,
    ScalingMode scaling, Rng& rng, std::size_t array_size = 64) {
  std::vector<std::vector<MappedKernel>> arrays;
  for (const auto& layer : m.layers) {
    auto bank = effective_kernels(layer, quant);
    std::vector<MappedKernel> row;
    for (const auto& dk : bank) {
      MappedKernel mk = map_imssa(dk, dev, scaling, array_size);
      program(mk.array, rng);
      row.push_back(std::move(mk));
    }
    arrays.push_back(std::move(row));
  }
  return arrays;
}

// Forward pass with every kernel evaluated on its crossbar array; the rest of
// the block (norm, GELU, mixing, residual, activation quantization, pooling,
// en-/decoder) follows the software path.
inline std::vector<double> crossbar_forward(const ModelParams& m, const Matrix& u,
                                            std::vector<std::vector<MappedKernel>>& arrays,
                                            const QuantSpec* q,
                                            const CrossbarRunOptions& run_opt) {
  const Hyper& hy = m.hyper;
  const std::size_t L = u.rows;
  const Matrix w_enc = detail::maybe_quantized(m.w_enc, q ? q->r_coder : 0);
  Matrix x(L, std::size_t(hy.h));
  for (std::size_t t = 0; t < L; ++t)
    for (int j = 0; j < hy.h; ++j) {
      double acc = m.b_enc[std::size_t(j)];
      for (int i = 0; i < hy.n_in; ++i) acc += w_enc.at(std::size_t(j), std::size_t(i)) * u.at(t, std::size_t(i));
      x.at(t, std::size_t(j)) = acc;
    }

  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const LayerParams& layer = m.layers[li];
    const std::size_t width = layer.width();
    Matrix xn = x;
    detail::layernorm_rows(xn, layer.ln_gamma, layer.ln_beta);

    Matrix g(L, width);
    std::vector<double> in(L);
    for (std::size_t k = 0; k < width; ++k) {
      const int ch = layer.kernel_channel[k];
      for (std::size_t t = 0; t < L; ++t) in[t] = xn.at(t, std::size_t(ch));
      const std::vector<double> yk =
          run_kernel_on_crossbar(arrays[li][k].array, arrays[li][k].layout, in, run_opt);
      for (std::size_t t = 0; t < L; ++t) g.at(t, k) = gelu(yk[t]);
    }

    Matrix w_masked = layer.w_mix;
    if (!layer.mask_mix.data.empty())
      for (std::size_t i = 0; i < w_masked.data.size(); ++i)
        w_masked.data[i] *= layer.mask_mix.data[i];
    const Matrix w_mix = detail::maybe_quantized(w_masked, q ? q->r_linear : 0);
    for (std::size_t t = 0; t < L; ++t)
      for (int j = 0; j < hy.h; ++j) {
        double acc = layer.b_mix[std::size_t(j)];
        for (std::size_t k = 0; k < width; ++k) acc += w_mix.at(std::size_t(j), k) * g.at(t, k);
        x.at(t, std::size_t(j)) += acc;
      }
    if (q && q->r_act > 0) quantize_inplace(x.data, q->r_act);
    detail::check_finite(x.data, "crossbar layer " + std::to_string(li));
  }

  std::vector<double> pooled(std::size_t(hy.h), 0.0);
  for (std::size_t t = 0; t < L; ++t)
    for (int j = 0; j < hy.h; ++j) pooled[std::size_t(j)] += x.at(t, std::size_t(j));
  for (auto& v : pooled) v /= double(L);
  const Matrix w_dec = detail::maybe_quantized(m.w_dec, q ? q->r_coder : 0);
  return affine(w_dec, m.b_dec, pooled);
}

// --- persistence -----------------------------------------------------------------

inline void dump_array(const std::filesystem::path& path, const CrossbarArray& arr) {
  std::string header;
  header += "ssmq-crossbar-v1\n";
  header += std::to_string(arr.g.rows) + " " + std::to_string(arr.g.cols) + "\n";
  header += format_double(arr.device.g_min) + " " + format_double(arr.device.g_max) +
            " " + std::to_string(arr.device.program_bits) + " " +
            format_double(arr.device.sigma_write_rel) + " " +
            format_double(arr.device.sigma_read_rel) + "\n";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write " + path.string());
  out << header;
  out.write(reinterpret_cast<const char*>(arr.g.data.data()),
            std::streamsize(arr.g.data.size() * sizeof(double)));
  if (!out) throw config_error("short write to " + path.string());
}

inline CrossbarArray restore_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot read " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != "ssmq-crossbar-v1")
    throw config_error(path.string() + ": not a crossbar dump");
  CrossbarArray arr;
  std::size_t rows = 0, cols = 0;
  in >> rows >> cols >> arr.device.g_min >> arr.device.g_max >>
      arr.device.program_bits >> arr.device.sigma_write_rel >>
      arr.device.sigma_read_rel;
  in.ignore(1, '\n');
  if (!in) throw config_error(path.string() + ": truncated header");
  arr.g = Matrix(rows, cols);
  in.read(reinterpret_cast<char*>(arr.g.data.data()),
          std::streamsize(rows * cols * sizeof(double)));
  if (std::size_t(in.gcount()) != rows * cols * sizeof(double))
    throw config_error(path.string() + ": truncated conductance block");
  arr.targets = arr.g;
  return arr;
}

}  // namespace ssmq
