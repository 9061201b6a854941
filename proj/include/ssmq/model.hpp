#pragma once
// Full classifier: linear encoder, stacked blocks of H parallel diagonal
// kernels (pre-norm, GELU, channel mixing, residual), mean pooling over time,
// linear decoder. Inference supports recurrent / convolutional / delayed
// (imssa) execution with optional quantization, weight noise, and prune masks.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ssmq/errors.hpp"
#include "ssmq/kernel.hpp"
#include "ssmq/quantizer.hpp"
#include "ssmq/tensor.hpp"

namespace ssmq {

// Trainable parameterization of one kernel. The continuous diagonal is stored
// as (rho, theta) with a = -exp(rho) + i*theta so stability never needs a
// projection step; the step size is stored as log(dt).
struct KernelWeights {
  std::vector<double> rho, theta;
  std::vector<double> b_re, b_im;
  std::vector<double> c_re, c_im;
  double log_dt = 0.0;
  double d = 0.0;  // feedthrough, fixed 0

  std::size_t n() const { return rho.size(); }

  KernelParams continuous() const {
    KernelParams p;
    p.a.resize(n());
    p.b.resize(n());
    p.c.resize(n());
    for (std::size_t i = 0; i < n(); ++i) {
      p.a[i] = {-std::exp(rho[i]), theta[i]};
      p.b[i] = {b_re[i], b_im[i]};
      p.c[i] = {c_re[i], c_im[i]};
    }
    p.d = d;
    p.dt = std::exp(log_dt);
    return p;
  }
};

struct LayerParams {
  std::vector<KernelWeights> kernels;  // width may shrink under structural pruning
  std::vector<int> kernel_channel;     // input channel each kernel listens to
  Matrix w_mix;                        // H x width
  std::vector<double> b_mix;           // H
  std::vector<double> ln_gamma, ln_beta;
  // Unstructured prune masks on discrete kernel entries / mixing weights.
  // Empty matrices mean "dense".
  Matrix mask_a, mask_b, mask_c;  // width x N
  Matrix mask_mix;                // H x width

  std::size_t width() const { return kernels.size(); }
};

struct Hyper {
  int n_state = 16;
  int h = 8;
  int n_layer = 2;
  int n_in = 1;
  int n_out = 2;
  bool fixed_b = true;  // keep b as the untrained all-ones vector
};

struct ModelParams {
  Hyper hyper;
  Matrix w_enc;  // H x n_in
  std::vector<double> b_enc;
  std::vector<LayerParams> layers;
  Matrix w_dec;  // n_out x H
  std::vector<double> b_dec;
};

enum class RunMode { kRecurrent, kConv, kImssa };

inline const char* run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::kRecurrent: return "recurrent";
    case RunMode::kConv: return "convolutional";
    case RunMode::kImssa: return "imssa";
  }
  return "?";
}

enum class StateQuantMode { kIndirectConv, kDirectRecurrent };

// Transient Gaussian perturbation of the discrete kernel parameters.
// sigma is relative to max|part| of the targeted tensor, the same full-scale
// reference the quantizer uses. "when" gates training only: inference noise
// applies whenever sigma_rel > 0.
struct NoiseSpec {
  double sigma_rel = 0.0;
  bool target_abar = true, target_bbar = true, target_cbar = true;
  enum class When { kInferenceOnly, kTrainingAndInference } when = When::kInferenceOnly;

  bool active() const { return sigma_rel > 0.0; }
  bool active_in_training() const {
    return active() && when == When::kTrainingAndInference;
  }
};

// ---------------------------------------------------------------------------
// Initialization

inline ModelParams init_model(const Hyper& hyper, std::uint64_t seed) {
  if (hyper.n_state < 1 || hyper.h < 1 || hyper.n_layer < 1 || hyper.n_in < 1 ||
      hyper.n_out < 1)
    throw config_error("init_model: all dimensions must be >= 1");
  Rng rng(seed);
  auto uniform_pm = [&rng](double half) {
    std::uniform_real_distribution<double> d(-half, half);
    return d(rng);
  };
  auto fill_linear = [&](Matrix& w, std::vector<double>& b, std::size_t out,
                         std::size_t in) {
    const double half = 1.0 / std::sqrt(double(in));
    w = Matrix(out, in);
    for (auto& x : w.data) x = uniform_pm(half);
    b.assign(out, 0.0);
    for (auto& x : b) x = uniform_pm(half);
  };

  ModelParams m;
  m.hyper = hyper;
  fill_linear(m.w_enc, m.b_enc, hyper.h, hyper.n_in);

  const std::size_t N = std::size_t(hyper.n_state);
  std::uniform_real_distribution<double> logdt_dist(std::log(1e-3), std::log(1e-1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double c_scale = 1.0 / std::sqrt(double(N));

  m.layers.resize(hyper.n_layer);
  for (auto& layer : m.layers) {
    layer.kernels.resize(hyper.h);
    layer.kernel_channel.resize(hyper.h);
    for (int k = 0; k < hyper.h; ++k) {
      KernelWeights& kw = layer.kernels[k];
      layer.kernel_channel[k] = k;
      kw.rho.assign(N, std::log(0.5));  // Re(a) = -1/2
      kw.theta.resize(N);
      for (std::size_t i = 0; i < N; ++i) kw.theta[i] = kPi * double(i);
      kw.log_dt = logdt_dist(rng);
      kw.c_re.resize(N);
      kw.c_im.resize(N);
      for (std::size_t i = 0; i < N; ++i) kw.c_re[i] = gauss(rng) * c_scale;
      for (std::size_t i = 0; i < N; ++i) kw.c_im[i] = gauss(rng) * c_scale;
      if (hyper.fixed_b) {
        kw.b_re.assign(N, 1.0);
        kw.b_im.assign(N, 0.0);
      } else {
        kw.b_re.resize(N);
        kw.b_im.resize(N);
        for (std::size_t i = 0; i < N; ++i) kw.b_re[i] = gauss(rng);
        for (std::size_t i = 0; i < N; ++i) kw.b_im[i] = gauss(rng);
      }
    }
    fill_linear(layer.w_mix, layer.b_mix, hyper.h, hyper.h);
    layer.ln_gamma.assign(hyper.h, 1.0);
    layer.ln_beta.assign(hyper.h, 0.0);
  }
  fill_linear(m.w_dec, m.b_dec, hyper.n_out, hyper.h);
  return m;
}

// ---------------------------------------------------------------------------
// Effective (deployed) kernels: parameter quantization in the value domain,
// ZOH discretization, prune masks on the discrete entries, then weight noise.

namespace detail {

template <typename Get>
inline double bank_max_abs(const LayerParams& layer, Get get) {
  double m = 0.0;
  for (const auto& kw : layer.kernels)
    for (std::size_t i = 0; i < kw.n(); ++i) m = std::max(m, std::fabs(get(kw, i)));
  return m;
}

// Quantize one per-layer bank of kernel scalars in place via getter/setter.
template <typename Get, typename Set>
inline void quantize_bank(std::vector<KernelWeights>& ks, int bits, Get get, Set set) {
  if (bits <= 0) return;
  const long n_levels = quant_levels(bits);
  double f = 0.0;
  for (const auto& kw : ks)
    for (std::size_t i = 0; i < kw.n(); ++i) f = std::max(f, std::fabs(get(kw, i)));
  for (auto& kw : ks)
    for (std::size_t i = 0; i < kw.n(); ++i)
      set(kw, i, quantize_value(get(kw, i), f, n_levels));
}

}  // namespace detail

// Per-layer discrete kernel bank after quantization and masking (no noise).
inline std::vector<DiscreteKernel> effective_kernels(const LayerParams& layer,
                                                     const QuantSpec* quant) {
  std::vector<KernelWeights> ks = layer.kernels;
  if (quant) {
    detail::quantize_bank(
        ks, quant->r_a, [](const KernelWeights& k, std::size_t i) { return -std::exp(k.rho[i]); },
        [](KernelWeights& k, std::size_t i, double v) {
          k.rho[i] = std::log(-v);  // v <= 0 on the symmetric grid; -0 -> rho = -inf
        });
    detail::quantize_bank(
        ks, quant->r_a, [](const KernelWeights& k, std::size_t i) { return k.theta[i]; },
        [](KernelWeights& k, std::size_t i, double v) { k.theta[i] = v; });
    detail::quantize_bank(
        ks, quant->r_b, [](const KernelWeights& k, std::size_t i) { return k.b_re[i]; },
        [](KernelWeights& k, std::size_t i, double v) { k.b_re[i] = v; });
    detail::quantize_bank(
        ks, quant->r_b, [](const KernelWeights& k, std::size_t i) { return k.b_im[i]; },
        [](KernelWeights& k, std::size_t i, double v) { k.b_im[i] = v; });
    detail::quantize_bank(
        ks, quant->r_c, [](const KernelWeights& k, std::size_t i) { return k.c_re[i]; },
        [](KernelWeights& k, std::size_t i, double v) { k.c_re[i] = v; });
    detail::quantize_bank(
        ks, quant->r_c, [](const KernelWeights& k, std::size_t i) { return k.c_im[i]; },
        [](KernelWeights& k, std::size_t i, double v) { k.c_im[i] = v; });
    if (quant->r_dt > 0) {
      // dt lives on the grid of its exponentiated value
      std::vector<double> dt(ks.size());
      for (std::size_t k = 0; k < ks.size(); ++k) dt[k] = std::exp(ks[k].log_dt);
      quantize_inplace(dt, quant->r_dt);
      for (std::size_t k = 0; k < ks.size(); ++k) ks[k].log_dt = std::log(dt[k]);
    }
  }
  std::vector<DiscreteKernel> bank(ks.size());
  for (std::size_t k = 0; k < ks.size(); ++k)
    bank[k] = discretize_zoh(ks[k].continuous());
  auto apply_mask = [&](const Matrix& mask, auto member) {
    if (mask.data.empty()) return;
    for (std::size_t k = 0; k < bank.size(); ++k)
      for (std::size_t i = 0; i < bank[k].n(); ++i) (bank[k].*member)[i] *= mask.at(k, i);
  };
  apply_mask(layer.mask_a, &DiscreteKernel::abar);
  apply_mask(layer.mask_b, &DiscreteKernel::bbar);
  apply_mask(layer.mask_c, &DiscreteKernel::cbar);
  return bank;
}

// Additive noise offsets for one layer bank, sampled fresh per forward pass.
// Offsets are absolute (sigma already folded in) so a consumer can treat them
// as constants during backward passes.
struct NoiseOffsets {
  std::vector<double> a_re, a_im, b_re, b_im, c_re, c_im;  // width*N each; empty = none
};

inline NoiseOffsets sample_noise_offsets(const std::vector<DiscreteKernel>& bank,
                                         const NoiseSpec& spec, Rng& rng) {
  NoiseOffsets off;
  if (!spec.active() || bank.empty()) return off;
  const std::size_t n = bank[0].n();
  const std::size_t total = bank.size() * n;
  auto part_max = [&](auto member, bool imag) {
    double m = 0.0;
    for (const auto& k : bank)
      for (std::size_t i = 0; i < n; ++i) {
        const cdouble z = (k.*member)[i];
        m = std::max(m, std::fabs(imag ? z.imag() : z.real()));
      }
    return m;
  };
  auto sample = [&](auto member, std::vector<double>& out_re, std::vector<double>& out_im) {
    const double s_re = spec.sigma_rel * part_max(member, false);
    const double s_im = spec.sigma_rel * part_max(member, true);
    out_re.resize(total);
    out_im.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
      out_re[i] = s_re * gaussian(rng);
      out_im[i] = s_im * gaussian(rng);
    }
  };
  if (spec.target_abar) sample(&DiscreteKernel::abar, off.a_re, off.a_im);
  if (spec.target_bbar) sample(&DiscreteKernel::bbar, off.b_re, off.b_im);
  if (spec.target_cbar) sample(&DiscreteKernel::cbar, off.c_re, off.c_im);
  return off;
}

inline void apply_noise_offsets(std::vector<DiscreteKernel>& bank, const NoiseOffsets& off) {
  if (bank.empty()) return;
  const std::size_t n = bank[0].n();
  auto add = [&](auto member, const std::vector<double>& re, const std::vector<double>& im) {
    if (re.empty()) return;
    for (std::size_t k = 0; k < bank.size(); ++k)
      for (std::size_t i = 0; i < n; ++i)
        (bank[k].*member)[i] += cdouble(re[k * n + i], im[k * n + i]);
  };
  add(&DiscreteKernel::abar, off.a_re, off.a_im);
  add(&DiscreteKernel::bbar, off.b_re, off.b_im);
  add(&DiscreteKernel::cbar, off.c_re, off.c_im);
}

// Transient-noise view of a layer bank (original untouched).
inline std::vector<DiscreteKernel> inject_weight_noise(
    const std::vector<DiscreteKernel>& bank, const NoiseSpec& spec, Rng& rng) {
  std::vector<DiscreteKernel> noisy = bank;
  apply_noise_offsets(noisy, sample_noise_offsets(bank, spec, rng));
  return noisy;
}

// ---------------------------------------------------------------------------
// Forward

struct Activations {
  std::vector<Matrix> kernel_outputs;  // per layer: L x width, pre-GELU
  std::vector<Matrix> block_outputs;   // per layer: L x H, post-residual
};

struct ForwardOptions {
  RunMode mode = RunMode::kConv;
  StateQuantMode state_mode = StateQuantMode::kIndirectConv;
  const QuantSpec* quant = nullptr;
  const NoiseSpec* noise = nullptr;
  Rng* rng = nullptr;  // required when noise is active
  Activations* trace = nullptr;
};

namespace detail {

inline void layernorm_rows(Matrix& x, const std::vector<double>& gamma,
                           const std::vector<double>& beta) {
  constexpr double eps = 1e-5;
  for (std::size_t t = 0; t < x.rows; ++t) {
    double* row = &x.data[t * x.cols];
    double mean = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mean += row[j];
    mean /= double(x.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= double(x.cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < x.cols; ++j)
      row[j] = (row[j] - mean) * inv * gamma[j] + beta[j];
  }
}

inline void check_finite(const std::vector<double>& v, const std::string& where) {
  if (any_nan(v)) throw numerical_error("forward: NaN detected at " + where);
}

inline Matrix maybe_quantized(const Matrix& w, int bits) {
  if (bits <= 0) return w;
  Matrix q = w;
  quantize_inplace(q.data, bits);
  return q;
}

}  // namespace detail

inline std::vector<double> forward(const ModelParams& m, const Matrix& u,
                                   const ForwardOptions& opt = {}) {
  const Hyper& hy = m.hyper;
  if (u.cols != std::size_t(hy.n_in))
    throw std::invalid_argument("forward: input has " + std::to_string(u.cols) +
                                " channels, model expects " + std::to_string(hy.n_in));
  if (u.rows == 0) throw std::invalid_argument("forward: empty input sequence");
  const std::size_t L = u.rows;
  const QuantSpec* q = opt.quant;
  const bool noisy = opt.noise && opt.noise->active();
  if (noisy && !opt.rng)
    throw std::invalid_argument("forward: noise requested without an rng");

  // Encoder
  const Matrix w_enc = detail::maybe_quantized(m.w_enc, q ? q->r_coder : 0);
  Matrix x(L, hy.h);
  for (std::size_t t = 0; t < L; ++t) {
    for (int j = 0; j < hy.h; ++j) {
      double acc = m.b_enc[j];
      for (int i = 0; i < hy.n_in; ++i) acc += w_enc.at(j, i) * u.at(t, i);
      x.at(t, j) = acc;
    }
  }
  detail::check_finite(x.data, "encoder output");

  StateQuantSplit split;
  const bool indirect = q && q->r_state > 0 && opt.mode == RunMode::kConv &&
                        opt.state_mode == StateQuantMode::kIndirectConv;
  const bool direct = q && q->r_state > 0 && opt.mode != RunMode::kConv &&
                      opt.state_mode == StateQuantMode::kDirectRecurrent;
  if (indirect) split = state_quantization_split(q->r_state);

  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const LayerParams& layer = m.layers[li];
    const std::size_t width = layer.width();

    Matrix xn = x;
    detail::layernorm_rows(xn, layer.ln_gamma, layer.ln_beta);

    std::vector<DiscreteKernel> bank = effective_kernels(layer, q);
    if (noisy) apply_noise_offsets(bank, sample_noise_offsets(bank, *opt.noise, *opt.rng));

    if (indirect) quantize_inplace(xn.data, split.input_bits);

    Matrix y(L, width);
    if (opt.mode == RunMode::kConv) {
      // Materialize the whole bank first: the indirect state grid spans the
      // layer's kernels jointly, like every other per-layer group scale.
      std::vector<std::vector<double>> kmat(width);
      for (std::size_t k = 0; k < width; ++k)
        kmat[k] = materialize_conv_kernel(bank[k], L);
      if (indirect) {
        const long n_levels = quant_levels(split.kernel_bits);
        double f = 0.0;
        for (const auto& kk : kmat) f = std::max(f, max_abs(kk));
        for (auto& kk : kmat)
          for (auto& v : kk) v = quantize_value(v, f, n_levels);
      }
      std::vector<double> in(L);
      for (std::size_t k = 0; k < width; ++k) {
        const int ch = layer.kernel_channel[k];
        for (std::size_t t = 0; t < L; ++t) in[t] = xn.at(t, ch);
        const std::vector<double> yk = conv_apply(kmat[k], in);
        for (std::size_t t = 0; t < L; ++t) y.at(t, k) = yk[t];
      }
    } else {
      const bool delayed = opt.mode == RunMode::kImssa;
      const long n_levels = direct ? quant_levels(q->r_state) : 0;
      std::vector<double> xre, xim;
      for (std::size_t k = 0; k < width; ++k) {
        const int ch = layer.kernel_channel[k];
        const DiscreteKernel& dk = bank[k];
        StateVector st(dk.n(), cdouble(0.0, 0.0));
        for (std::size_t t = 0; t < L; ++t) {
          const double ut = xn.at(t, ch);
          const double yt = delayed ? imssa_step(dk, st, ut) : kernel_step(dk, st, ut);
          if (direct) {
            // Per-step dynamic grid over this kernel's state, re/im separate.
            xre.resize(dk.n());
            xim.resize(dk.n());
            for (std::size_t i = 0; i < dk.n(); ++i) {
              xre[i] = st[i].real();
              xim[i] = st[i].imag();
            }
            const double fre = max_abs(xre), fim = max_abs(xim);
            for (std::size_t i = 0; i < dk.n(); ++i)
              st[i] = {quantize_value(xre[i], fre, n_levels),
                       quantize_value(xim[i], fim, n_levels)};
          }
          y.at(t, k) = yt;
        }
      }
    }
    if (opt.trace) opt.trace->kernel_outputs.push_back(y);

    Matrix g = y;
    for (auto& v : g.data) v = gelu(v);

    Matrix w_masked = layer.w_mix;
    if (!layer.mask_mix.data.empty())
      for (std::size_t i = 0; i < w_masked.data.size(); ++i)
        w_masked.data[i] *= layer.mask_mix.data[i];
    const Matrix w_mix = detail::maybe_quantized(w_masked, q ? q->r_linear : 0);
    for (std::size_t t = 0; t < L; ++t) {
      for (int j = 0; j < hy.h; ++j) {
        double acc = layer.b_mix[j];
        for (std::size_t k = 0; k < width; ++k) acc += w_mix.at(j, k) * g.at(t, k);
        x.at(t, j) += acc;  // residual
      }
    }
    if (q && q->r_act > 0) quantize_inplace(x.data, q->r_act);
    if (opt.trace) opt.trace->block_outputs.push_back(x);
    detail::check_finite(x.data, "layer " + std::to_string(li));
  }

  std::vector<double> pooled(hy.h, 0.0);
  for (std::size_t t = 0; t < L; ++t)
    for (int j = 0; j < hy.h; ++j) pooled[j] += x.at(t, j);
  for (auto& v : pooled) v /= double(L);

  const Matrix w_dec = detail::maybe_quantized(m.w_dec, q ? q->r_coder : 0);
  std::vector<double> logits = affine(w_dec, m.b_dec, pooled);
  detail::check_finite(logits, "decoder output");
  return logits;
}

// ---------------------------------------------------------------------------
// Post-training quantization: snap stored parameters to their group grids.

inline ModelParams apply_ptq(const ModelParams& model, const QuantSpec& spec) {
  ModelParams m = model;
  for (auto& layer : m.layers) {
    detail::quantize_bank(
        layer.kernels, spec.r_a,
        [](const KernelWeights& k, std::size_t i) { return -std::exp(k.rho[i]); },
        [](KernelWeights& k, std::size_t i, double v) { k.rho[i] = std::log(-v); });
    detail::quantize_bank(
        layer.kernels, spec.r_a, [](const KernelWeights& k, std::size_t i) { return k.theta[i]; },
        [](KernelWeights& k, std::size_t i, double v) { k.theta[i] = v; });
    detail::quantize_bank(
        layer.kernels, spec.r_b, [](const KernelWeights& k, std::size_t i) { return k.b_re[i]; },
        [](KernelWeights& k, std::size_t i, double v) { k.b_re[i] = v; });
    detail::quantize_bank(
        layer.kernels, spec.r_b, [](const KernelWeights& k, std::size_t i) { return k.b_im[i]; },
        [](KernelWeights& k, std::size_t i, double v) { k.b_im[i] = v; });
    detail::quantize_bank(
        layer.kernels, spec.r_c, [](const KernelWeights& k, std::size_t i) { return k.c_re[i]; },
        [](KernelWeights& k, std::size_t i, double v) { k.c_re[i] = v; });
    detail::quantize_bank(
        layer.kernels, spec.r_c, [](const KernelWeights& k, std::size_t i) { return k.c_im[i]; },
        [](KernelWeights& k, std::size_t i, double v) { k.c_im[i] = v; });
    if (spec.r_dt > 0) {
      std::vector<double> dt(layer.kernels.size());
      for (std::size_t k = 0; k < dt.size(); ++k) dt[k] = std::exp(layer.kernels[k].log_dt);
      quantize_inplace(dt, spec.r_dt);
      for (std::size_t k = 0; k < dt.size(); ++k) layer.kernels[k].log_dt = std::log(dt[k]);
    }
    if (spec.r_linear > 0) {
      if (!layer.mask_mix.data.empty())
        for (std::size_t i = 0; i < layer.w_mix.data.size(); ++i)
          layer.w_mix.data[i] *= layer.mask_mix.data[i];
      quantize_inplace(layer.w_mix.data, spec.r_linear);
    }
  }
  if (spec.r_coder > 0) {
    quantize_inplace(m.w_enc.data, spec.r_coder);
    quantize_inplace(m.w_dec.data, spec.r_coder);
  }
  return m;
}

// Permute the kernels of one layer (with their input channels, masks, and the
// matching mixing columns); logits are invariant under this.
inline void permute_layer_kernels(ModelParams& m, std::size_t layer_index,
                                  const std::vector<std::size_t>& perm) {
  LayerParams& layer = m.layers.at(layer_index);
  const std::size_t w = layer.width();
  if (perm.size() != w) throw std::invalid_argument("permute_layer_kernels: bad permutation");
  LayerParams out = layer;
  for (std::size_t k = 0; k < w; ++k) {
    out.kernels[k] = layer.kernels[perm[k]];
    out.kernel_channel[k] = layer.kernel_channel[perm[k]];
    for (std::size_t j = 0; j < layer.w_mix.rows; ++j)
      out.w_mix.at(j, k) = layer.w_mix.at(j, perm[k]);
    auto perm_mask = [&](const Matrix& src, Matrix& dst) {
      if (src.data.empty()) return;
      for (std::size_t i = 0; i < src.cols; ++i) dst.at(k, i) = src.at(perm[k], i);
    };
    perm_mask(layer.mask_a, out.mask_a);
    perm_mask(layer.mask_b, out.mask_b);
    perm_mask(layer.mask_c, out.mask_c);
    if (!layer.mask_mix.data.empty())
      for (std::size_t j = 0; j < layer.mask_mix.rows; ++j)
        out.mask_mix.at(j, k) = layer.mask_mix.at(j, perm[k]);
  }
  layer = std::move(out);
}

}  // namespace ssmq
