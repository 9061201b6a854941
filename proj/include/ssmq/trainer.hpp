#pragma once
// Training loop: builds a tape per batch whose forward pass mirrors the
// convolution-mode inference path op for op (same quantization points, same
// masks, same noise offsets), runs Adam on the parameter tensors, tracks the
// best validation model, and writes a CSV history. Quantizers in the graph are
// straight-through; weight-noise offsets are sampled once per batch from the
// current effective kernels and entered as constants.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssmq/autodiff.hpp"
#include "ssmq/datasets.hpp"
#include "ssmq/errors.hpp"
#include "ssmq/io.hpp"
#include "ssmq/model.hpp"
#include "ssmq/quantizer.hpp"
#include "ssmq/tensor.hpp"

namespace ssmq {

// Replaces dynamic re-quantization with recorded constant offsets so that a
// finite-difference probe sees a locally smooth function with the same value
// at the base point. `replay` consumes offsets in recording order.
struct SteFreeze {
  bool replay = false;
  std::vector<std::vector<double>> offsets;
  std::size_t cursor = 0;
};

namespace detail {

inline int ste(Tape& t, int x, int bits, SteFreeze* freeze) {
  if (bits <= 0) return x;
  if (freeze && freeze->replay) {
    if (freeze->cursor >= freeze->offsets.size())
      throw numerical_error("ste replay ran past recorded offsets");
    return t.ste_frozen(x, freeze->offsets[freeze->cursor++]);
  }
  if (freeze) {
    QuantizedTensor q = quantize_tensor(t.val(x), bits);
    std::vector<double> off(q.values.size());
    for (std::size_t i = 0; i < off.size(); ++i) off[i] = q.values[i] - t.val(x)[i];
    freeze->offsets.push_back(off);
    return t.ste_frozen(x, std::move(off));
  }
  return t.ste_quantize(x, bits);
}

inline std::vector<double> gather_bank(const LayerParams& layer,
                                       const std::vector<double> KernelWeights::* member) {
  std::vector<double> out;
  for (const auto& k : layer.kernels)
    out.insert(out.end(), (k.*member).begin(), (k.*member).end());
  return out;
}

}  // namespace detail

struct LayerLeaves {
  int rho = -1, theta = -1, b_re = -1, b_im = -1, c_re = -1, c_im = -1, log_dt = -1;
  int mix_w = -1, mix_b = -1, ln_g = -1, ln_b = -1;
};

struct GraphLeaves {
  int enc_w = -1, enc_b = -1, dec_w = -1, dec_b = -1;
  std::vector<LayerLeaves> layers;
};

struct GraphOutputs {
  GraphLeaves leaves;
  std::vector<int> logits;  // node id per sample
  int loss = -1;            // batch-mean cross entropy
};

// One tape per batch. Parameter transforms and the kernel bank are built once
// and shared across the batch; only the per-sample chain is repeated.
inline GraphOutputs build_loss_graph(Tape& t, const ModelParams& m,
                                     const std::vector<const SequenceSample*>& batch,
                                     const QuantSpec& quant, StateQuantMode state_mode,
                                     const std::vector<NoiseOffsets>* noise,
                                     SteFreeze* freeze = nullptr) {
  if (batch.empty()) throw config_error("build_loss_graph: empty batch");
  const std::size_t L = batch.front()->u.rows;
  const std::size_t H = std::size_t(m.hyper.h);
  GraphOutputs out;

  out.leaves.enc_w = t.leaf(m.w_enc.data, m.w_enc.rows);
  out.leaves.enc_b = t.leaf(m.b_enc);
  out.leaves.dec_w = t.leaf(m.w_dec.data, m.w_dec.rows);
  out.leaves.dec_b = t.leaf(m.b_dec);
  const int enc_w_q = detail::ste(t, out.leaves.enc_w, quant.r_coder, freeze);
  const int dec_w_q = detail::ste(t, out.leaves.dec_w, quant.r_coder, freeze);

  StateQuantSplit split;
  if (state_mode == StateQuantMode::kIndirectConv)
    split = state_quantization_split(quant.r_state);

  struct LayerGraph {
    int k_q = -1, mix_w_q = -1, mix_b = -1, ln_g = -1, ln_b = -1;
    int input_bits = 0;
    std::vector<int> channels;
  };
  std::vector<LayerGraph> lg(m.layers.size());

  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const LayerParams& layer = m.layers[li];
    const std::size_t width = layer.width();
    LayerLeaves& lv = out.leaves.layers.emplace_back();

    lv.rho = t.leaf(detail::gather_bank(layer, &KernelWeights::rho), width);
    lv.theta = t.leaf(detail::gather_bank(layer, &KernelWeights::theta), width);
    lv.b_re = t.leaf(detail::gather_bank(layer, &KernelWeights::b_re), width);
    lv.b_im = t.leaf(detail::gather_bank(layer, &KernelWeights::b_im), width);
    lv.c_re = t.leaf(detail::gather_bank(layer, &KernelWeights::c_re), width);
    lv.c_im = t.leaf(detail::gather_bank(layer, &KernelWeights::c_im), width);
    {
      std::vector<double> dts(width);
      for (std::size_t k = 0; k < width; ++k) dts[k] = layer.kernels[k].log_dt;
      lv.log_dt = t.leaf(std::move(dts), width);
    }
    lv.mix_w = t.leaf(layer.w_mix.data, layer.w_mix.rows);
    lv.mix_b = t.leaf(layer.b_mix);
    lv.ln_g = t.leaf(layer.ln_gamma);
    lv.ln_b = t.leaf(layer.ln_beta);

    const int a_re_q = detail::ste(t, t.neg_exp(lv.rho), quant.r_a, freeze);
    const int a_im_q = detail::ste(t, lv.theta, quant.r_a, freeze);
    const int b_re_q = detail::ste(t, lv.b_re, quant.r_b, freeze);
    const int b_im_q = detail::ste(t, lv.b_im, quant.r_b, freeze);
    const int c_re_q = detail::ste(t, lv.c_re, quant.r_c, freeze);
    const int c_im_q = detail::ste(t, lv.c_im, quant.r_c, freeze);
    const int dt_q = detail::ste(t, t.exp_op(lv.log_dt), quant.r_dt, freeze);

    Tape::KernelBankConstants cst;
    cst.mask_a = layer.mask_a.data;
    cst.mask_b = layer.mask_b.data;
    cst.mask_c = layer.mask_c.data;
    if (noise && !(*noise)[li].a_re.empty()) {
      const NoiseOffsets& no = (*noise)[li];
      cst.na_re = no.a_re;
      cst.na_im = no.a_im;
      cst.nb_re = no.b_re;
      cst.nb_im = no.b_im;
      cst.nc_re = no.c_re;
      cst.nc_im = no.c_im;
    }
    const int kbank = t.kernel_conv_bank(a_re_q, a_im_q, b_re_q, b_im_q, c_re_q, c_im_q,
                                         dt_q, L, std::move(cst));
    lg[li].k_q = detail::ste(t, kbank, split.kernel_bits, freeze);
    lg[li].input_bits = split.input_bits;
    int mix_w = lv.mix_w;
    if (!layer.mask_mix.data.empty()) mix_w = t.mask_mul(mix_w, layer.mask_mix.data);
    lg[li].mix_w_q = detail::ste(t, mix_w, quant.r_linear, freeze);
    lg[li].mix_b = lv.mix_b;
    lg[li].ln_g = lv.ln_g;
    lg[li].ln_b = lv.ln_b;
    lg[li].channels = layer.kernel_channel;
  }

  std::vector<int> losses;
  for (const SequenceSample* s : batch) {
    const int u = t.leaf(s->u.data, s->u.rows);
    int x = t.linear_rows(u, enc_w_q, out.leaves.enc_b);
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
      int xn = t.layernorm_rows(x, lg[li].ln_g, lg[li].ln_b);
      xn = detail::ste(t, xn, lg[li].input_bits, freeze);
      const int y = t.conv_bank_apply(lg[li].k_q, xn, lg[li].channels);
      const int a = t.gelu_op(y);
      const int mixed = t.linear_rows(a, lg[li].mix_w_q, lg[li].mix_b);
      x = t.add(x, mixed);
      x = detail::ste(t, x, quant.r_act, freeze);
    }
    const int pooled = t.mean_rows(x);
    const int logits = t.linear_rows(pooled, dec_w_q, out.leaves.dec_b);
    out.logits.push_back(logits);
    losses.push_back(t.softmax_cross_entropy(logits, s->label));
  }
  (void)H;
  out.loss = t.sum_scaled(std::move(losses), 1.0 / double(batch.size()));
  return out;
}

// --- parameter enumeration -----------------------------------------------------

struct ParamRef {
  std::string name;
  double* data;
  std::size_t len;
};

// Trainable tensors in a fixed order. b banks are omitted when the input
// matrix is fixed.
template <typename Fn>
void visit_params(ModelParams& m, Fn&& fn) {
  auto emit = [&](const std::string& name, std::vector<double>& v) {
    fn(ParamRef{name, v.data(), v.size()});
  };
  emit("enc.w", m.w_enc.data);
  emit("enc.b", m.b_enc);
  emit("dec.w", m.w_dec.data);
  emit("dec.b", m.b_dec);
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    LayerParams& layer = m.layers[li];
    const std::string p = "layer" + std::to_string(li) + ".";
    emit(p + "mix.w", layer.w_mix.data);
    emit(p + "mix.b", layer.b_mix);
    emit(p + "ln.g", layer.ln_gamma);
    emit(p + "ln.b", layer.ln_beta);
    for (std::size_t k = 0; k < layer.kernels.size(); ++k) {
      KernelWeights& kw = layer.kernels[k];
      const std::string q = p + "k" + std::to_string(k) + ".";
      emit(q + "rho", kw.rho);
      emit(q + "theta", kw.theta);
      if (!m.hyper.fixed_b) {
        emit(q + "b_re", kw.b_re);
        emit(q + "b_im", kw.b_im);
      }
      emit(q + "c_re", kw.c_re);
      emit(q + "c_im", kw.c_im);
      fn(ParamRef{q + "log_dt", &kw.log_dt, 1});
    }
  }
}

// Scatter tape gradients into visit_params naming.
inline std::map<std::string, std::vector<double>> collect_grads(Tape& t,
                                                                const GraphOutputs& g,
                                                                const ModelParams& m) {
  std::map<std::string, std::vector<double>> out;
  out["enc.w"] = t.grad(g.leaves.enc_w);
  out["enc.b"] = t.grad(g.leaves.enc_b);
  out["dec.w"] = t.grad(g.leaves.dec_w);
  out["dec.b"] = t.grad(g.leaves.dec_b);
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const LayerLeaves& lv = g.leaves.layers[li];
    const std::size_t N = std::size_t(m.hyper.n_state);
    const std::string p = "layer" + std::to_string(li) + ".";
    out[p + "mix.w"] = t.grad(lv.mix_w);
    out[p + "mix.b"] = t.grad(lv.mix_b);
    out[p + "ln.g"] = t.grad(lv.ln_g);
    out[p + "ln.b"] = t.grad(lv.ln_b);
    auto slice = [&](int id, std::size_t k) {
      const auto& v = t.grad(id);
      return std::vector<double>(v.begin() + k * N, v.begin() + (k + 1) * N);
    };
    for (std::size_t k = 0; k < m.layers[li].kernels.size(); ++k) {
      const std::string q = p + "k" + std::to_string(k) + ".";
      out[q + "rho"] = slice(lv.rho, k);
      out[q + "theta"] = slice(lv.theta, k);
      out[q + "b_re"] = slice(lv.b_re, k);
      out[q + "b_im"] = slice(lv.b_im, k);
      out[q + "c_re"] = slice(lv.c_re, k);
      out[q + "c_im"] = slice(lv.c_im, k);
      out[q + "log_dt"] = {t.grad(lv.log_dt)[k]};
    }
  }
  return out;
}

// --- evaluation ------------------------------------------------------------------

struct EvalOptions {
  QuantSpec quant;
  StateQuantMode state_mode = StateQuantMode::kIndirectConv;
  RunMode mode = RunMode::kConv;
  NoiseSpec noise;
  std::uint64_t noise_seed = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<int> predictions;
};

inline double cross_entropy(const std::vector<double>& logits, int label) {
  double zmax = logits[0];
  for (double z : logits) zmax = std::max(zmax, z);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - zmax);
  return std::log(sum) - (logits[std::size_t(label)] - zmax);
}

inline int argmax(const std::vector<double>& v) {
  return int(std::max_element(v.begin(), v.end()) - v.begin());
}

inline EvalResult evaluate(const ModelParams& m, const Dataset& data,
                           const EvalOptions& opt) {
  EvalResult res;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    ForwardOptions fo;
    fo.mode = opt.mode;
    fo.state_mode = opt.state_mode;
    fo.quant = &opt.quant;
    Rng rng(split_seed(opt.noise_seed, i));
    if (opt.noise.active()) {
      fo.noise = &opt.noise;
      fo.rng = &rng;
    }
    const std::vector<double> logits = forward(m, data.samples[i].u, fo);
    const int pred = argmax(logits);
    res.predictions.push_back(pred);
    if (pred == data.samples[i].label) ++correct;
    res.mean_loss += cross_entropy(logits, data.samples[i].label);
  }
  if (!data.samples.empty()) {
    res.accuracy = double(correct) / double(data.samples.size());
    res.mean_loss /= double(data.samples.size());
  }
  return res;
}

// --- Adam ---------------------------------------------------------------------

struct AdamState {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
  long step = 0;
};

inline void adam_update(ModelParams& m,
                        const std::map<std::string, std::vector<double>>& grads,
                        AdamState& st, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++st.step;
  const double c1 = 1.0 - std::pow(b1, double(st.step));
  const double c2 = 1.0 - std::pow(b2, double(st.step));
  visit_params(m, [&](const ParamRef& p) {
    auto git = grads.find(p.name);
    if (git == grads.end()) throw numerical_error("missing gradient for " + p.name);
    auto& [mo, vo] = st.moments[p.name];
    if (mo.size() != p.len) {
      mo.assign(p.len, 0.0);
      vo.assign(p.len, 0.0);
    }
    for (std::size_t i = 0; i < p.len; ++i) {
      const double g = git->second[i];
      mo[i] = b1 * mo[i] + (1.0 - b1) * g;
      vo[i] = b2 * vo[i] + (1.0 - b2) * g * g;
      p.data[i] -= lr * (mo[i] / c1) / (std::sqrt(vo[i] / c2) + eps);
    }
  });
}

// --- training loop ---------------------------------------------------------------

struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  QuantSpec quant;  // all-zero => float training
  StateQuantMode state_mode = StateQuantMode::kIndirectConv;
  NoiseSpec noise;
  std::string log_path;  // optional CSV destination
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0, train_acc = 0.0;
  double val_loss = 0.0, val_acc = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams model;  // best validation accuracy (earliest on ties)
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val_acc = -1.0;
};

inline TrainResult train_model(const ModelParams& initial, const Dataset& train_set,
                               const Dataset& val_set, const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw config_error("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw config_error("train: batch size must be >= 1");
  if (train_set.samples.empty()) throw config_error("train: empty training set");

  ModelParams m = initial;
  AdamState adam;
  Rng rng(cfg.seed);
  TrainResult res;
  res.model = m;

  std::optional<CsvWriter> log;
  if (!cfg.log_path.empty())
    log.emplace(cfg.log_path, "epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds");

  std::vector<std::size_t> order(train_set.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t base = 0; base < order.size(); base += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), base + std::size_t(cfg.batch_size));
      std::vector<const SequenceSample*> batch;
      for (std::size_t i = base; i < end; ++i)
        batch.push_back(&train_set.samples[order[i]]);

      std::vector<NoiseOffsets> offsets;
      const std::vector<NoiseOffsets>* offsets_ptr = nullptr;
      if (cfg.noise.active_in_training()) {
        for (const LayerParams& layer : m.layers)
          offsets.push_back(
              sample_noise_offsets(effective_kernels(layer, &cfg.quant), cfg.noise, rng));
        offsets_ptr = &offsets;
      }

      Tape tape;
      GraphOutputs g = build_loss_graph(tape, m, batch, cfg.quant, cfg.state_mode,
                                        offsets_ptr);
      const double batch_loss = tape.val(g.loss)[0];
      if (!std::isfinite(batch_loss))
        throw numerical_error("training diverged: non-finite loss at epoch " +
                              std::to_string(epoch));
      loss_sum += batch_loss * double(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (argmax(tape.val(g.logits[i])) == batch[i]->label) ++correct;
        ++seen;
      }
      tape.backward(g.loss);
      auto grads = collect_grads(tape, g, m);
      for (const auto& [name, gv] : grads)
        if (any_nan(gv))
          throw numerical_error("training diverged: non-finite gradient in " + name +
                                " at epoch " + std::to_string(epoch));
      adam_update(m, grads, adam, cfg.lr);
    }

    EvalOptions ev;
    ev.quant = cfg.quant;
    ev.state_mode = cfg.state_mode;
    ev.mode = RunMode::kConv;
    if (cfg.noise.active_in_training()) ev.noise = cfg.noise;
    ev.noise_seed = split_seed(cfg.seed, 0x9e3779b9u + std::uint64_t(epoch));
    const EvalResult val = evaluate(m, val_set, ev);

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = seen ? loss_sum / double(seen) : 0.0;
    st.train_acc = seen ? double(correct) / double(seen) : 0.0;
    st.val_loss = val.mean_loss;
    st.val_acc = val.accuracy;
    st.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(st);
    if (log)
      log->row({std::to_string(epoch), format_double(st.train_loss, "%.10g"),
                format_double(st.train_acc, "%.10g"), format_double(st.val_loss, "%.10g"),
                format_double(st.val_acc, "%.10g"),
                format_double(st.wall_seconds, "%.3f")});

    if (st.val_acc > res.best_val_acc) {
      res.best_val_acc = st.val_acc;
      res.best_epoch = epoch;
      res.model = m;
    }
  }
  return res;
}

}  // namespace ssmq
