#pragma once
// Checkpoint directory: a text manifest (hyperparameters, quantization spec,
// seed, tensor index with shapes) plus one binary64 little-endian row-major
// file per tensor. Round trips are bit-exact.

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ssmq/io.hpp"
#include "ssmq/model.hpp"
#include "ssmq/quantizer.hpp"

namespace ssmq {

struct Checkpoint {
  ModelParams model;
  QuantSpec quant;           // all zeros = trained in float
  StateQuantMode state_mode = StateQuantMode::kIndirectConv;
  std::uint64_t seed = 0;
};

namespace detail {

struct TensorRef {
  std::string name;
  std::size_t rows, cols;
  std::vector<double> data;
};

inline std::vector<TensorRef> collect_tensors(const ModelParams& m) {
  std::vector<TensorRef> out;
  auto add = [&out](const std::string& name, std::size_t r, std::size_t c,
                    std::vector<double> d) {
    out.push_back({name, r, c, std::move(d)});
  };
  auto add_mat = [&add](const std::string& name, const Matrix& w) {
    add(name, w.rows, w.cols, w.data);
  };
  add_mat("enc.w", m.w_enc);
  add("enc.b", 1, m.b_enc.size(), m.b_enc);
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const LayerParams& layer = m.layers[li];
    const std::string p = "layers." + std::to_string(li) + ".";
    const std::size_t w = layer.width();
    const std::size_t n = w ? layer.kernels[0].n() : 0;
    auto bank = [&](const std::string& name, auto field) {
      std::vector<double> d(w * n);
      for (std::size_t k = 0; k < w; ++k)
        for (std::size_t i = 0; i < n; ++i) d[k * n + i] = (layer.kernels[k].*field)[i];
      add(p + name, w, n, std::move(d));
    };
    bank("rho", &KernelWeights::rho);
    bank("theta", &KernelWeights::theta);
    bank("b_re", &KernelWeights::b_re);
    bank("b_im", &KernelWeights::b_im);
    bank("c_re", &KernelWeights::c_re);
    bank("c_im", &KernelWeights::c_im);
    std::vector<double> logdt(w), dvals(w), chans(w);
    for (std::size_t k = 0; k < w; ++k) {
      logdt[k] = layer.kernels[k].log_dt;
      dvals[k] = layer.kernels[k].d;
      chans[k] = double(layer.kernel_channel[k]);
    }
    add(p + "log_dt", 1, w, std::move(logdt));
    add(p + "d", 1, w, std::move(dvals));
    add(p + "kernel_channel", 1, w, std::move(chans));
    add_mat(p + "mix.w", layer.w_mix);
    add(p + "mix.b", 1, layer.b_mix.size(), layer.b_mix);
    add(p + "ln.gamma", 1, layer.ln_gamma.size(), layer.ln_gamma);
    add(p + "ln.beta", 1, layer.ln_beta.size(), layer.ln_beta);
    if (!layer.mask_a.data.empty()) add_mat(p + "mask.a", layer.mask_a);
    if (!layer.mask_b.data.empty()) add_mat(p + "mask.b", layer.mask_b);
    if (!layer.mask_c.data.empty()) add_mat(p + "mask.c", layer.mask_c);
    if (!layer.mask_mix.data.empty()) add_mat(p + "mask.mix", layer.mask_mix);
  }
  add_mat("dec.w", m.w_dec);
  add("dec.b", 1, m.b_dec.size(), m.b_dec);
  return out;
}

}  // namespace detail

inline std::string state_mode_name(StateQuantMode m) {
  return m == StateQuantMode::kIndirectConv ? "indirect-conv" : "direct-recurrent";
}

inline StateQuantMode parse_state_mode(const std::string& s) {
  if (s == "indirect-conv") return StateQuantMode::kIndirectConv;
  if (s == "direct-recurrent") return StateQuantMode::kDirectRecurrent;
  throw config_error("unknown state quantization mode: " + s +
                     " (expected indirect-conv or direct-recurrent)");
}

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto tensors = detail::collect_tensors(ck.model);
  std::ostringstream mf;
  mf << "format = ssmq-checkpoint-v1\n";
  mf << "seed = " << ck.seed << "\n";
  const Hyper& hy = ck.model.hyper;
  mf << "hyper.n_state = " << hy.n_state << "\n";
  mf << "hyper.h = " << hy.h << "\n";
  mf << "hyper.n_layer = " << hy.n_layer << "\n";
  mf << "hyper.n_in = " << hy.n_in << "\n";
  mf << "hyper.n_out = " << hy.n_out << "\n";
  mf << "hyper.fixed_b = " << (hy.fixed_b ? 1 : 0) << "\n";
  mf << "quant.A = " << ck.quant.r_a << "\n";
  mf << "quant.B = " << ck.quant.r_b << "\n";
  mf << "quant.C = " << ck.quant.r_c << "\n";
  mf << "quant.dt = " << ck.quant.r_dt << "\n";
  mf << "quant.state = " << ck.quant.r_state << "\n";
  mf << "quant.act = " << ck.quant.r_act << "\n";
  mf << "quant.linear = " << ck.quant.r_linear << "\n";
  mf << "quant.coder = " << ck.quant.r_coder << "\n";
  mf << "quant.state_mode = " << state_mode_name(ck.state_mode) << "\n";
  for (std::size_t li = 0; li < ck.model.layers.size(); ++li)
    mf << "layers." << li << ".width = " << ck.model.layers[li].width() << "\n";
  mf << "tensor.count = " << tensors.size() << "\n";
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    char fname[32];
    std::snprintf(fname, sizeof fname, "t%04zu.bin", i);
    mf << "tensor." << i << ".name = " << tensors[i].name << "\n";
    mf << "tensor." << i << ".shape = " << tensors[i].rows << "x" << tensors[i].cols << "\n";
    mf << "tensor." << i << ".dtype = f64\n";
    mf << "tensor." << i << ".file = " << fname << "\n";
    write_f64_file(dir / fname, tensors[i].data);
  }
  write_text_file(dir / "manifest.txt", mf.str());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto kv = read_kv_file(dir / "manifest.txt");
  std::map<std::string, std::string> map(kv.begin(), kv.end());
  auto need = [&map, &dir](const std::string& key) -> const std::string& {
    auto it = map.find(key);
    if (it == map.end())
      throw config_error((dir / "manifest.txt").string() + ": missing key " + key);
    return it->second;
  };
  auto need_int = [&need](const std::string& key) { return std::stoll(need(key)); };
  if (need("format") != "ssmq-checkpoint-v1")
    throw config_error(dir.string() + ": unknown checkpoint format");

  Checkpoint ck;
  ck.seed = std::stoull(need("seed"));
  Hyper hy;
  hy.n_state = int(need_int("hyper.n_state"));
  hy.h = int(need_int("hyper.h"));
  hy.n_layer = int(need_int("hyper.n_layer"));
  hy.n_in = int(need_int("hyper.n_in"));
  hy.n_out = int(need_int("hyper.n_out"));
  hy.fixed_b = need_int("hyper.fixed_b") != 0;
  ck.quant.r_a = int(need_int("quant.A"));
  ck.quant.r_b = int(need_int("quant.B"));
  ck.quant.r_c = int(need_int("quant.C"));
  ck.quant.r_dt = int(need_int("quant.dt"));
  ck.quant.r_state = int(need_int("quant.state"));
  ck.quant.r_act = int(need_int("quant.act"));
  ck.quant.r_linear = int(need_int("quant.linear"));
  ck.quant.r_coder = int(need_int("quant.coder"));
  ck.state_mode = parse_state_mode(need("quant.state_mode"));

  std::map<std::string, detail::TensorRef> tensors;
  const std::size_t count = std::size_t(need_int("tensor.count"));
  for (std::size_t i = 0; i < count; ++i) {
    const std::string p = "tensor." + std::to_string(i) + ".";
    detail::TensorRef t;
    t.name = need(p + "name");
    const std::string shape = need(p + "shape");
    const auto x = shape.find('x');
    if (x == std::string::npos) throw config_error("bad tensor shape: " + shape);
    t.rows = std::stoull(shape.substr(0, x));
    t.cols = std::stoull(shape.substr(x + 1));
    if (need(p + "dtype") != "f64") throw config_error("unsupported dtype for " + t.name);
    t.data = read_f64_file(dir / need(p + "file"), t.rows * t.cols);
    tensors.emplace(t.name, std::move(t));
  }
  auto tensor = [&tensors, &dir](const std::string& name) -> detail::TensorRef& {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw config_error(dir.string() + ": checkpoint is missing tensor " + name);
    return it->second;
  };
  auto opt_tensor = [&tensors](const std::string& name) -> detail::TensorRef* {
    auto it = tensors.find(name);
    return it == tensors.end() ? nullptr : &it->second;
  };
  auto as_matrix = [](const detail::TensorRef& t) {
    Matrix w(t.rows, t.cols);
    w.data = t.data;
    return w;
  };

  ModelParams m;
  m.hyper = hy;
  m.w_enc = as_matrix(tensor("enc.w"));
  m.b_enc = tensor("enc.b").data;
  m.layers.resize(hy.n_layer);
  for (int li = 0; li < hy.n_layer; ++li) {
    LayerParams& layer = m.layers[li];
    const std::string p = "layers." + std::to_string(li) + ".";
    const std::size_t w = std::stoull(need(p + "width"));
    const std::size_t n = std::size_t(hy.n_state);
    layer.kernels.resize(w);
    layer.kernel_channel.resize(w);
    auto bank = [&](const std::string& name, auto field) {
      const detail::TensorRef& t = tensor(p + name);
      if (t.rows != w || t.cols != n)
        throw config_error("tensor " + t.name + " has unexpected shape");
      for (std::size_t k = 0; k < w; ++k) {
        (layer.kernels[k].*field).resize(n);
        for (std::size_t i = 0; i < n; ++i)
          (layer.kernels[k].*field)[i] = t.data[k * n + i];
      }
    };
    bank("rho", &KernelWeights::rho);
    bank("theta", &KernelWeights::theta);
    bank("b_re", &KernelWeights::b_re);
    bank("b_im", &KernelWeights::b_im);
    bank("c_re", &KernelWeights::c_re);
    bank("c_im", &KernelWeights::c_im);
    const auto& logdt = tensor(p + "log_dt").data;
    const auto& dvals = tensor(p + "d").data;
    const auto& chans = tensor(p + "kernel_channel").data;
    for (std::size_t k = 0; k < w; ++k) {
      layer.kernels[k].log_dt = logdt[k];
      layer.kernels[k].d = dvals[k];
      layer.kernel_channel[k] = int(chans[k]);
    }
    layer.w_mix = as_matrix(tensor(p + "mix.w"));
    layer.b_mix = tensor(p + "mix.b").data;
    layer.ln_gamma = tensor(p + "ln.gamma").data;
    layer.ln_beta = tensor(p + "ln.beta").data;
    if (auto* t = opt_tensor(p + "mask.a")) layer.mask_a = as_matrix(*t);
    if (auto* t = opt_tensor(p + "mask.b")) layer.mask_b = as_matrix(*t);
    if (auto* t = opt_tensor(p + "mask.c")) layer.mask_c = as_matrix(*t);
    if (auto* t = opt_tensor(p + "mask.mix")) layer.mask_mix = as_matrix(*t);
  }
  m.w_dec = as_matrix(tensor("dec.w"));
  m.b_dec = tensor("dec.b").data;
  ck.model = std::move(m);
  return ck;
}

}  // namespace ssmq
