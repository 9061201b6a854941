#pragma once
// Flat key = value experiment configuration with section-prefixed keys
// (model. / train. / quant. / noise. / data. / out.). Unknown keys are
// rejected by name; the generated template lists every key with its default,
// and parsing the template reproduces the default configuration.

#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssmq/checkpoint.hpp"
#include "ssmq/errors.hpp"
#include "ssmq/io.hpp"
#include "ssmq/model.hpp"
#include "ssmq/quantizer.hpp"
#include "ssmq/trainer.hpp"

namespace ssmq {

struct DataConfig {
  std::string task = "delayed-recall";  // delayed-recall | two-tone | raw
  std::size_t n_train = 256;
  std::size_t n_val = 64;
  std::size_t n_test = 64;
  std::size_t length = 128;
  std::size_t delay = 64;   // delayed-recall
  double f0 = 0.05;         // two-tone, cycles/step
  double f1 = 0.08;
  double snr_db = 10.0;
  std::uint64_t seed = 7;
  std::string dir;            // raw: directory containing manifest.csv
  double train_frac = 0.6;    // raw only; generated tasks use explicit counts
  double val_frac = 0.2;
};

struct ExperimentConfig {
  Hyper hyper;
  std::uint64_t init_seed = 1;
  int epochs = 20;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t train_seed = 1;
  QuantSpec quant;
  StateQuantMode state_mode = StateQuantMode::kIndirectConv;
  NoiseSpec noise;
  DataConfig data;
  std::string out_dir = "out";
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error(key + ": expected true/false, got '" + v + "'");
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error(key + ": expected an integer, got '" + v + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error(key + ": expected a number, got '" + v + "'");
  }
}

inline int parse_bits(const std::string& key, const std::string& v) {
  const long long x = parse_int(key, v);
  if (x < 0 || x > 16)
    throw config_error(key + ": bit width must be 0 (off) or 1..16, got " + v);
  return int(x);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

}  // namespace detail

inline std::string noise_when_name(NoiseSpec::When w) {
  return w == NoiseSpec::When::kInferenceOnly ? "inference" : "train+inference";
}

inline NoiseSpec::When parse_noise_when(const std::string& v) {
  if (v == "inference") return NoiseSpec::When::kInferenceOnly;
  if (v == "train+inference") return NoiseSpec::When::kTrainingAndInference;
  throw config_error("noise.when: expected inference or train+inference, got '" + v + "'");
}

inline std::string noise_targets_name(const NoiseSpec& n) {
  std::vector<std::string> parts;
  if (n.target_abar) parts.push_back("abar");
  if (n.target_bbar) parts.push_back("bbar");
  if (n.target_cbar) parts.push_back("cbar");
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out.empty() ? "none" : out;
}

inline ExperimentConfig parse_config_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  for (const auto& [key, value] : pairs) {
    if (!seen.insert(key).second) throw config_error("duplicate config key: " + key);
    const std::string& v = value;
    using detail::parse_bits;
    using detail::parse_bool;
    using detail::parse_int;
    using detail::parse_real;
    if (key == "model.n_state") cfg.hyper.n_state = int(parse_int(key, v));
    else if (key == "model.h") cfg.hyper.h = int(parse_int(key, v));
    else if (key == "model.n_layer") cfg.hyper.n_layer = int(parse_int(key, v));
    else if (key == "model.n_in") cfg.hyper.n_in = int(parse_int(key, v));
    else if (key == "model.n_out") cfg.hyper.n_out = int(parse_int(key, v));
    else if (key == "model.fixed_b") cfg.hyper.fixed_b = parse_bool(key, v);
    else if (key == "model.init_seed") cfg.init_seed = std::uint64_t(parse_int(key, v));
    else if (key == "train.epochs") cfg.epochs = int(parse_int(key, v));
    else if (key == "train.batch_size") cfg.batch_size = std::size_t(parse_int(key, v));
    else if (key == "train.lr") cfg.lr = parse_real(key, v);
    else if (key == "train.seed") cfg.train_seed = std::uint64_t(parse_int(key, v));
    else if (key == "quant.a") cfg.quant.r_a = parse_bits(key, v);
    else if (key == "quant.b") cfg.quant.r_b = parse_bits(key, v);
    else if (key == "quant.c") cfg.quant.r_c = parse_bits(key, v);
    else if (key == "quant.dt") cfg.quant.r_dt = parse_bits(key, v);
    else if (key == "quant.state") cfg.quant.r_state = parse_bits(key, v);
    else if (key == "quant.act") cfg.quant.r_act = parse_bits(key, v);
    else if (key == "quant.linear") cfg.quant.r_linear = parse_bits(key, v);
    else if (key == "quant.coder") cfg.quant.r_coder = parse_bits(key, v);
    else if (key == "quant.state_mode") cfg.state_mode = parse_state_mode(v);
    else if (key == "noise.sigma") cfg.noise.sigma_rel = parse_real(key, v);
    else if (key == "noise.when") cfg.noise.when = parse_noise_when(v);
    else if (key == "noise.targets") {
      cfg.noise.target_abar = cfg.noise.target_bbar = cfg.noise.target_cbar = false;
      if (v != "none")
        for (const auto& t : detail::split_list(v)) {
          if (t == "abar") cfg.noise.target_abar = true;
          else if (t == "bbar") cfg.noise.target_bbar = true;
          else if (t == "cbar") cfg.noise.target_cbar = true;
          else throw config_error("noise.targets: unknown target '" + t + "'");
        }
    } else if (key == "data.task") {
      if (v != "delayed-recall" && v != "two-tone" && v != "raw")
        throw config_error("data.task: expected delayed-recall, two-tone or raw, got '" + v + "'");
      cfg.data.task = v;
    } else if (key == "data.n_train") cfg.data.n_train = std::size_t(parse_int(key, v));
    else if (key == "data.n_val") cfg.data.n_val = std::size_t(parse_int(key, v));
    else if (key == "data.n_test") cfg.data.n_test = std::size_t(parse_int(key, v));
    else if (key == "data.length") cfg.data.length = std::size_t(parse_int(key, v));
    else if (key == "data.delay") cfg.data.delay = std::size_t(parse_int(key, v));
    else if (key == "data.f0") cfg.data.f0 = parse_real(key, v);
    else if (key == "data.f1") cfg.data.f1 = parse_real(key, v);
    else if (key == "data.snr_db") cfg.data.snr_db = parse_real(key, v);
    else if (key == "data.seed") cfg.data.seed = std::uint64_t(parse_int(key, v));
    else if (key == "data.dir") cfg.data.dir = v;
    else if (key == "data.train_frac") cfg.data.train_frac = parse_real(key, v);
    else if (key == "data.val_frac") cfg.data.val_frac = parse_real(key, v);
    else if (key == "out.dir") cfg.out_dir = v;
    else throw config_error("unknown config key: " + key);
  }

  if (cfg.hyper.n_state < 1 || cfg.hyper.h < 1 || cfg.hyper.n_layer < 1 ||
      cfg.hyper.n_in < 1 || cfg.hyper.n_out < 1)
    throw config_error("model: all dimensions must be >= 1");
  if (cfg.epochs < 1) throw config_error("train.epochs must be >= 1");
  if (cfg.batch_size < 1) throw config_error("train.batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw config_error("train.lr must be > 0");
  if (cfg.noise.sigma_rel < 0.0) throw config_error("noise.sigma must be >= 0");
  if (cfg.state_mode == StateQuantMode::kIndirectConv && cfg.quant.r_state % 2 != 0)
    throw config_error(
        "quant.state must be even in indirect-conv mode (split between kernel bank and input)");
  if (cfg.data.length < 1) throw config_error("data.length must be >= 1");
  if (cfg.data.task == "delayed-recall" && cfg.data.delay >= cfg.data.length)
    throw config_error("data.delay must be < data.length");
  if (cfg.data.task == "raw" && cfg.data.dir.empty())
    throw config_error("data.dir is required when data.task = raw");
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(lineno) +
                         ": malformed (expected key = value): " + t);
    pairs.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return parse_config_pairs(pairs);
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  return parse_config_pairs(read_kv_file(path));
}

inline std::string serialize_config(const ExperimentConfig& c) {
  std::string s;
  auto kv = [&s](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
  auto num = [](double v) { return format_double(v, "%.17g"); };
  s += "# model\n";
  kv("model.n_state", std::to_string(c.hyper.n_state));
  kv("model.h", std::to_string(c.hyper.h));
  kv("model.n_layer", std::to_string(c.hyper.n_layer));
  kv("model.n_in", std::to_string(c.hyper.n_in));
  kv("model.n_out", std::to_string(c.hyper.n_out));
  kv("model.fixed_b", c.hyper.fixed_b ? "true" : "false");
  kv("model.init_seed", std::to_string(c.init_seed));
  s += "\n# training\n";
  kv("train.epochs", std::to_string(c.epochs));
  kv("train.batch_size", std::to_string(c.batch_size));
  kv("train.lr", num(c.lr));
  kv("train.seed", std::to_string(c.train_seed));
  s += "\n# quantization (bit widths; 0 = off)\n";
  kv("quant.a", std::to_string(c.quant.r_a));
  kv("quant.b", std::to_string(c.quant.r_b));
  kv("quant.c", std::to_string(c.quant.r_c));
  kv("quant.dt", std::to_string(c.quant.r_dt));
  kv("quant.state", std::to_string(c.quant.r_state));
  kv("quant.act", std::to_string(c.quant.r_act));
  kv("quant.linear", std::to_string(c.quant.r_linear));
  kv("quant.coder", std::to_string(c.quant.r_coder));
  kv("quant.state_mode", state_mode_name(c.state_mode));
  s += "\n# weight noise\n";
  kv("noise.sigma", num(c.noise.sigma_rel));
  kv("noise.when", noise_when_name(c.noise.when));
  kv("noise.targets", noise_targets_name(c.noise));
  s += "\n# data\n";
  kv("data.task", c.data.task);
  kv("data.n_train", std::to_string(c.data.n_train));
  kv("data.n_val", std::to_string(c.data.n_val));
  kv("data.n_test", std::to_string(c.data.n_test));
  kv("data.length", std::to_string(c.data.length));
  kv("data.delay", std::to_string(c.data.delay));
  kv("data.f0", num(c.data.f0));
  kv("data.f1", num(c.data.f1));
  kv("data.snr_db", num(c.data.snr_db));
  kv("data.seed", std::to_string(c.data.seed));
  kv("data.dir", c.data.dir);
  kv("data.train_frac", num(c.data.train_frac));
  kv("data.val_frac", num(c.data.val_frac));
  s += "\n# output\n";
  kv("out.dir", c.out_dir);
  return s;
}

inline std::string config_template() { return serialize_config(ExperimentConfig{}); }

}  // namespace ssmq
