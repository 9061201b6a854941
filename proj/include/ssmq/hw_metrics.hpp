#pragma once
// Hardware cost metrics in exact integer arithmetic: ACE (single-bit MAC
// equivalents), parameter memory bits, and ADC conversion bits. Bit widths
// set to 0 ("off") resolve to a float reference width. Per-layer kernel
// counts are honored so structurally pruned models report reduced costs.

#include <cstdint>
#include <string>
#include <vector>

#include "ssmq/model.hpp"
#include "ssmq/quantizer.hpp"

#include "json.hpp"

namespace ssmq {

struct MetricsOptions {
  std::uint64_t reference_width = 32;  // substitute for groups that are off
  bool include_dt = false;             // add N*r_dt per kernel to Mem
  bool coder_alt = false;              // alternative reading of the coder terms
};

struct MetricsShape {
  std::uint64_t n_state = 0, h = 0, n_layer = 0, n_in = 0, n_out = 0;
  std::vector<std::uint64_t> widths;  // kernels per layer
  bool fixed_b = false;
  bool complex_kernel = true;
};

inline MetricsShape shape_of(const Hyper& hy) {
  MetricsShape s;
  s.n_state = std::uint64_t(hy.n_state);
  s.h = std::uint64_t(hy.h);
  s.n_layer = std::uint64_t(hy.n_layer);
  s.n_in = std::uint64_t(hy.n_in);
  s.n_out = std::uint64_t(hy.n_out);
  s.widths.assign(std::size_t(hy.n_layer), std::uint64_t(hy.h));
  s.fixed_b = hy.fixed_b;
  return s;
}

inline MetricsShape shape_of(const ModelParams& m) {
  MetricsShape s = shape_of(m.hyper);
  s.widths.clear();
  for (const auto& layer : m.layers) s.widths.push_back(std::uint64_t(layer.width()));
  s.n_layer = std::uint64_t(m.layers.size());
  return s;
}

struct MetricsReport {
  // resolved bit widths (after the reference substitution)
  std::uint64_t r_a = 0, r_b = 0, r_c = 0, r_dt = 0, r_state = 0, r_act = 0,
                r_linear = 0, r_coder = 0;
  std::uint64_t ace_ax = 0, ace_bu = 0, ace_cx = 0, ace_linear = 0, ace_coder = 0,
                ace_total = 0;
  std::uint64_t mem_a = 0, mem_b = 0, mem_c = 0, mem_linear = 0, mem_coder = 0,
                mem_dt = 0, mem_total = 0;
  std::uint64_t adc_kernel = 0, adc_mixing = 0, adc_coder = 0, adc_total = 0;
  std::uint64_t c_ace = 4, c_mem = 2, c_adc = 4;  // complex expansion factors
  std::uint64_t reference_width = 32;
  bool fixed_b = false, include_dt = false, coder_alt = false;
};

inline MetricsReport compute_metrics(const MetricsShape& shape, const QuantSpec& spec,
                                     const MetricsOptions& opt = {}) {
  MetricsReport r;
  auto resolved = [&](int bits) {
    return bits > 0 ? std::uint64_t(bits) : opt.reference_width;
  };
  r.r_a = resolved(spec.r_a);
  r.r_b = resolved(spec.r_b);
  r.r_c = resolved(spec.r_c);
  r.r_dt = resolved(spec.r_dt);
  r.r_state = resolved(spec.r_state);
  r.r_act = resolved(spec.r_act);
  r.r_linear = resolved(spec.r_linear);
  r.r_coder = resolved(spec.r_coder);
  r.c_ace = shape.complex_kernel ? 4 : 1;
  r.c_mem = shape.complex_kernel ? 2 : 1;
  r.c_adc = shape.complex_kernel ? 4 : 1;
  r.reference_width = opt.reference_width;
  r.fixed_b = shape.fixed_b;
  r.include_dt = opt.include_dt;
  r.coder_alt = opt.coder_alt;

  const std::uint64_t N = shape.n_state, H = shape.h;
  std::uint64_t sum_w = 0, sum_hw = 0;  // total kernels; mixing MACs per step
  for (std::uint64_t w : shape.widths) {
    sum_w += w;
    sum_hw += H * w;
  }

  r.ace_ax = r.c_ace * N * r.r_a * r.r_act * sum_w;
  r.ace_bu = r.c_ace * N * r.r_b * r.r_act * sum_w;
  r.ace_cx = r.c_ace * N * r.r_c * r.r_act * sum_w;
  r.ace_linear = sum_hw * r.r_act * r.r_linear;
  r.ace_coder = opt.coder_alt ? H * shape.n_in + shape.n_out * r.r_act * r.r_coder
                              : H * (shape.n_in + shape.n_out) * r.r_act * r.r_coder;
  r.ace_total = r.ace_ax + r.ace_bu + r.ace_cx + r.ace_linear + r.ace_coder;

  r.mem_a = r.c_mem * N * r.r_a * sum_w;
  r.mem_b = shape.fixed_b ? 0 : r.c_mem * N * r.r_b * sum_w;
  r.mem_c = N * r.r_c * sum_w;
  r.mem_linear = sum_hw * r.r_linear;
  r.mem_coder = opt.coder_alt ? H * shape.n_in + shape.n_out * r.r_coder
                              : H * (shape.n_in + shape.n_out) * r.r_coder;
  r.mem_dt = opt.include_dt ? N * r.r_dt * sum_w : 0;
  r.mem_total = r.mem_a + r.mem_b + r.mem_c + r.mem_linear + r.mem_coder + r.mem_dt;

  r.adc_kernel = (r.c_adc * N * r.r_state + r.r_act) * sum_w;
  r.adc_mixing = r.r_act * H * shape.n_layer;
  r.adc_coder = r.r_act * (H + shape.n_out);
  r.adc_total = r.adc_kernel + r.adc_mixing + r.adc_coder;
  return r;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["ace"] = {{"ax", r.ace_ax},     {"bu", r.ace_bu},       {"cx", r.ace_cx},
              {"linear", r.ace_linear}, {"coder", r.ace_coder}, {"total", r.ace_total}};
  j["mem"] = {{"a", r.mem_a},           {"b", r.mem_b},         {"c", r.mem_c},
              {"linear", r.mem_linear}, {"coder", r.mem_coder}, {"dt", r.mem_dt},
              {"total", r.mem_total}};
  j["adc"] = {{"kernel", r.adc_kernel},
              {"mixing", r.adc_mixing},
              {"coder", r.adc_coder},
              {"total", r.adc_total}};
  j["assumptions"] = {{"c_ace", r.c_ace},
                      {"c_mem", r.c_mem},
                      {"c_adc", r.c_adc},
                      {"reference_width", r.reference_width},
                      {"fixed_b_zero_mem", r.fixed_b},
                      {"include_dt", r.include_dt},
                      {"coder_alt", r.coder_alt},
                      {"bits",
                       {{"a", r.r_a},
                        {"b", r.r_b},
                        {"c", r.r_c},
                        {"dt", r.r_dt},
                        {"state", r.r_state},
                        {"act", r.r_act},
                        {"linear", r.r_linear},
                        {"coder", r.r_coder}}}};
  return j;
}

inline std::string metrics_csv_header() {
  return "ace_ax,ace_bu,ace_cx,ace_linear,ace_coder,ace_total,"
         "mem_a,mem_b,mem_c,mem_linear,mem_coder,mem_dt,mem_total,"
         "adc_kernel,adc_mixing,adc_coder,adc_total";
}

inline std::vector<std::string> metrics_csv_row(const MetricsReport& r) {
  auto s = [](std::uint64_t v) { return std::to_string(v); };
  return {s(r.ace_ax),     s(r.ace_bu),     s(r.ace_cx),    s(r.ace_linear),
          s(r.ace_coder),  s(r.ace_total),  s(r.mem_a),     s(r.mem_b),
          s(r.mem_c),      s(r.mem_linear), s(r.mem_coder), s(r.mem_dt),
          s(r.mem_total),  s(r.adc_kernel), s(r.adc_mixing), s(r.adc_coder),
          s(r.adc_total)};
}

}  // namespace ssmq
