#pragma once
// Post-training pruning. Structural pruning deletes whole kernels (greedy,
// globally lowest importance first, re-checking accuracy after each removal
// against a drop budget); unstructured pruning zeroes the smallest-magnitude
// fraction of discrete kernel entries or mixing weights per layer via masks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "ssmq/errors.hpp"
#include "ssmq/model.hpp"
#include "ssmq/trainer.hpp"

namespace ssmq {

// Importance of a kernel = mean |output| over the calibration batch.
inline std::vector<std::vector<double>> rank_kernels(const ModelParams& m,
                                                     const Dataset& calib,
                                                     const QuantSpec* quant = nullptr) {
  if (calib.samples.empty()) throw config_error("rank_kernels: empty calibration set");
  std::vector<std::vector<double>> scores(m.layers.size());
  for (std::size_t li = 0; li < m.layers.size(); ++li)
    scores[li].assign(m.layers[li].width(), 0.0);
  std::size_t steps = 0;
  for (const auto& s : calib.samples) {
    Activations trace;
    ForwardOptions fo;
    fo.quant = quant;
    fo.trace = &trace;
    forward(m, s.u, fo);
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
      const Matrix& y = trace.kernel_outputs[li];
      for (std::size_t t = 0; t < y.rows; ++t)
        for (std::size_t k = 0; k < y.cols; ++k) scores[li][k] += std::fabs(y.at(t, k));
    }
    steps += s.u.rows;
  }
  for (auto& layer : scores)
    for (auto& v : layer) v /= double(steps);
  return scores;
}

namespace detail {

inline void erase_matrix_col(Matrix& w, std::size_t col) {
  Matrix out(w.rows, w.cols - 1);
  for (std::size_t r = 0; r < w.rows; ++r)
    for (std::size_t c = 0, o = 0; c < w.cols; ++c)
      if (c != col) out.at(r, o++) = w.at(r, c);
  w = out;
}

inline void erase_matrix_row(Matrix& w, std::size_t row) {
  Matrix out(w.rows - 1, w.cols);
  for (std::size_t r = 0, o = 0; r < w.rows; ++r) {
    if (r == row) continue;
    for (std::size_t c = 0; c < w.cols; ++c) out.at(o, c) = w.at(r, c);
    ++o;
  }
  w = out;
}

}  // namespace detail

inline void erase_kernel(ModelParams& m, std::size_t layer_index, std::size_t k) {
  LayerParams& layer = m.layers[layer_index];
  layer.kernels.erase(layer.kernels.begin() + std::ptrdiff_t(k));
  layer.kernel_channel.erase(layer.kernel_channel.begin() + std::ptrdiff_t(k));
  detail::erase_matrix_col(layer.w_mix, k);
  if (!layer.mask_a.data.empty()) detail::erase_matrix_row(layer.mask_a, k);
  if (!layer.mask_b.data.empty()) detail::erase_matrix_row(layer.mask_b, k);
  if (!layer.mask_c.data.empty()) detail::erase_matrix_row(layer.mask_c, k);
  if (!layer.mask_mix.data.empty()) detail::erase_matrix_col(layer.mask_mix, k);
}

// Masked twin of a structural removal: zero the kernel's discrete tensors and
// its mixing column. Used by consistency checks.
inline void mask_kernel(ModelParams& m, std::size_t layer_index, std::size_t k) {
  LayerParams& layer = m.layers[layer_index];
  const std::size_t N = std::size_t(m.hyper.n_state);
  auto ensure = [&](Matrix& mask, std::size_t rows, std::size_t cols) {
    if (mask.data.empty()) {
      mask = Matrix(rows, cols);
      mask.data.assign(rows * cols, 1.0);
    }
  };
  ensure(layer.mask_a, layer.width(), N);
  ensure(layer.mask_b, layer.width(), N);
  ensure(layer.mask_c, layer.width(), N);
  ensure(layer.mask_mix, std::size_t(m.hyper.h), layer.width());
  for (std::size_t i = 0; i < N; ++i) {
    layer.mask_a.at(k, i) = 0.0;
    layer.mask_b.at(k, i) = 0.0;
    layer.mask_c.at(k, i) = 0.0;
  }
  for (std::size_t j = 0; j < layer.mask_mix.rows; ++j) layer.mask_mix.at(j, k) = 0.0;
}

struct StructuralPruneResult {
  ModelParams model;
  std::vector<std::size_t> kernels_before;  // per layer
  std::vector<std::size_t> kernels_pruned;  // per layer
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
};

// budget is the tolerated accuracy drop in points (e.g. 1.0 = one percent).
inline StructuralPruneResult prune_structural(const ModelParams& m, double budget_points,
                                              const Dataset& eval_set,
                                              const EvalOptions& eval_opt,
                                              const Dataset& calib) {
  if (budget_points < 0) throw config_error("prune_structural: budget must be >= 0");
  StructuralPruneResult res;
  res.model = m;
  for (const auto& layer : m.layers) {
    res.kernels_before.push_back(layer.width());
    res.kernels_pruned.push_back(0);
  }
  res.accuracy_before = evaluate(m, eval_set, eval_opt).accuracy;
  res.accuracy_after = res.accuracy_before;
  const double floor_acc = res.accuracy_before - budget_points / 100.0;

  const auto scores = rank_kernels(m, calib, &eval_opt.quant);
  struct Candidate {
    double score;
    std::size_t layer, kernel;
  };
  std::vector<Candidate> order;
  for (std::size_t li = 0; li < scores.size(); ++li)
    for (std::size_t k = 0; k < scores[li].size(); ++k)
      order.push_back({scores[li][k], li, k});
  std::stable_sort(order.begin(), order.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score < b.score; });

  // Remaining index of each original kernel; removals shift later ones down.
  std::vector<std::vector<std::ptrdiff_t>> pos(scores.size());
  for (std::size_t li = 0; li < scores.size(); ++li) {
    pos[li].resize(scores[li].size());
    std::iota(pos[li].begin(), pos[li].end(), 0);
  }

  for (const Candidate& c : order) {
    if (res.model.layers[c.layer].width() <= 1) continue;  // keep layers non-empty
    ModelParams trial = res.model;
    erase_kernel(trial, c.layer, std::size_t(pos[c.layer][c.kernel]));
    const double acc = evaluate(trial, eval_set, eval_opt).accuracy;
    if (acc < floor_acc) break;  // next removal would exceed the budget
    res.model = std::move(trial);
    res.accuracy_after = acc;
    ++res.kernels_pruned[c.layer];
    for (std::size_t k = 0; k < pos[c.layer].size(); ++k)
      if (pos[c.layer][k] > pos[c.layer][c.kernel]) --pos[c.layer][k];
    pos[c.layer][c.kernel] = -1;
  }
  return res;
}

enum class PruneScope { kKernel, kLinear };

// Zero the smallest-magnitude `fraction` of elements in scope, per layer.
// Kernel scope pools the discrete abar/bbar/cbar magnitudes of a layer;
// linear scope ranks the mixing weights. Already-masked entries rank first.
inline ModelParams prune_unstructured(const ModelParams& m, double fraction,
                                      PruneScope scope) {
  if (fraction < 0.0 || fraction > 1.0)
    throw config_error("prune_unstructured: fraction must be in [0, 1]");
  ModelParams out = m;
  for (auto& layer : out.layers) {
    const std::size_t width = layer.width();
    const std::size_t N = width ? layer.kernels[0].rho.size() : 0;
    if (scope == PruneScope::kKernel) {
      auto ensure = [&](Matrix& mask) {
        if (mask.data.empty()) {
          mask = Matrix(width, N);
          mask.data.assign(width * N, 1.0);
        }
      };
      ensure(layer.mask_a);
      ensure(layer.mask_b);
      ensure(layer.mask_c);
      const auto bank = effective_kernels(layer, nullptr);
      struct Entry {
        double mag;
        int tensor;  // 0=a 1=b 2=c
        std::size_t k, i;
      };
      std::vector<Entry> entries;
      for (std::size_t k = 0; k < width; ++k)
        for (std::size_t i = 0; i < N; ++i) {
          entries.push_back({std::abs(bank[k].abar[i]), 0, k, i});
          entries.push_back({std::abs(bank[k].bbar[i]), 1, k, i});
          entries.push_back({std::abs(bank[k].cbar[i]), 2, k, i});
        }
      const std::size_t cut = std::min(
          entries.size(), std::size_t(std::llround(fraction * double(entries.size()))));
      std::stable_sort(entries.begin(), entries.end(),
                       [](const Entry& a, const Entry& b) { return a.mag < b.mag; });
      for (std::size_t e = 0; e < cut; ++e) {
        Matrix& mask = entries[e].tensor == 0   ? layer.mask_a
                       : entries[e].tensor == 1 ? layer.mask_b
                                                : layer.mask_c;
        mask.at(entries[e].k, entries[e].i) = 0.0;
      }
    } else {
      if (layer.mask_mix.data.empty()) {
        layer.mask_mix = Matrix(layer.w_mix.rows, layer.w_mix.cols);
        layer.mask_mix.data.assign(layer.w_mix.data.size(), 1.0);
      }
      std::vector<std::size_t> idx(layer.w_mix.data.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(layer.w_mix.data[a] * layer.mask_mix.data[a]) <
               std::fabs(layer.w_mix.data[b] * layer.mask_mix.data[b]);
      });
      const std::size_t cut =
          std::min(idx.size(), std::size_t(std::llround(fraction * double(idx.size()))));
      for (std::size_t e = 0; e < cut; ++e) layer.mask_mix.data[idx[e]] = 0.0;
    }
  }
  return out;
}

struct PruneLayerReport {
  std::size_t layer = 0;
  std::size_t kernels_total = 0, kernels_pruned = 0;
  double structural_fraction = 0.0;
  double unstructured_kernel_fraction = 0.0;
  double linear_fraction = 0.0;
};

inline std::vector<PruneLayerReport> prune_layer_reports(
    const std::vector<std::size_t>& kernels_before, const ModelParams& after) {
  std::vector<PruneLayerReport> rows;
  for (std::size_t li = 0; li < after.layers.size(); ++li) {
    const LayerParams& layer = after.layers[li];
    PruneLayerReport r;
    r.layer = li;
    r.kernels_total = kernels_before[li];
    r.kernels_pruned = kernels_before[li] - layer.width();
    r.structural_fraction =
        r.kernels_total ? double(r.kernels_pruned) / double(r.kernels_total) : 0.0;
    auto zero_fraction = [](const Matrix& a, const Matrix& b, const Matrix& c) {
      std::size_t zeros = 0, total = 0;
      for (const Matrix* m : {&a, &b, &c}) {
        for (double v : m->data) {
          total += 1;
          if (v == 0.0) ++zeros;
        }
      }
      return total ? double(zeros) / double(total) : 0.0;
    };
    r.unstructured_kernel_fraction = zero_fraction(layer.mask_a, layer.mask_b, layer.mask_c);
    if (!layer.mask_mix.data.empty()) {
      std::size_t zeros = 0;
      for (double v : layer.mask_mix.data)
        if (v == 0.0) ++zeros;
      r.linear_fraction = double(zeros) / double(layer.mask_mix.data.size());
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace ssmq
