#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>

#include "ssmq/datasets.hpp"
#include "ssmq/hw_metrics.hpp"
#include "ssmq/pruner.hpp"

using namespace ssmq;
using Catch::Approx;

namespace {

MetricsShape fixture_shape() {
  Hyper hy;
  hy.n_state = 14;
  hy.h = 3;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 2;
  return shape_of(hy);
}

QuantSpec fixture_spec() {
  QuantSpec q;
  q.r_a = q.r_b = q.r_c = q.r_dt = 4;
  q.r_state = q.r_act = 8;
  q.r_linear = q.r_coder = 8;
  return q;
}

}  // namespace

TEST_CASE("cost metrics reproduce hand-computed fixture values") {
  const MetricsReport r = compute_metrics(fixture_shape(), fixture_spec());
  // 4 complex * 14 states * 4b weights * 8b acts * 3 kernels
  CHECK(r.ace_ax == 5376);
  CHECK(r.ace_bu == 5376);
  CHECK(r.ace_cx == 5376);
  // 2 reals * 14 * 4b * 3
  CHECK(r.mem_a == 336);
  CHECK(r.mem_b == 336);
  CHECK(r.mem_c == 168);  // stored as one real row per state
  // (4 * 14 * 8b state + 8b act) * 3 kernels
  CHECK(r.adc_kernel == 1368);
  CHECK(r.ace_linear == 3 * 3 * 8ull * 8ull);
  CHECK(r.ace_coder == 3 * (1 + 2) * 8ull * 8ull);
  CHECK(r.adc_mixing == 8 * 3 * 1ull);
  CHECK(r.adc_coder == 8 * (3 + 2ull));
  CHECK(r.ace_total == r.ace_ax + r.ace_bu + r.ace_cx + r.ace_linear + r.ace_coder);
  CHECK(r.mem_total == r.mem_a + r.mem_b + r.mem_c + r.mem_linear + r.mem_coder + r.mem_dt);
  CHECK(r.adc_total == r.adc_kernel + r.adc_mixing + r.adc_coder);
  CHECK(r.mem_dt == 0);
}

TEST_CASE("off groups resolve to the reference width") {
  QuantSpec q;  // everything off
  MetricsOptions opt;
  const MetricsReport ref = compute_metrics(fixture_shape(), q, opt);
  CHECK(ref.r_a == 32);
  CHECK(ref.ace_ax == 4ull * 14 * 32 * 32 * 3);

  opt.reference_width = 0;  // off groups now cost nothing
  const QuantSpec only_a = [] {
    QuantSpec s;
    s.r_a = 4;
    s.r_act = 8;
    return s;
  }();
  const MetricsReport r = compute_metrics(fixture_shape(), only_a, opt);
  CHECK(r.ace_ax == 5376);
  CHECK(r.ace_bu == 0);
  CHECK(r.ace_cx == 0);
  CHECK(r.ace_linear == 0);
  CHECK(r.ace_coder == 0);
  CHECK(r.mem_b == 0);
  CHECK(r.mem_linear == 0);
  CHECK(r.adc_kernel == 8ull * 3);  // state headroom gone, act conversions remain
}

TEST_CASE("optional cost terms: dt memory, alternative coder, fixed b") {
  MetricsOptions opt;
  opt.include_dt = true;
  const MetricsReport r = compute_metrics(fixture_shape(), fixture_spec(), opt);
  CHECK(r.mem_dt == 14ull * 4 * 3);
  CHECK(r.mem_total == r.mem_a + r.mem_b + r.mem_c + r.mem_linear + r.mem_coder + r.mem_dt);

  MetricsOptions alt;
  alt.coder_alt = true;
  const MetricsReport ra = compute_metrics(fixture_shape(), fixture_spec(), alt);
  CHECK(ra.ace_coder == 3ull * 1 + 2ull * 8 * 8);
  CHECK(ra.mem_coder == 3ull * 1 + 2ull * 8);

  MetricsShape fb = fixture_shape();
  fb.fixed_b = true;
  const MetricsReport rb = compute_metrics(fb, fixture_spec());
  CHECK(rb.mem_b == 0);
  CHECK(rb.ace_bu == 5376);  // the multiply still happens
}

TEST_CASE("metrics grow monotonically in every bit width") {
  Rng rng(404);
  const MetricsShape shape = fixture_shape();
  constexpr int QuantSpec::* fields[] = {&QuantSpec::r_a,     &QuantSpec::r_b,
                                         &QuantSpec::r_c,     &QuantSpec::r_dt,
                                         &QuantSpec::r_state, &QuantSpec::r_act,
                                         &QuantSpec::r_linear, &QuantSpec::r_coder};
  for (int trial = 0; trial < 50; ++trial) {
    QuantSpec q;
    for (auto f : fields) q.*f = 1 + int(rng() % 16);
    const MetricsReport base = compute_metrics(shape, q);
    for (auto f : fields) {
      QuantSpec up = q;
      up.*f += 1;
      const MetricsReport bumped = compute_metrics(shape, up);
      CHECK(bumped.ace_total >= base.ace_total);
      CHECK(bumped.mem_total >= base.mem_total);
      CHECK(bumped.adc_total >= base.adc_total);
    }
  }
}

TEST_CASE("pruned model shapes report proportionally smaller kernel costs") {
  Hyper hy;
  hy.n_state = 6;
  hy.h = 4;
  hy.n_layer = 2;
  hy.n_in = 1;
  hy.n_out = 2;
  ModelParams m = init_model(hy, 17);
  const MetricsReport full = compute_metrics(shape_of(m), fixture_spec());
  erase_kernel(m, 0, 2);
  erase_kernel(m, 1, 0);
  const MetricsShape s = shape_of(m);
  REQUIRE(s.widths.size() == 2);
  CHECK(s.widths[0] == 3);
  CHECK(s.widths[1] == 3);
  const MetricsReport pruned = compute_metrics(s, fixture_spec());
  CHECK(pruned.ace_ax * 8 == full.ace_ax * 6);  // 6 of 8 kernels remain
  CHECK(pruned.adc_kernel * 8 == full.adc_kernel * 6);
  CHECK(pruned.mem_a * 8 == full.mem_a * 6);
}

TEST_CASE("csv row matches the header column count") {
  const MetricsReport r = compute_metrics(fixture_shape(), fixture_spec());
  const auto row = metrics_csv_row(r);
  std::size_t commas = 0;
  for (char c : metrics_csv_header())
    if (c == ',') ++commas;
  CHECK(row.size() == commas + 1);
  const auto j = metrics_to_json(r);
  CHECK(j["ace"]["ax"] == 5376);
  CHECK(j["adc"]["total"] == r.adc_total);
}

TEST_CASE("kernel ranking scores silent kernels at zero") {
  Hyper hy;
  hy.n_state = 4;
  hy.h = 3;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 2;
  ModelParams m = init_model(hy, 23);
  for (std::size_t i = 0; i < m.layers[0].kernels[1].c_re.size(); ++i) {
    m.layers[0].kernels[1].c_re[i] = 0.0;
    m.layers[0].kernels[1].c_im[i] = 0.0;
  }
  m.layers[0].kernels[1].d = 0.0;
  const Dataset calib = gen_delayed_recall(4, 8, 2, 71);
  const auto scores = rank_kernels(m, calib);
  REQUIRE(scores.size() == 1);
  REQUIRE(scores[0].size() == 3);
  CHECK(scores[0][1] == 0.0);
  CHECK(scores[0][0] > 0.0);
  CHECK(scores[0][2] > 0.0);

  CHECK_THROWS_AS(rank_kernels(m, Dataset{}), config_error);
}

TEST_CASE("erasing a kernel equals masking it, in float") {
  Hyper hy;
  hy.n_state = 5;
  hy.h = 4;
  hy.n_layer = 2;
  hy.n_in = 1;
  hy.n_out = 2;
  const ModelParams base = init_model(hy, 29);
  const Dataset ds = gen_delayed_recall(6, 14, 3, 83);

  ModelParams erased = base;
  erase_kernel(erased, 0, 1);
  erase_kernel(erased, 1, 3);
  ModelParams masked = base;
  mask_kernel(masked, 0, 1);
  mask_kernel(masked, 1, 3);

  CHECK(erased.layers[0].width() == 3);
  CHECK(masked.layers[0].width() == 4);
  for (const auto& s : ds.samples) {
    const auto a = forward(erased, s.u);
    const auto b = forward(masked, s.u);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Approx(b[i]).margin(1e-10));
  }
}

TEST_CASE("unstructured pruning zeroes exactly the requested fraction") {
  Hyper hy;
  hy.n_state = 4;
  hy.h = 2;
  hy.n_layer = 2;
  hy.n_in = 1;
  hy.n_out = 2;
  const ModelParams m = init_model(hy, 31);

  const ModelParams half = prune_unstructured(m, 0.5, PruneScope::kKernel);
  for (const auto& layer : half.layers) {
    std::size_t zeros = 0, total = 0;
    for (const Matrix* mask : {&layer.mask_a, &layer.mask_b, &layer.mask_c}) {
      REQUIRE(!mask->data.empty());
      for (double v : mask->data) {
        total += 1;
        if (v == 0.0) ++zeros;
      }
    }
    CHECK(total == 2 * 4 * 3);  // width * N * three tensors
    CHECK(zeros == total / 2);
  }

  const ModelParams none = prune_unstructured(m, 0.0, PruneScope::kKernel);
  for (const auto& layer : none.layers)
    for (double v : layer.mask_a.data) CHECK(v == 1.0);

  const ModelParams lin = prune_unstructured(m, 0.25, PruneScope::kLinear);
  for (const auto& layer : lin.layers) {
    std::size_t zeros = 0;
    for (double v : layer.mask_mix.data)
      if (v == 0.0) ++zeros;
    CHECK(zeros == 1);  // llround(0.25 * 4)
  }

  CHECK_THROWS_AS(prune_unstructured(m, -0.1, PruneScope::kKernel), config_error);
  CHECK_THROWS_AS(prune_unstructured(m, 1.5, PruneScope::kLinear), config_error);
}

TEST_CASE("unstructured pruning removes the smallest magnitudes first") {
  Hyper hy;
  hy.n_state = 2;
  hy.h = 1;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 2;
  ModelParams m = init_model(hy, 37);
  LayerParams& layer = m.layers[0];
  // pin magnitudes so the kernel-scope cut lands on the two cbar entries
  layer.kernels[0].b_re = {1.0, 1.0};
  layer.kernels[0].b_im = {0.0, 0.0};
  layer.kernels[0].c_re = {1e-6, 2e-6};
  layer.kernels[0].c_im = {0.0, 0.0};

  const ModelParams cutc = prune_unstructured(m, 2.0 / 6.0, PruneScope::kKernel);
  CHECK(cutc.layers[0].mask_c.at(0, 0) == 0.0);
  CHECK(cutc.layers[0].mask_c.at(0, 1) == 0.0);
  CHECK(cutc.layers[0].mask_a.at(0, 0) == 1.0);
  CHECK(cutc.layers[0].mask_b.at(0, 0) == 1.0);
}

TEST_CASE("structural pruning respects its budget and keeps layers alive") {
  Hyper hy;
  hy.n_state = 4;
  hy.h = 4;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 2;
  const Dataset ds = gen_delayed_recall(24, 10, 2, 91);
  TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 8;
  tc.lr = 3e-3;
  tc.seed = 5;
  const ModelParams m = train_model(init_model(hy, 41), ds, ds, tc).model;

  EvalOptions ev;
  SECTION("an unlimited budget still leaves one kernel per layer") {
    const StructuralPruneResult r = prune_structural(m, 1000.0, ds, ev, ds);
    CHECK(r.model.layers[0].width() >= 1);
    CHECK(r.kernels_before[0] == 4);
    CHECK(r.kernels_pruned[0] <= 3);
    CHECK(r.kernels_pruned[0] == 4 - r.model.layers[0].width());
  }
  SECTION("a finite budget bounds the accuracy drop") {
    const StructuralPruneResult r = prune_structural(m, 2.0, ds, ev, ds);
    CHECK(r.accuracy_after >= r.accuracy_before - 2.0 / 100.0 - 1e-12);
    CHECK(r.model.layers[0].width() + r.kernels_pruned[0] == 4);
  }
  SECTION("negative budgets are rejected") {
    CHECK_THROWS_AS(prune_structural(m, -1.0, ds, ev, ds), config_error);
  }
}

TEST_CASE("layer reports expose structural and mask fractions") {
  Hyper hy;
  hy.n_state = 4;
  hy.h = 4;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 2;
  ModelParams m = init_model(hy, 43);
  const std::vector<std::size_t> before = {4};
  erase_kernel(m, 0, 0);
  m = prune_unstructured(m, 0.5, PruneScope::kKernel);
  m = prune_unstructured(m, 0.25, PruneScope::kLinear);

  const auto rows = prune_layer_reports(before, m);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].layer == 0);
  CHECK(rows[0].kernels_total == 4);
  CHECK(rows[0].kernels_pruned == 1);
  CHECK(rows[0].structural_fraction == Approx(0.25));
  CHECK(rows[0].unstructured_kernel_fraction == Approx(0.5));
  CHECK(rows[0].linear_fraction == Approx(0.25));
}
