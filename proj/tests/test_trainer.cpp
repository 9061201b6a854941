#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include "ssmq/datasets.hpp"
#include "ssmq/io.hpp"
#include "ssmq/trainer.hpp"

using namespace ssmq;
using Catch::Approx;

TEST_CASE("cross entropy values by hand, argmax takes the first maximum") {
  CHECK(cross_entropy({0.0, std::log(9.0)}, 0) == Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(cross_entropy({1.0, 0.0}, 1) == Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-12));
  CHECK(argmax({1.0, 3.0, 3.0, 2.0}) == 1);
  CHECK(argmax({5.0}) == 0);
}

TEST_CASE("adam takes a bias-corrected signed step on the first update") {
  Hyper hy;
  hy.n_state = 2;
  hy.h = 1;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 1;
  ModelParams m = init_model(hy, 3);
  const double before = m.w_enc.data[0];

  std::map<std::string, std::vector<double>> grads;
  visit_params(m, [&](const ParamRef& p) { grads[p.name].assign(p.len, 0.0); });
  grads["enc.w"][0] = 2.5;  // only this coordinate moves

  AdamState st;
  ModelParams m2 = m;
  adam_update(m2, grads, st, 1e-2);
  // first step: m_hat = g, v_hat = g^2 -> update = lr * g/(|g| + eps') ~ lr * sign
  CHECK(m2.w_enc.data[0] == Approx(before - 1e-2).epsilon(1e-4));
  // untouched coordinates stay exactly
  CHECK(m2.b_enc[0] == m.b_enc[0]);
  CHECK(m2.w_dec.data[0] == m.w_dec.data[0]);

  std::map<std::string, std::vector<double>> missing = grads;
  missing.erase("dec.w");
  AdamState st2;
  CHECK_THROWS_AS(adam_update(m2, missing, st2, 1e-2), numerical_error);
}

namespace {

struct GradCheckSetup {
  ModelParams model;
  Dataset data;
  std::vector<const SequenceSample*> batch;
};

GradCheckSetup gradcheck_setup() {
  GradCheckSetup s;
  Hyper hy;
  hy.n_state = 3;
  hy.h = 2;
  hy.n_layer = 2;
  hy.n_in = 1;
  hy.n_out = 2;
  hy.fixed_b = false;
  s.data = gen_delayed_recall(6, 12, 4, 9);

  // a short float pre-train moves the loss off its flat random-init plateau so
  // finite differences see real curvature
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 6;
  tc.lr = 5e-3;
  tc.seed = 3;
  s.model = train_model(init_model(hy, 5), s.data, s.data, tc).model;
  for (std::size_t i = 0; i < 3; ++i) s.batch.push_back(&s.data.samples[i]);
  return s;
}

// group = tensor name with layer/kernel indices stripped, so every rho across
// all kernels lands in one bucket
std::string group_of(const std::string& name) {
  std::string tail = name.substr(name.rfind('.') + 1);
  if (name.find("mix.") != std::string::npos) tail = "mix." + tail;
  if (name.find("ln.") != std::string::npos) tail = "ln." + tail;
  if (name.compare(0, 4, "enc.") == 0 || name.compare(0, 4, "dec.") == 0)
    tail = name.substr(0, 4) + tail;
  return tail;
}

// Worst per-group relative L2 error between tape gradients and central finite
// differences of the (offset-frozen, noise-frozen) loss.
double worst_group_error(ModelParams& m, const std::vector<const SequenceSample*>& batch,
                         const QuantSpec& quant, const std::vector<NoiseOffsets>* noise) {
  SteFreeze freeze;
  Tape tape;
  const GraphOutputs g =
      build_loss_graph(tape, m, batch, quant, StateQuantMode::kIndirectConv, noise, &freeze);
  tape.backward(g.loss);
  const auto grads = collect_grads(tape, g, m);
  freeze.replay = true;

  auto loss_at = [&]() {
    freeze.cursor = 0;
    Tape t;
    const GraphOutputs o =
        build_loss_graph(t, m, batch, quant, StateQuantMode::kIndirectConv, noise, &freeze);
    return t.val(o.loss)[0];
  };

  std::map<std::string, double> num, den;
  visit_params(m, [&](const ParamRef& p) {
    const auto& ga = grads.at(p.name);
    const std::string grp = group_of(p.name);
    for (std::size_t i = 0; i < p.len; ++i) {
      const double keep = p.data[i];
      const double h = 1e-4 * std::max(1.0, std::fabs(keep));
      p.data[i] = keep + h;
      const double fp = loss_at();
      p.data[i] = keep - h;
      const double fm = loss_at();
      p.data[i] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      num[grp] += (ga[i] - fd) * (ga[i] - fd);
      den[grp] += std::max(fd * fd, ga[i] * ga[i]);
    }
  });
  double worst = 0.0;
  for (const auto& [grp, n2] : num)
    worst = std::max(worst, std::sqrt(n2) / std::max(1e-10, std::sqrt(den.at(grp))));
  return worst;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences per trainable group") {
  GradCheckSetup s = gradcheck_setup();

  SECTION("float") {
    CHECK(worst_group_error(s.model, s.batch, QuantSpec{}, nullptr) < 1e-4);
  }
  SECTION("float with frozen weight noise") {
    NoiseSpec ns;
    ns.sigma_rel = 0.02;
    ns.when = NoiseSpec::When::kTrainingAndInference;
    Rng rng(77);
    std::vector<NoiseOffsets> offsets;
    for (const auto& layer : s.model.layers)
      offsets.push_back(sample_noise_offsets(effective_kernels(layer, nullptr), ns, rng));
    CHECK(worst_group_error(s.model, s.batch, QuantSpec{}, &offsets) < 1e-4);
  }
  SECTION("quantization-aware at high width") {
    QuantSpec q;
    q.r_a = q.r_b = q.r_c = q.r_dt = q.r_act = q.r_linear = q.r_coder = 31;
    q.r_state = 30;
    CHECK(worst_group_error(s.model, s.batch, q, nullptr) < 1e-4);
  }
  SECTION("quantization-aware at 4 bits with frozen noise") {
    QuantSpec q;
    q.r_a = q.r_b = q.r_c = q.r_dt = q.r_act = q.r_linear = q.r_coder = 4;
    q.r_state = 8;
    NoiseSpec ns;
    ns.sigma_rel = 0.02;
    ns.when = NoiseSpec::When::kTrainingAndInference;
    Rng rng(77);
    std::vector<NoiseOffsets> offsets;
    QuantSpec bank_spec = q;
    for (const auto& layer : s.model.layers)
      offsets.push_back(sample_noise_offsets(effective_kernels(layer, &bank_spec), ns, rng));
    CHECK(worst_group_error(s.model, s.batch, q, &offsets) < 1e-4);
  }
}

TEST_CASE("training is deterministic and writes the documented log") {
  Hyper hy;
  hy.n_state = 4;
  hy.h = 2;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 2;
  const Dataset train = gen_delayed_recall(24, 16, 3, 11);
  const Dataset val = gen_delayed_recall(8, 16, 3, 12);

  const auto log1 = std::filesystem::temp_directory_path() /
                    ("ssmq_log1_" + std::to_string(std::rand()) + ".csv");
  const auto log2 = std::filesystem::temp_directory_path() /
                    ("ssmq_log2_" + std::to_string(std::rand()) + ".csv");
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 8;
  tc.lr = 2e-3;
  tc.seed = 21;
  tc.log_path = log1.string();
  const ModelParams init = init_model(hy, 2);
  const TrainResult r1 = train_model(init, train, val, tc);
  tc.log_path = log2.string();
  const TrainResult r2 = train_model(init, train, val, tc);

  REQUIRE(r1.history.size() == 5);
  for (std::size_t e = 0; e < 5; ++e) {
    CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
    CHECK(r1.history[e].val_acc == r2.history[e].val_acc);
  }
  CHECK(r1.best_epoch == r2.best_epoch);
  CHECK(r1.model.w_enc.data == r2.model.w_enc.data);

  const std::string text = read_text_file(log1);
  CHECK(text.rfind("epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds\n", 0) == 0);
  std::size_t lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  CHECK(lines == 6);  // header + one row per epoch

  // identical apart from wall-clock timings
  auto strip_wall = [](const std::string& s) {
    std::string out;
    std::size_t start = 0;
    while (start < s.size()) {
      std::size_t end = s.find('\n', start);
      if (end == std::string::npos) end = s.size();
      const std::string line = s.substr(start, end - start);
      out += line.substr(0, line.rfind(',')) + "\n";
      start = end + 1;
    }
    return out;
  };
  CHECK(strip_wall(text) == strip_wall(read_text_file(log2)));
  std::filesystem::remove(log1);
  std::filesystem::remove(log2);
}

TEST_CASE("the trainer learns an easy recall task") {
  Hyper hy;
  hy.n_state = 4;
  hy.h = 3;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 2;
  const Dataset train = gen_delayed_recall(48, 12, 1, 31);
  const Dataset val = gen_delayed_recall(16, 12, 1, 32);
  TrainConfig tc;
  tc.epochs = 25;
  tc.batch_size = 12;
  tc.lr = 5e-3;
  tc.seed = 7;
  const TrainResult r = train_model(init_model(hy, 4), train, val, tc);
  CHECK(r.history.back().train_loss < r.history.front().train_loss);
  CHECK(r.best_val_acc >= 0.75);
}

TEST_CASE("divergence raises a numerical error naming the epoch") {
  Hyper hy;
  hy.n_state = 3;
  hy.h = 2;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 2;
  const Dataset train = gen_delayed_recall(8, 8, 2, 41);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 4;
  tc.lr = 1e14;  // guarantees overflow
  tc.seed = 1;
  try {
    train_model(init_model(hy, 6), train, train, tc);
    FAIL("expected numerical_error");
  } catch (const numerical_error& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("evaluation options select mode and noise deterministically") {
  Hyper hy;
  hy.n_state = 4;
  hy.h = 2;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 2;
  const ModelParams m = init_model(hy, 8);
  const Dataset ds = gen_delayed_recall(16, 10, 2, 51);

  EvalOptions conv;
  EvalOptions rec;
  rec.mode = RunMode::kRecurrent;
  const EvalResult a = evaluate(m, ds, conv);
  const EvalResult b = evaluate(m, ds, rec);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.predictions == b.predictions);
  CHECK(a.mean_loss == Approx(b.mean_loss).margin(1e-9));

  EvalOptions noisy;
  noisy.noise.sigma_rel = 0.05;
  noisy.noise_seed = 5;
  const EvalResult n1 = evaluate(m, ds, noisy);
  const EvalResult n2 = evaluate(m, ds, noisy);
  CHECK(n1.mean_loss == n2.mean_loss);
  noisy.noise_seed = 6;
  const EvalResult n3 = evaluate(m, ds, noisy);
  CHECK(n1.mean_loss != n3.mean_loss);
}

TEST_CASE("training under quantization keeps parameters on the float domain") {
  // QAT moves the latent float weights; the quantizer only shapes the forward
  Hyper hy;
  hy.n_state = 3;
  hy.h = 2;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 2;
  const Dataset train = gen_delayed_recall(16, 10, 2, 61);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.lr = 2e-3;
  tc.seed = 13;
  tc.quant.r_a = 4;
  tc.quant.r_c = 4;
  tc.quant.r_act = 6;
  const ModelParams init = init_model(hy, 9);
  const TrainResult r = train_model(init, train, train, tc);
  // parameters changed and are not grid-locked
  bool moved = false;
  for (std::size_t i = 0; i < init.layers[0].kernels[0].c_re.size(); ++i)
    moved |= r.model.layers[0].kernels[0].c_re[i] != init.layers[0].kernels[0].c_re[i];
  CHECK(moved);
}
