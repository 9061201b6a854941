#pragma once
// Experiment commands behind the CLI verbs: training runs, post-training and
// training-aware quantization sweeps, noise/size sweeps, pruning reports,
// hardware-cost reports, and crossbar deployment. Every command is
// deterministic for fixed seeds; CSVs carry accuracies in percent with fixed
// headers, and sweep rows are ordered by sweep index regardless of thread
// count.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include "ssmq/checkpoint.hpp"
#include "ssmq/config.hpp"
#include "ssmq/crossbar.hpp"
#include "ssmq/datasets.hpp"
#include "ssmq/errors.hpp"
#include "ssmq/hw_metrics.hpp"
#include "ssmq/io.hpp"
#include "ssmq/model.hpp"
#include "ssmq/pruner.hpp"
#include "ssmq/trainer.hpp"

namespace ssmq {

inline DataSplit make_data(const DataConfig& d) {
  DataSplit sp;
  if (d.task == "delayed-recall") {
    sp.train = gen_delayed_recall(d.n_train, d.length, d.delay, split_seed(d.seed, 1));
    sp.val = gen_delayed_recall(d.n_val, d.length, d.delay, split_seed(d.seed, 2));
    sp.test = gen_delayed_recall(d.n_test, d.length, d.delay, split_seed(d.seed, 3));
  } else if (d.task == "two-tone") {
    sp.train = gen_two_tone(d.n_train, d.length, d.f0, d.f1, d.snr_db, split_seed(d.seed, 1));
    sp.val = gen_two_tone(d.n_val, d.length, d.f0, d.f1, d.snr_db, split_seed(d.seed, 2));
    sp.test = gen_two_tone(d.n_test, d.length, d.f0, d.f1, d.snr_db, split_seed(d.seed, 3));
  } else if (d.task == "raw") {
    const Dataset ds = load_raw(std::filesystem::path(d.dir) / "manifest.csv");
    sp = split_dataset(ds, d.train_frac, d.val_frac);
  } else {
    throw config_error("unknown data.task: " + d.task);
  }
  if (sp.train.size() == 0 || sp.val.size() == 0)
    throw config_error("data: train and val splits must be non-empty");
  return sp;
}

namespace detail {

inline std::string pct(double fraction) { return format_double(100.0 * fraction, "%.10g"); }
inline std::string pts(double points) { return format_double(points, "%.10g"); }

// Full-model quantization at one width; the state path needs an even split in
// indirect-conv mode, so odd widths round up there.
inline QuantSpec homogeneous_spec(int bits, StateQuantMode mode) {
  QuantSpec q;
  if (bits <= 0) return q;
  q.r_a = q.r_b = q.r_c = q.r_dt = q.r_act = q.r_linear = q.r_coder = bits;
  q.r_state = (mode == StateQuantMode::kIndirectConv && bits % 2 != 0) ? bits + 1 : bits;
  return q;
}

// Ordered results from an index-parallel loop; CSV rows keep sweep order.
template <typename Fn>
void run_indexed(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::future<void>> pool;
  const int k = std::min<int>(threads, int(n));
  for (int t = 0; t < k; ++t) pool.push_back(std::async(std::launch::async, worker));
  for (auto& f : pool) f.get();
}

inline TrainConfig train_config_of(const ExperimentConfig& cfg, const QuantSpec& quant,
                                   const NoiseSpec& noise, const std::string& log_path) {
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = int(cfg.batch_size);
  tc.lr = cfg.lr;
  tc.seed = cfg.train_seed;
  tc.quant = quant;
  tc.state_mode = cfg.state_mode;
  tc.noise = noise;
  tc.log_path = log_path;
  return tc;
}

inline EvalOptions eval_options_of(const ExperimentConfig& cfg, const QuantSpec& quant) {
  EvalOptions ev;
  ev.quant = quant;
  ev.state_mode = cfg.state_mode;
  ev.mode = RunMode::kConv;
  ev.noise = cfg.noise;
  ev.noise_seed = split_seed(cfg.train_seed, 0xE7A1);
  return ev;
}

}  // namespace detail

// --- train / eval ------------------------------------------------------------

inline TrainResult cmd_train(const ExperimentConfig& cfg, bool quiet = false) {
  namespace fs = std::filesystem;
  const DataSplit data = make_data(cfg.data);
  fs::create_directories(cfg.out_dir);
  const ModelParams init = init_model(cfg.hyper, cfg.init_seed);
  const TrainConfig tc = detail::train_config_of(cfg, cfg.quant, cfg.noise,
                                                 (fs::path(cfg.out_dir) / "train_log.csv").string());
  TrainResult res = train_model(init, data.train, data.val, tc);

  Checkpoint ck;
  ck.model = res.model;
  ck.quant = cfg.quant;
  ck.state_mode = cfg.state_mode;
  ck.seed = cfg.train_seed;
  save_checkpoint(fs::path(cfg.out_dir) / "checkpoint", ck);

  if (!quiet) {
    const EvalOptions ev = detail::eval_options_of(cfg, cfg.quant);
    const EvalResult test = data.test.size() ? evaluate(res.model, data.test, ev) : EvalResult{};
    std::cout << "best epoch " << res.best_epoch << ", val accuracy "
              << detail::pct(res.best_val_acc) << "%";
    if (data.test.size()) std::cout << ", test accuracy " << detail::pct(test.accuracy) << "%";
    std::cout << "\n";
  }
  return res;
}

inline void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_dir) {
  namespace fs = std::filesystem;
  const Checkpoint ck = load_checkpoint(checkpoint_dir);
  const DataSplit data = make_data(cfg.data);
  const EvalOptions ev = detail::eval_options_of(cfg, cfg.quant);
  fs::create_directories(cfg.out_dir);
  CsvWriter csv(fs::path(cfg.out_dir) / "eval.csv", "split,n_samples,loss,accuracy");
  for (const auto& [name, set] : {std::pair<const char*, const Dataset*>{"val", &data.val},
                                  {"test", &data.test}}) {
    if (!set->size()) continue;
    const EvalResult r = evaluate(ck.model, *set, ev);
    csv.row({name, std::to_string(set->size()), format_double(r.mean_loss, "%.10g"),
             detail::pct(r.accuracy)});
    std::cout << name << ": n=" << set->size() << " loss=" << format_double(r.mean_loss, "%.10g")
              << " accuracy=" << detail::pct(r.accuracy) << "%\n";
  }
}

// --- quantization sweep -------------------------------------------------------

struct SweepQuantArgs {
  std::vector<std::string> groups = {"all"};
  std::vector<int> bits = {16, 8, 6, 5, 4, 3, 2};
  std::string method = "both";  // ptq | qat | both
  int threads = 1;
};

namespace detail {

inline QuantSpec spec_with_group(const QuantSpec& base, const std::string& group, int bits,
                                 StateQuantMode mode) {
  QuantSpec q = base;
  if (group == "all") return homogeneous_spec(bits, mode);
  if (group == "a") q.r_a = bits;
  else if (group == "b") q.r_b = bits;
  else if (group == "c") q.r_c = bits;
  else if (group == "dt") q.r_dt = bits;
  else if (group == "state")
    q.r_state = (mode == StateQuantMode::kIndirectConv && bits % 2 != 0) ? bits + 1 : bits;
  else if (group == "act") q.r_act = bits;
  else if (group == "linear") q.r_linear = bits;
  else if (group == "coder") q.r_coder = bits;
  else throw config_error("unknown quantization group: " + group);
  return q;
}

}  // namespace detail

inline void cmd_sweep_quant(const ExperimentConfig& cfg, const SweepQuantArgs& args) {
  namespace fs = std::filesystem;
  if (args.method != "ptq" && args.method != "qat" && args.method != "both")
    throw config_error("sweep-quant method must be ptq, qat or both");
  for (int b : args.bits)
    if (b < 1 || b > 32) throw config_error("sweep-quant bits must lie in 1..32");
  const bool do_ptq = args.method != "qat";
  const bool do_qat = args.method != "ptq";
  const DataSplit data = make_data(cfg.data);

  // Float baseline: PTQ quantizes its weights; additional error is measured
  // against its accuracy.
  const ModelParams init = init_model(cfg.hyper, cfg.init_seed);
  const TrainResult base =
      train_model(init, data.train, data.val, detail::train_config_of(cfg, QuantSpec{}, NoiseSpec{}, ""));
  const Dataset& eval_set = data.test.size() ? data.test : data.val;
  const double base_acc =
      evaluate(base.model, eval_set, detail::eval_options_of(cfg, QuantSpec{})).accuracy;

  struct Point {
    std::string group, method;
    int bits = 0;
    bool ok = false;
    double acc = 0.0;
  };
  std::vector<Point> points;
  for (const auto& g : args.groups)
    for (int b : args.bits) {
      if (do_ptq) points.push_back({g, "ptq", b, false, 0.0});
      if (do_qat) points.push_back({g, "qat", b, false, 0.0});
    }

  detail::run_indexed(points.size(), args.threads, [&](std::size_t i) {
    Point& p = points[i];
    try {
      const QuantSpec spec = detail::spec_with_group(cfg.quant, p.group, p.bits, cfg.state_mode);
      if (p.method == "ptq") {
        p.acc = evaluate(base.model, eval_set, detail::eval_options_of(cfg, spec)).accuracy;
      } else {
        const TrainResult r = train_model(
            init, data.train, data.val, detail::train_config_of(cfg, spec, NoiseSpec{}, ""));
        p.acc = evaluate(r.model, eval_set, detail::eval_options_of(cfg, spec)).accuracy;
      }
      p.ok = true;
    } catch (const numerical_error&) {
      p.ok = false;
    }
  });

  fs::create_directories(cfg.out_dir);
  CsvWriter csv(fs::path(cfg.out_dir) / "sweep_quant.csv",
                "group,bits,method,status,accuracy,additional_error");
  for (const Point& p : points)
    csv.row({p.group, std::to_string(p.bits), p.method, p.ok ? "ok" : "failed",
             p.ok ? detail::pct(p.acc) : "",
             p.ok ? detail::pts(100.0 * (base_acc - p.acc)) : ""});

  // Per group and method, the smallest swept width whose additional error
  // stays below one point.
  CsvWriter sum(fs::path(cfg.out_dir) / "sweep_quant_summary.csv",
                "group,method,min_bits_within_1pct");
  for (const auto& g : args.groups)
    for (const std::string m : {"ptq", "qat"}) {
      if ((m == "ptq" && !do_ptq) || (m == "qat" && !do_qat)) continue;
      int best = 0;
      for (const Point& p : points)
        if (p.group == g && p.method == m && p.ok && 100.0 * (base_acc - p.acc) < 1.0)
          if (best == 0 || p.bits < best) best = p.bits;
      sum.row({g, m, best ? std::to_string(best) : ""});
    }
  std::cout << "baseline accuracy " << detail::pct(base_acc) << "% over " << points.size()
            << " sweep points\n";
}

// --- noise sweep ---------------------------------------------------------------

struct SweepNoiseArgs {
  std::vector<double> sigmas = {0.0, 0.01, 0.02, 0.05, 0.1};
  std::vector<int> bits = {0};  // 0 = float
  bool train_noise = false;     // also train a noise-injected variant
  int noise_seeds = 5;
  int threads = 1;
};

inline void cmd_sweep_noise(const ExperimentConfig& cfg, const SweepNoiseArgs& args) {
  namespace fs = std::filesystem;
  if (args.noise_seeds < 5)
    throw config_error("sweep-noise needs at least 5 noise seeds");
  for (double s : args.sigmas)
    if (s < 0.0) throw config_error("sweep-noise sigmas must be >= 0");
  if (args.train_noise && !(cfg.noise.sigma_rel > 0.0))
    throw config_error("sweep-noise --train-noise needs noise.sigma > 0 in the config");
  const DataSplit data = make_data(cfg.data);
  const Dataset& eval_set = data.test.size() ? data.test : data.val;
  const ModelParams init = init_model(cfg.hyper, cfg.init_seed);

  std::vector<bool> twn_values = {false};
  if (args.train_noise) twn_values.push_back(true);

  struct Variant {
    int bits = 0;
    bool twn = false;
    ModelParams model;
  };
  std::vector<Variant> variants;
  for (int b : args.bits)
    for (bool twn : twn_values) variants.push_back({b, twn, {}});

  detail::run_indexed(variants.size(), args.threads, [&](std::size_t i) {
    Variant& v = variants[i];
    const QuantSpec spec = detail::homogeneous_spec(v.bits, cfg.state_mode);
    NoiseSpec tn;
    if (v.twn) {
      tn = cfg.noise;
      tn.when = NoiseSpec::When::kTrainingAndInference;
    }
    v.model =
        train_model(init, data.train, data.val, detail::train_config_of(cfg, spec, tn, ""))
            .model;
  });

  fs::create_directories(cfg.out_dir);
  CsvWriter csv(fs::path(cfg.out_dir) / "sweep_noise.csv",
                "sigma_rel,quant_bits,trained_with_noise,acc_mean,acc_std");
  for (const Variant& v : variants)
    for (double sigma : args.sigmas) {
      EvalOptions ev = detail::eval_options_of(cfg, detail::homogeneous_spec(v.bits, cfg.state_mode));
      ev.noise = cfg.noise;
      ev.noise.sigma_rel = sigma;
      ev.noise.when = NoiseSpec::When::kInferenceOnly;
      std::vector<double> accs(std::size_t(args.noise_seeds));
      detail::run_indexed(accs.size(), args.threads, [&](std::size_t s) {
        EvalOptions e = ev;
        e.noise_seed = split_seed(cfg.train_seed, 1000 + s);
        accs[s] = evaluate(v.model, eval_set, e).accuracy;
      });
      double mean = 0.0;
      for (double a : accs) mean += a;
      mean /= double(accs.size());
      double var = 0.0;
      for (double a : accs) var += (a - mean) * (a - mean);
      const double std_dev = std::sqrt(var / double(accs.size() - 1));
      csv.row({format_double(sigma, "%.10g"), std::to_string(v.bits), v.twn ? "true" : "false",
               detail::pct(mean), detail::pts(100.0 * std_dev)});
    }
  std::cout << "noise sweep: " << variants.size() << " model variants x " << args.sigmas.size()
            << " noise levels\n";
}

// --- size sweep ------------------------------------------------------------------

struct SweepSizeArgs {
  std::vector<int> n_states = {4, 8, 16};
  std::vector<int> hs = {4, 8};
  std::vector<int> bits = {0};
  int threads = 1;
};

inline void cmd_sweep_size(const ExperimentConfig& cfg, const SweepSizeArgs& args) {
  namespace fs = std::filesystem;
  const DataSplit data = make_data(cfg.data);
  const Dataset& eval_set = data.test.size() ? data.test : data.val;

  struct Point {
    int n = 0, h = 0, bits = 0;
    bool ok = false;
    double acc = 0.0;
  };
  std::vector<Point> points;
  for (int n : args.n_states)
    for (int h : args.hs)
      for (int b : args.bits) points.push_back({n, h, b, false, 0.0});

  detail::run_indexed(points.size(), args.threads, [&](std::size_t i) {
    Point& p = points[i];
    try {
      Hyper hy = cfg.hyper;
      hy.n_state = p.n;
      hy.h = p.h;
      const QuantSpec spec = detail::homogeneous_spec(p.bits, cfg.state_mode);
      const ModelParams init = init_model(hy, cfg.init_seed);
      const TrainResult r = train_model(
          init, data.train, data.val, detail::train_config_of(cfg, spec, NoiseSpec{}, ""));
      p.acc = evaluate(r.model, eval_set, detail::eval_options_of(cfg, spec)).accuracy;
      p.ok = true;
    } catch (const numerical_error&) {
      p.ok = false;
    }
  });

  fs::create_directories(cfg.out_dir);
  CsvWriter csv(fs::path(cfg.out_dir) / "sweep_size.csv", "n_state,h,bits,status,accuracy");
  for (const Point& p : points)
    csv.row({std::to_string(p.n), std::to_string(p.h), std::to_string(p.bits),
             p.ok ? "ok" : "failed", p.ok ? detail::pct(p.acc) : ""});
  std::cout << "size sweep: " << points.size() << " points\n";
}

// --- hardware metrics -----------------------------------------------------------

inline void cmd_metrics(const ExperimentConfig& cfg, const std::string& checkpoint_dir,
                        const MetricsOptions& opt = {}) {
  namespace fs = std::filesystem;
  MetricsShape shape;
  QuantSpec quant = cfg.quant;
  if (!checkpoint_dir.empty()) {
    const Checkpoint ck = load_checkpoint(checkpoint_dir);
    shape = shape_of(ck.model);
    if (ck.quant.any() && !quant.any()) quant = ck.quant;
  } else {
    shape = shape_of(cfg.hyper);
  }
  const MetricsReport rep = compute_metrics(shape, quant, opt);
  const std::string js = metrics_to_json(rep).dump(2);
  fs::create_directories(cfg.out_dir);
  write_text_file(fs::path(cfg.out_dir) / "metrics.json", js + "\n");
  std::cout << js << "\n";
}

// --- pruning ---------------------------------------------------------------------

struct PruneArgs {
  double budget_points = 1.0;        // tolerated accuracy drop, percentage points
  double unstructured_fraction = 0;  // optional magnitude pruning after the structural pass
  std::string scope = "kernel";      // kernel | linear
};

inline void cmd_prune(const ExperimentConfig& cfg, const std::string& checkpoint_dir,
                      const PruneArgs& args) {
  namespace fs = std::filesystem;
  Checkpoint ck = load_checkpoint(checkpoint_dir);
  const DataSplit data = make_data(cfg.data);
  const EvalOptions ev = detail::eval_options_of(cfg, cfg.quant);

  StructuralPruneResult res =
      prune_structural(ck.model, args.budget_points, data.val, ev, data.val);

  if (args.unstructured_fraction > 0.0) {
    const PruneScope scope =
        args.scope == "linear" ? PruneScope::kLinear : PruneScope::kKernel;
    res.model = prune_unstructured(res.model, args.unstructured_fraction, scope);
  }
  const double acc_after = evaluate(res.model, data.val, ev).accuracy;

  fs::create_directories(cfg.out_dir);
  const auto reports = prune_layer_reports(res.kernels_before, res.model);
  CsvWriter csv(fs::path(cfg.out_dir) / "prune.csv",
                "layer,kernels_total,kernels_pruned,structural_fraction,"
                "unstructured_kernel_fraction,linear_fraction,accuracy_before,accuracy_after");
  for (const auto& r : reports)
    csv.row({std::to_string(r.layer), std::to_string(r.kernels_total),
             std::to_string(r.kernels_pruned), format_double(r.structural_fraction, "%.10g"),
             format_double(r.unstructured_kernel_fraction, "%.10g"),
             format_double(r.linear_fraction, "%.10g"), detail::pct(res.accuracy_before),
             detail::pct(acc_after)});

  Checkpoint out = ck;
  out.model = res.model;
  save_checkpoint(fs::path(cfg.out_dir) / "pruned", out);
  std::size_t pruned_total = 0;
  for (std::size_t n : res.kernels_pruned) pruned_total += n;
  std::cout << "pruned " << pruned_total << " kernels; accuracy "
            << detail::pct(res.accuracy_before) << "% -> " << detail::pct(acc_after) << "%\n";
}

// --- crossbar deployment -----------------------------------------------------------

struct CrossbarArgs {
  DeviceModel device;
  int seeds = 10;
  std::string scaling = "both";  // common-max | per-parameter | both
  std::size_t array_size = 64;
  double v_fs = 0.0;
};

inline void cmd_crossbar(const ExperimentConfig& cfg, const std::string& checkpoint_dir,
                         const CrossbarArgs& args) {
  namespace fs = std::filesystem;
  if (args.seeds < 1) throw config_error("crossbar needs at least one seed");
  const Checkpoint ck = load_checkpoint(checkpoint_dir);
  const DataSplit data = make_data(cfg.data);
  const Dataset& eval_set = data.test.size() ? data.test : data.val;
  const QuantSpec quant = cfg.quant.any() ? cfg.quant : ck.quant;

  std::vector<ScalingMode> modes;
  if (args.scaling == "common-max" || args.scaling == "both")
    modes.push_back(ScalingMode::kCommonMax);
  if (args.scaling == "per-parameter" || args.scaling == "both")
    modes.push_back(ScalingMode::kPerParameter);
  if (modes.empty())
    throw config_error("crossbar scaling must be common-max, per-parameter or both");

  fs::create_directories(cfg.out_dir);
  CsvWriter csv(fs::path(cfg.out_dir) / "crossbar.csv", "seed,scaling,accuracy");
  for (ScalingMode mode : modes) {
    double mean = 0.0;
    for (int s = 0; s < args.seeds; ++s) {
      Rng rng(split_seed(cfg.train_seed, 0xC0DE + 7919u * unsigned(s) +
                                             (mode == ScalingMode::kCommonMax ? 0u : 1u)));
      auto arrays = map_model_kernels(ck.model, &quant, args.device, mode, rng, args.array_size);
      CrossbarRunOptions run;
      run.r_state = quant.r_state;
      run.v_fs = args.v_fs;
      run.rng = args.device.sigma_read_rel > 0.0 ? &rng : nullptr;
      std::size_t hits = 0;
      for (const auto& sample : eval_set.samples) {
        const std::vector<double> logits =
            crossbar_forward(ck.model, sample.u, arrays, &quant, run);
        if (argmax(logits) == sample.label) ++hits;
      }
      const double acc = double(hits) / double(eval_set.size());
      mean += acc;
      csv.row({std::to_string(s), scaling_mode_name(mode), detail::pct(acc)});
    }
    std::cout << scaling_mode_name(mode) << " mean accuracy "
              << detail::pct(mean / double(args.seeds)) << "% over " << args.seeds << " seeds\n";
  }
}

// --- data generation ----------------------------------------------------------------

inline void cmd_gen_data(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const DataSplit data = make_data(cfg.data);
  write_raw(fs::path(cfg.out_dir) / "train", data.train);
  write_raw(fs::path(cfg.out_dir) / "val", data.val);
  write_raw(fs::path(cfg.out_dir) / "test", data.test);
  std::cout << "wrote " << data.train.size() << "/" << data.val.size() << "/"
            << data.test.size() << " train/val/test sequences under " << cfg.out_dir << "\n";
}

inline void cmd_template(const std::string& out_path) {
  const std::string text = config_template();
  if (out_path.empty())
    std::cout << text;
  else
    write_text_file(out_path, text);
}

}  // namespace ssmq
