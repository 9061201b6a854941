// CLI front end: train/eval, quantization-noise-size sweeps, hardware cost
// reports, pruning, crossbar deployment, and dataset generation. Exit codes:
// 0 success, 2 configuration error, 3 numerical failure.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssmq/experiments.hpp"

namespace {

ssmq::ExperimentConfig load_config(const std::string& config_path, const std::string& out_override,
                                   std::int64_t seed_override) {
  ssmq::ExperimentConfig cfg;
  if (!config_path.empty()) cfg = ssmq::parse_config_file(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (seed_override >= 0) {
    cfg.train_seed = std::uint64_t(seed_override);
    cfg.init_seed = std::uint64_t(seed_override);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ssmq: quantized diagonal state-space models with analog crossbar deployment"};
  app.require_subcommand(1);

  std::string config_path, out_override, checkpoint_dir;
  std::int64_t seed_override = -1;
  int threads = 1;
  app.add_option("--config", config_path, "experiment config file (key = value)");
  app.add_option("--out", out_override, "output directory (overrides out.dir)");
  app.add_option("--seed", seed_override, "override train.seed and model.init_seed");
  app.add_option("--threads", threads, "worker threads for independent sweep points")
      ->check(CLI::Range(1, 256));

  CLI::App* c_train = app.add_subcommand("train", "train a model and save a checkpoint");
  CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on the configured data");
  c_eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();

  ssmq::SweepQuantArgs qa;
  CLI::App* c_sq = app.add_subcommand("sweep-quant", "accuracy vs bit width per parameter group");
  c_sq->add_option("--groups", qa.groups, "groups: a,b,c,dt,state,act,linear,coder,all")->delimiter(',');
  c_sq->add_option("--bits", qa.bits, "bit widths to sweep")->delimiter(',');
  c_sq->add_option("--method", qa.method, "ptq | qat | both");

  ssmq::SweepNoiseArgs na;
  CLI::App* c_sn = app.add_subcommand("sweep-noise", "accuracy vs relative weight noise");
  c_sn->add_option("--sigmas", na.sigmas, "relative noise levels")->delimiter(',');
  c_sn->add_option("--bits", na.bits, "full-model bit widths (0 = float)")->delimiter(',');
  c_sn->add_flag("--train-noise", na.train_noise, "also train a noise-injected variant");
  c_sn->add_option("--noise-seeds", na.noise_seeds, "evaluation noise seeds (>= 5)");

  ssmq::SweepSizeArgs za;
  CLI::App* c_sz = app.add_subcommand("sweep-size", "accuracy vs model size and quantization");
  c_sz->add_option("--n-states", za.n_states, "state dimensions to sweep")->delimiter(',');
  c_sz->add_option("--hs", za.hs, "kernel counts to sweep")->delimiter(',');
  c_sz->add_option("--bits", za.bits, "full-model bit widths (0 = float)")->delimiter(',');

  ssmq::MetricsOptions mo;
  CLI::App* c_me = app.add_subcommand("metrics", "arithmetic/memory/ADC cost report");
  c_me->add_option("--checkpoint", checkpoint_dir, "derive the shape from this checkpoint");
  c_me->add_option("--reference-width", mo.reference_width, "bit width assumed for disabled groups");
  c_me->add_flag("--include-dt", mo.include_dt, "count the step-size store in memory");

  ssmq::PruneArgs pa;
  CLI::App* c_pr = app.add_subcommand("prune", "structural (and optional magnitude) pruning");
  c_pr->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  c_pr->add_option("--budget", pa.budget_points, "tolerated accuracy drop in points");
  c_pr->add_option("--unstructured-fraction", pa.unstructured_fraction,
                   "magnitude-prune this fraction after the structural pass");
  c_pr->add_option("--scope", pa.scope, "magnitude pruning scope: kernel | linear");

  ssmq::CrossbarArgs xa;
  CLI::App* c_xb = app.add_subcommand("crossbar", "evaluate a checkpoint on simulated arrays");
  c_xb->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  c_xb->add_option("--seeds", xa.seeds, "number of device seeds");
  c_xb->add_option("--scaling", xa.scaling, "common-max | per-parameter | both");
  c_xb->add_option("--g-min", xa.device.g_min, "minimum conductance");
  c_xb->add_option("--g-max", xa.device.g_max, "maximum conductance");
  c_xb->add_option("--program-bits", xa.device.program_bits,
                   "conductance levels = 2^bits (0 = continuous)");
  c_xb->add_option("--sigma-write", xa.device.sigma_write_rel, "relative write noise");
  c_xb->add_option("--sigma-read", xa.device.sigma_read_rel, "relative read noise");
  c_xb->add_option("--array-size", xa.array_size, "physical rows/columns per array");
  c_xb->add_option("--v-fs", xa.v_fs, "voltage full-scale in value units (0 = unlimited)");

  CLI::App* c_gd = app.add_subcommand("gen-data", "write the configured dataset to disk");
  std::string template_out;
  CLI::App* c_tp = app.add_subcommand("template", "print a config with every default");
  c_tp->add_option("--out-file", template_out, "write the template here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_tp->parsed()) {
      ssmq::cmd_template(template_out);
      return 0;
    }
    ssmq::ExperimentConfig cfg = load_config(config_path, out_override, seed_override);
    if (c_train->parsed()) {
      ssmq::cmd_train(cfg);
    } else if (c_eval->parsed()) {
      ssmq::cmd_eval(cfg, checkpoint_dir);
    } else if (c_sq->parsed()) {
      qa.threads = threads;
      ssmq::cmd_sweep_quant(cfg, qa);
    } else if (c_sn->parsed()) {
      na.threads = threads;
      ssmq::cmd_sweep_noise(cfg, na);
    } else if (c_sz->parsed()) {
      za.threads = threads;
      ssmq::cmd_sweep_size(cfg, za);
    } else if (c_me->parsed()) {
      ssmq::cmd_metrics(cfg, checkpoint_dir, mo);
    } else if (c_pr->parsed()) {
      ssmq::cmd_prune(cfg, checkpoint_dir, pa);
    } else if (c_xb->parsed()) {
      ssmq::cmd_crossbar(cfg, checkpoint_dir, xa);
    } else if (c_gd->parsed()) {
      ssmq::cmd_gen_data(cfg);
    }
  } catch (const ssmq::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ssmq::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
