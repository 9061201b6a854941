#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>

#include "ssmq/config.hpp"
#include "ssmq/experiments.hpp"

using namespace ssmq;
using Catch::Approx;

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("ssmq_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.hyper.n_state = 3;
  cfg.hyper.h = 2;
  cfg.hyper.n_layer = 1;
  cfg.data.n_train = 16;
  cfg.data.n_val = 8;
  cfg.data.n_test = 8;
  cfg.data.length = 10;
  cfg.data.delay = 2;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.out_dir = out.string();
  return cfg;
}

}  // namespace

TEST_CASE("the template text parses back to the default configuration") {
  const ExperimentConfig def;
  const ExperimentConfig cfg = parse_config_text(config_template());
  CHECK(cfg.hyper.n_state == def.hyper.n_state);
  CHECK(cfg.hyper.h == def.hyper.h);
  CHECK(cfg.hyper.n_layer == def.hyper.n_layer);
  CHECK(cfg.hyper.n_in == def.hyper.n_in);
  CHECK(cfg.hyper.n_out == def.hyper.n_out);
  CHECK(cfg.hyper.fixed_b == def.hyper.fixed_b);
  CHECK(cfg.init_seed == def.init_seed);
  CHECK(cfg.epochs == def.epochs);
  CHECK(cfg.batch_size == def.batch_size);
  CHECK(cfg.lr == def.lr);
  CHECK(cfg.train_seed == def.train_seed);
  CHECK(cfg.quant.any() == false);
  CHECK(cfg.state_mode == def.state_mode);
  CHECK(cfg.noise.sigma_rel == def.noise.sigma_rel);
  CHECK(cfg.noise.when == def.noise.when);
  CHECK(cfg.noise.target_abar == def.noise.target_abar);
  CHECK(cfg.data.task == def.data.task);
  CHECK(cfg.data.n_train == def.data.n_train);
  CHECK(cfg.data.length == def.data.length);
  CHECK(cfg.data.delay == def.data.delay);
  CHECK(cfg.data.f0 == def.data.f0);
  CHECK(cfg.data.f1 == def.data.f1);
  CHECK(cfg.data.snr_db == def.data.snr_db);
  CHECK(cfg.data.seed == def.data.seed);
  CHECK(cfg.data.train_frac == def.data.train_frac);
  CHECK(cfg.out_dir == def.out_dir);

  // serialization is a fixed point
  CHECK(serialize_config(cfg) == config_template());
}

TEST_CASE("a round-trip preserves every customized field") {
  ExperimentConfig cfg;
  cfg.hyper.n_state = 14;
  cfg.hyper.h = 3;
  cfg.hyper.n_layer = 2;
  cfg.hyper.fixed_b = true;
  cfg.init_seed = 9;
  cfg.epochs = 55;
  cfg.batch_size = 4;
  cfg.lr = 3.5e-4;
  cfg.train_seed = 123;
  cfg.quant.r_a = 4;
  cfg.quant.r_b = 5;
  cfg.quant.r_c = 6;
  cfg.quant.r_dt = 7;
  cfg.quant.r_state = 8;
  cfg.quant.r_act = 9;
  cfg.quant.r_linear = 10;
  cfg.quant.r_coder = 11;
  cfg.state_mode = StateQuantMode::kDirectRecurrent;
  cfg.noise.sigma_rel = 0.04;
  cfg.noise.when = NoiseSpec::When::kTrainingAndInference;
  cfg.noise.target_bbar = false;
  cfg.data.task = "two-tone";
  cfg.data.length = 96;
  cfg.data.f0 = 0.07;
  cfg.data.f1 = 0.21;
  cfg.data.snr_db = 14;
  cfg.out_dir = "elsewhere";

  const ExperimentConfig back = parse_config_text(serialize_config(cfg));
  CHECK(back.hyper.n_state == 14);
  CHECK(back.hyper.fixed_b == true);
  CHECK(back.epochs == 55);
  CHECK(back.lr == 3.5e-4);
  CHECK(back.quant.r_a == 4);
  CHECK(back.quant.r_state == 8);
  CHECK(back.quant.r_coder == 11);
  CHECK(back.state_mode == StateQuantMode::kDirectRecurrent);
  CHECK(back.noise.sigma_rel == 0.04);
  CHECK(back.noise.when == NoiseSpec::When::kTrainingAndInference);
  CHECK(back.noise.target_abar == true);
  CHECK(back.noise.target_bbar == false);
  CHECK(back.noise.target_cbar == true);
  CHECK(back.data.task == "two-tone");
  CHECK(back.data.f1 == 0.21);
  CHECK(back.out_dir == "elsewhere");
  CHECK(serialize_config(back) == serialize_config(cfg));
}

TEST_CASE("config errors name the offending key or line") {
  try {
    parse_config_text("model.n_state = 4\nmodel.banana = 2\n");
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("model.banana") != std::string::npos);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  try {
    parse_config_text("train.epochs = 5\ntrain.epochs = 6\n");
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("train.epochs") != std::string::npos);
  }
  try {
    parse_config_text("this line has no equals sign\n");
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("quant.a = 17\n"), config_error);      // above 16
  CHECK_THROWS_AS(parse_config_text("quant.a = -1\n"), config_error);      // negative
  CHECK_THROWS_AS(parse_config_text("train.epochs = 0\n"), config_error);  // must train
  CHECK_THROWS_AS(parse_config_text("train.lr = 0\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("noise.sigma = -0.1\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("noise.targets = abar,zbar\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("data.task = raw\n"), config_error);  // dir required
  CHECK_THROWS_AS(parse_config_text("data.length = 8\ndata.delay = 8\n"), config_error);

  // comments and blank lines are fine
  CHECK_NOTHROW(parse_config_text("# comment only\n\nmodel.h = 3\n"));
}

TEST_CASE("odd state widths are rejected only where the split applies") {
  CHECK_THROWS_AS(parse_config_text("quant.state = 7\n"), config_error);
  const ExperimentConfig cfg =
      parse_config_text("quant.state = 7\nquant.state_mode = direct-recurrent\n");
  CHECK(cfg.quant.r_state == 7);
  CHECK(cfg.state_mode == StateQuantMode::kDirectRecurrent);
  CHECK_NOTHROW(parse_config_text("quant.state = 8\n"));
}

TEST_CASE("noise target lists parse including the empty form") {
  const ExperimentConfig none = parse_config_text("noise.targets = none\n");
  CHECK(!none.noise.target_abar);
  CHECK(!none.noise.target_bbar);
  CHECK(!none.noise.target_cbar);
  const ExperimentConfig some = parse_config_text("noise.targets = abar , cbar\n");
  CHECK(some.noise.target_abar);
  CHECK(!some.noise.target_bbar);
  CHECK(some.noise.target_cbar);
  const ExperimentConfig when = parse_config_text("noise.when = train+inference\n");
  CHECK(when.noise.when == NoiseSpec::When::kTrainingAndInference);
  CHECK_THROWS_AS(parse_config_text("noise.when = sometimes\n"), config_error);
}

TEST_CASE("homogeneous specs round odd state widths up in indirect mode") {
  const QuantSpec a = detail::homogeneous_spec(5, StateQuantMode::kIndirectConv);
  CHECK(a.r_a == 5);
  CHECK(a.r_act == 5);
  CHECK(a.r_state == 6);
  const QuantSpec b = detail::homogeneous_spec(5, StateQuantMode::kDirectRecurrent);
  CHECK(b.r_state == 5);
  const QuantSpec c = detail::homogeneous_spec(8, StateQuantMode::kIndirectConv);
  CHECK(c.r_state == 8);

  QuantSpec base;
  base.r_act = 12;
  const QuantSpec only_a = detail::spec_with_group(base, "a", 3, StateQuantMode::kIndirectConv);
  CHECK(only_a.r_a == 3);
  CHECK(only_a.r_act == 12);  // the base survives
  CHECK(only_a.r_b == 0);
  const QuantSpec st =
      detail::spec_with_group(base, "state", 5, StateQuantMode::kIndirectConv);
  CHECK(st.r_state == 6);
  const QuantSpec st2 =
      detail::spec_with_group(base, "state", 5, StateQuantMode::kDirectRecurrent);
  CHECK(st2.r_state == 5);
  CHECK_THROWS_AS(detail::spec_with_group(base, "banana", 4, StateQuantMode::kIndirectConv),
                  config_error);
}

TEST_CASE("dataset construction follows the data section") {
  DataConfig d;
  d.n_train = 12;
  d.n_val = 5;
  d.n_test = 4;
  d.length = 16;
  d.delay = 3;
  const DataSplit sp = make_data(d);
  CHECK(sp.train.size() == 12);
  CHECK(sp.val.size() == 5);
  CHECK(sp.test.size() == 4);
  CHECK(sp.train.samples[0].u.rows == 16);
  CHECK(sp.train.n_out == 2);

  DataConfig tt = d;
  tt.task = "two-tone";
  tt.f0 = 0.06;
  tt.f1 = 0.13;
  const DataSplit sp2 = make_data(tt);
  CHECK(sp2.train.size() == 12);

  DataConfig bad = d;
  bad.task = "telepathy";
  CHECK_THROWS_AS(make_data(bad), config_error);
}

TEST_CASE("raw directories load through the manifest and split by fraction") {
  const fs::path dir = fresh_dir("rawdata");
  const Dataset ds = gen_delayed_recall(10, 8, 2, 5);
  write_raw(dir, ds);

  DataConfig d;
  d.task = "raw";
  d.dir = dir.string();
  d.train_frac = 0.6;
  d.val_frac = 0.2;
  const DataSplit sp = make_data(d);
  CHECK(sp.train.size() == 6);
  CHECK(sp.val.size() == 2);
  CHECK(sp.test.size() == 2);
  CHECK(sp.train.samples[0].label == ds.samples[0].label);
  fs::remove_all(dir);
}

TEST_CASE("the train command leaves a log, a checkpoint and reproduces itself") {
  const fs::path out1 = fresh_dir("train1");
  const fs::path out2 = fresh_dir("train2");
  ExperimentConfig cfg = tiny_config(out1);
  cmd_train(cfg, true);
  cfg.out_dir = out2.string();
  cmd_train(cfg, true);

  REQUIRE(fs::exists(out1 / "train_log.csv"));
  REQUIRE(fs::exists(out1 / "checkpoint"));

  // byte-identical apart from the wall-clock column
  auto cut_wall = [](const std::string& text) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(pos, end - pos);
      out += line.substr(0, line.rfind(',')) + "\n";
      pos = end + 1;
    }
    return out;
  };
  CHECK(cut_wall(read_text_file(out1 / "train_log.csv")) ==
        cut_wall(read_text_file(out2 / "train_log.csv")));

  const Checkpoint ck1 = load_checkpoint((out1 / "checkpoint").string());
  const Checkpoint ck2 = load_checkpoint((out2 / "checkpoint").string());
  CHECK(ck1.model.w_enc.data == ck2.model.w_enc.data);
  CHECK(ck1.seed == cfg.train_seed);

  // eval against the stored checkpoint writes the two documented rows
  cmd_eval(cfg, (out1 / "checkpoint").string());
  const std::string ev = read_text_file(out2 / "eval.csv");
  CHECK(ev.rfind("split,n_samples,loss,accuracy\n", 0) == 0);
  CHECK(ev.find("\nval,8,") != std::string::npos);
  CHECK(ev.find("\ntest,8,") != std::string::npos);

  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("the template command writes the same text it prints") {
  const fs::path out = fresh_dir("tmpl") / "template.cfg";
  cmd_template(out.string());
  CHECK(read_text_file(out) == config_template());
  fs::remove_all(out.parent_path());
}

TEST_CASE("gen-data leaves three loadable raw directories") {
  const fs::path out = fresh_dir("gendata");
  ExperimentConfig cfg = tiny_config(out);
  cfg.data.n_train = 6;
  cfg.data.n_val = 3;
  cfg.data.n_test = 2;
  cmd_gen_data(cfg);
  const Dataset train = load_raw(out / "train" / "manifest.csv");
  const Dataset val = load_raw(out / "val" / "manifest.csv");
  const Dataset test = load_raw(out / "test" / "manifest.csv");
  CHECK(train.size() == 6);
  CHECK(val.size() == 3);
  CHECK(test.size() == 2);
  CHECK(train.samples[0].u.rows == 10);
  fs::remove_all(out);
}
