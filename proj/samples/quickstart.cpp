// Minimal end-to-end tour: generate a delayed-recall dataset, train a small
// model in float, then compare post-training quantization against
// quantization-aware training at the same bit widths.
//
//   g++ -std=c++20 -O2 -I../include -I../vendor quickstart.cpp -o quickstart

#include <cstdio>

#include "ssmq/experiments.hpp"

using namespace ssmq;

int main() {
  // binary task: recall the sign of the input 8 steps back
  const Dataset train = gen_delayed_recall(512, 64, 8, 1);
  const Dataset val = gen_delayed_recall(128, 64, 8, 2);
  const Dataset test = gen_delayed_recall(256, 64, 8, 3);

  Hyper hy;
  hy.n_state = 8;
  hy.h = 4;
  hy.n_layer = 2;
  hy.n_in = 1;
  hy.n_out = 2;

  TrainConfig tc;
  tc.epochs = 15;
  tc.batch_size = 32;
  tc.lr = 3e-3;
  tc.seed = 1;

  std::printf("training float model (N=%d, H=%d, %d layers)...\n", hy.n_state, hy.h,
              hy.n_layer);
  const TrainResult float_run = train_model(init_model(hy, 42), train, val, tc);
  std::printf("  best val accuracy %.1f%% at epoch %d\n", 100.0 * float_run.best_val_acc,
              float_run.best_epoch);

  // 6-bit weights with 8-bit state/activations
  QuantSpec q;
  q.r_a = q.r_b = q.r_c = q.r_dt = 6;
  q.r_state = q.r_act = 8;
  q.r_linear = q.r_coder = 8;

  EvalOptions plain;
  EvalOptions quantized;
  quantized.quant = q;

  const double acc_float = evaluate(float_run.model, test, plain).accuracy;
  const double acc_ptq = evaluate(float_run.model, test, quantized).accuracy;

  std::printf("training the same model quantization-aware...\n");
  TrainConfig tq = tc;
  tq.quant = q;
  const TrainResult qat_run = train_model(init_model(hy, 42), train, val, tq);
  const double acc_qat = evaluate(qat_run.model, test, quantized).accuracy;

  std::printf("\ntest accuracy\n");
  std::printf("  float                 %.1f%%\n", 100.0 * acc_float);
  std::printf("  PTQ  (6b kernel, 8b state/act) %.1f%%\n", 100.0 * acc_ptq);
  std::printf("  QAT  (6b kernel, 8b state/act) %.1f%%\n", 100.0 * acc_qat);

  // what the quantized model costs on the hardware side
  const MetricsReport full = compute_metrics(shape_of(qat_run.model), QuantSpec{});
  const MetricsReport cut = compute_metrics(shape_of(qat_run.model), q);
  std::printf("\narithmetic effort: %llu -> %llu bit-ops per step (factor %.1f)\n",
              (unsigned long long)full.ace_total, (unsigned long long)cut.ace_total,
              double(full.ace_total) / double(cut.ace_total));
  return 0;
}
