// Maps a single state-space kernel onto a simulated memristive crossbar and
// steps it over an input sequence, once with ideal devices and once with
// finite programming resolution plus write/read noise. Shows how the two
// scaling strategies trade accuracy for dynamic range.
//
//   g++ -std=c++20 -O2 -I../include crossbar_demo.cpp -o crossbar_demo

#include <cstdio>
#include <vector>

#include "ssmq/crossbar.hpp"
#include "ssmq/model.hpp"

using namespace ssmq;

namespace {

double worst_error(const std::vector<double>& got, const std::vector<double>& want) {
  double w = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i)
    w = std::max(w, std::fabs(got[i] - want[i]));
  return w;
}

}  // namespace

int main() {
  // one kernel out of a freshly initialized bank
  Hyper hy;
  hy.n_state = 12;
  hy.h = 1;
  hy.n_layer = 1;
  hy.n_in = 1;
  hy.n_out = 2;
  const ModelParams m = init_model(hy, 7);
  const DiscreteKernel k = effective_kernels(m.layers[0], nullptr)[0];

  Rng in_rng(99);
  std::vector<double> u(64);
  for (double& v : u) v = gaussian(in_rng);
  const std::vector<double> want = scan_imssa(k, u);  // software reference

  // ideal analog devices: continuous programming, no noise
  DeviceModel ideal;
  ideal.program_bits = 0;
  Rng prog(1);
  MappedKernel exact = map_imssa(k, ideal, ScalingMode::kCommonMax);
  program(exact.array, prog);
  std::printf("ideal devices:      worst |error| %.2e\n",
              worst_error(run_kernel_on_crossbar(exact.array, exact.layout, u), want));

  // realistic devices: 3-bit programming, 2%% write noise, 1%% read noise
  DeviceModel real;
  real.program_bits = 3;
  real.sigma_write_rel = 0.02;
  real.sigma_read_rel = 0.01;

  for (ScalingMode mode : {ScalingMode::kCommonMax, ScalingMode::kPerParameter}) {
    Rng dev_rng(2);
    MappedKernel mk = map_imssa(k, real, mode);
    program(mk.array, dev_rng);

    CrossbarRunOptions opt;
    opt.r_state = 8;  // redigitize the state between steps
    opt.rng = &dev_rng;
    std::printf("3-bit %-14s worst |error| %.2e\n",
                mode == ScalingMode::kCommonMax ? "common-max:" : "per-parameter:",
                worst_error(run_kernel_on_crossbar(mk.array, mk.layout, u, opt), want));
  }

  // arrays survive a round-trip through their on-disk form
  const MappedKernel saved = map_imssa(k, real, ScalingMode::kCommonMax);
  dump_array("demo_array.ssmq", saved.array);
  const CrossbarArray back = restore_array("demo_array.ssmq");
  std::printf("dump/restore:       %zu x %zu conductances, device window [%g, %g]\n",
              back.targets.rows, back.targets.cols, back.device.g_min, back.device.g_max);
  return 0;
}
