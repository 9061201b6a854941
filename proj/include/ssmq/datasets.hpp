#pragma once
// Deterministic desk-scale datasets: a delayed-recall memory task, a two-tone
// audio-like discrimination task, and a raw binary loader for externally
// prepared sequences. Generators are seeded and exactly class-balanced for
// even counts.

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "ssmq/errors.hpp"
#include "ssmq/fft.hpp"
#include "ssmq/io.hpp"
#include "ssmq/tensor.hpp"

namespace ssmq {

struct SequenceSample {
  Matrix u;  // L x n_in
  int label = 0;
};

struct Dataset {
  std::vector<SequenceSample> samples;
  int n_in = 1;
  int n_out = 2;

  std::size_t size() const { return samples.size(); }
};

// Binary classification on the sign of the element `delay` steps before the
// sequence end: label = 1 iff u[L-1-delay] > 0.
inline Dataset gen_delayed_recall(std::size_t count, std::size_t L, std::size_t delay,
                                  std::uint64_t seed) {
  if (delay >= L) throw config_error("gen_delayed_recall: delay must be < sequence length");
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Dataset ds;
  ds.n_in = 1;
  ds.n_out = 2;
  ds.samples.resize(count);
  const std::size_t probe = L - 1 - delay;
  for (std::size_t s = 0; s < count; ++s) {
    SequenceSample& sm = ds.samples[s];
    sm.u = Matrix(L, 1);
    for (std::size_t t = 0; t < L; ++t) sm.u.at(t, 0) = uni(rng);
    // Alternate target classes and force the probe's sign, so even counts are
    // exactly balanced.
    const int want = int(s % 2);
    double& p = sm.u.at(probe, 0);
    if (want == 1 && p <= 0.0) p = p == 0.0 ? 0.5 : -p;
    if (want == 0 && p > 0.0) p = -p;
    sm.label = want;
  }
  return ds;
}

// Class k is sin(2*pi*f_k*t + phi) with a random phase plus white Gaussian
// noise at the requested SNR (signal power 1/2).
inline Dataset gen_two_tone(std::size_t count, std::size_t L, double f0, double f1,
                            double snr_db, std::uint64_t seed) {
  if (!(f0 > 0.0 && f0 < 0.5 && f1 > 0.0 && f1 < 0.5))
    throw config_error("gen_two_tone: frequencies must lie in (0, 0.5) cycles/step");
  Rng rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma = std::sqrt(0.5 * std::pow(10.0, -snr_db / 10.0));
  const double freq[2] = {f0, f1};
  Dataset ds;
  ds.n_in = 1;
  ds.n_out = 2;
  ds.samples.resize(count);
  for (std::size_t s = 0; s < count; ++s) {
    SequenceSample& sm = ds.samples[s];
    sm.label = int(s % 2);
    sm.u = Matrix(L, 1);
    const double phi = phase(rng);
    const double w = 2.0 * kPi * freq[sm.label];
    for (std::size_t t = 0; t < L; ++t)
      sm.u.at(t, 0) = std::sin(w * double(t) + phi) + sigma * gauss(rng);
  }
  return ds;
}

// Single-frequency matched filter; the reference oracle for two-tone data.
inline int matched_filter_two_tone(const Matrix& u, double f0, double f1) {
  double score[2] = {0.0, 0.0};
  const double freq[2] = {f0, f1};
  for (int k = 0; k < 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < u.rows; ++t) {
      const double ang = -2.0 * kPi * freq[k] * double(t);
      re += u.at(t, 0) * std::cos(ang);
      im += u.at(t, 0) * std::sin(ang);
    }
    score[k] = re * re + im * im;
  }
  return score[1] > score[0] ? 1 : 0;
}

// Raw on-disk form: manifest CSV (file,length,channels,label) next to one
// IEEE-754 binary32 little-endian time-major file per sequence.
inline void write_raw(const std::filesystem::path& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ostringstream mf;
  mf << "file,length,channels,label\n";
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    char fname[32];
    std::snprintf(fname, sizeof fname, "seq%05zu.bin", s);
    const SequenceSample& sm = ds.samples[s];
    std::vector<float> buf(sm.u.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = float(sm.u.data[i]);
    write_f32_file(dir / fname, buf);
    mf << fname << "," << sm.u.rows << "," << sm.u.cols << "," << sm.label << "\n";
  }
  write_text_file(dir / "manifest.csv", mf.str());
}

inline Dataset load_raw(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw config_error("cannot open " + manifest_path.string());
  const std::filesystem::path dir = manifest_path.parent_path();
  std::string line;
  if (!std::getline(in, line) || trim(line) != "file,length,channels,label")
    throw config_error(manifest_path.string() +
                       ": expected header file,length,channels,label");
  Dataset ds;
  ds.n_in = 0;
  int max_label = 0;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(t);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (cells.size() != 4)
      throw config_error(manifest_path.string() + ": malformed row: " + t);
    const std::size_t L = std::stoull(cells[1]);
    const std::size_t ch = std::stoull(cells[2]);
    SequenceSample sm;
    sm.label = std::stoi(cells[3]);
    sm.u = Matrix(L, ch);
    std::vector<float> buf;
    try {
      buf = read_f32_file(dir / cells[0], L * ch);
    } catch (const config_error& e) {
      throw config_error(std::string(e.what()) + " (listed in " + manifest_path.string() + ")");
    }
    for (std::size_t i = 0; i < buf.size(); ++i) sm.u.data[i] = double(buf[i]);
    if (ds.n_in == 0)
      ds.n_in = int(ch);
    else if (ds.n_in != int(ch))
      throw config_error(manifest_path.string() + ": inconsistent channel counts");
    max_label = std::max(max_label, sm.label);
    ds.samples.push_back(std::move(sm));
  }
  if (ds.samples.empty()) throw config_error(manifest_path.string() + ": no samples");
  ds.n_out = max_label + 1 < 2 ? 2 : max_label + 1;
  return ds;
}

struct DataSplit {
  Dataset train, val, test;
};

// Deterministic split by index (generation order is already i.i.d.).
inline DataSplit split_dataset(const Dataset& ds, double train_frac, double val_frac) {
  if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0)
    throw config_error("split_dataset: invalid fractions");
  DataSplit sp;
  sp.train.n_in = sp.val.n_in = sp.test.n_in = ds.n_in;
  sp.train.n_out = sp.val.n_out = sp.test.n_out = ds.n_out;
  const std::size_t n = ds.samples.size();
  const std::size_t n_train = std::size_t(train_frac * double(n));
  const std::size_t n_val = std::size_t(val_frac * double(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train)
      sp.train.samples.push_back(ds.samples[i]);
    else if (i < n_train + n_val)
      sp.val.samples.push_back(ds.samples[i]);
    else
      sp.test.samples.push_back(ds.samples[i]);
  }
  return sp;
}

}  // namespace ssmq
