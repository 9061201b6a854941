#pragma once
// Small file helpers shared by checkpointing, configs, datasets, and CSV
// emitters: key=value text files, little-endian binary64 blobs, and printf
// formatting with pinned precision so repeated runs are byte-identical.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ssmq/errors.hpp"

namespace ssmq {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

inline std::string format_double(double v, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Ordered key = value lines; '#' starts a comment, blank lines skipped.
inline std::vector<std::pair<std::string, std::string>> read_kv_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error(path.string() + ": malformed line (expected key = value): " + t);
    out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write " + path.string());
  out << content;
  if (!out) throw config_error("write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

inline void write_f64_file(const std::filesystem::path& path, const std::vector<double>& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(v.data()),
            std::streamsize(v.size() * sizeof(double)));
  if (!out) throw config_error("write failed for " + path.string());
}

inline std::vector<double> read_f64_file(const std::filesystem::path& path,
                                         std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open " + path.string());
  std::vector<double> v(expected_count);
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(expected_count * sizeof(double)));
  if (std::size_t(in.gcount()) != expected_count * sizeof(double))
    throw config_error(path.string() + ": short read (file does not match manifest)");
  char extra;
  if (in.read(&extra, 1))
    throw config_error(path.string() + ": trailing bytes (file does not match manifest)");
  return v;
}

inline void write_f32_file(const std::filesystem::path& path, const std::vector<float>& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(v.data()),
            std::streamsize(v.size() * sizeof(float)));
  if (!out) throw config_error("write failed for " + path.string());
}

inline std::vector<float> read_f32_file(const std::filesystem::path& path,
                                        std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open " + path.string());
  std::vector<float> v(expected_count);
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(expected_count * sizeof(float)));
  if (std::size_t(in.gcount()) != expected_count * sizeof(float))
    throw config_error(path.string() + ": short read (file does not match manifest)");
  char extra;
  if (in.read(&extra, 1))
    throw config_error(path.string() + ": trailing bytes (file does not match manifest)");
  return v;
}

// Incremental CSV writer with a fixed header; numeric cells must be formatted
// by the caller (format_double) so output is reproducible byte for byte.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header)
      : out_(path, std::ios::binary) {
    if (!out_) throw config_error("cannot write " + path.string());
    out_ << header << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ",";
      out_ << cells[i];
    }
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

}  // namespace ssmq
