#pragma once

// Text checkpoint format:
//
//   beamstop-ckpt v1
//   <name> <rows> <cols>
//   <v0> <v1> ... <v(rows*cols-1)>
//   ...
//
// Values are printed with 17 significant digits, which round-trips IEEE754
// doubles exactly.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "beamstop/optim.hpp"
#include "beamstop/tensor.hpp"

namespace beamstop {

inline constexpr const char* kCheckpointHeader = "beamstop-ckpt v1";

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void save_checkpoint(const Params& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << kCheckpointHeader << "\n";
  for (const auto& [name, t] : params) {
    out << name << " " << t.rows() << " " << t.cols() << "\n";
    const auto& v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out << " ";
      out << format_double(v[i]);
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

struct CheckpointRecord {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

inline std::vector<CheckpointRecord> read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string header;
  std::getline(in, header);
  if (header != kCheckpointHeader)
    throw std::runtime_error("bad checkpoint header in " + path + ": \"" +
                             header + "\"");
  std::vector<CheckpointRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream hs(line);
    CheckpointRecord rec;
    if (!(hs >> rec.name >> rec.rows >> rec.cols))
      throw std::runtime_error("malformed checkpoint record header: " + line);
    rec.values.resize(rec.rows * rec.cols);
    for (auto& x : rec.values)
      if (!(in >> x))
        throw std::runtime_error("truncated values for parameter " + rec.name +
                                 " in " + path);
    std::getline(in, line);  // consume rest of the values line
    records.push_back(std::move(rec));
  }
  return records;
}

// Loads values into an already-constructed parameter set; every parameter
// must be present with a matching shape.
inline void load_checkpoint(Params& params, const std::string& path) {
  auto records = read_checkpoint(path);
  for (auto& [name, t] : params) {
    const CheckpointRecord* found = nullptr;
    for (const auto& r : records)
      if (r.name == name) {
        found = &r;
        break;
      }
    if (!found)
      throw std::runtime_error("checkpoint " + path + " is missing parameter " +
                               name);
    if (found->rows != t.rows() || found->cols != t.cols())
      throw std::runtime_error(
          "checkpoint shape mismatch for " + name + ": file has " +
          detail::shape_str(found->rows, found->cols) + ", model expects " +
          t.shape_str());
    t.values() = found->values;
  }
}

}  // namespace beamstop
