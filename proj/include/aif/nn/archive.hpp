#pragma once

// Text tensor archive:
//
//   aif-tensors 1
//   <tensor count>
//   <name> <rows> <cols>
//   <rows * cols values, row-major, one row per line>
//   ...
//
// Values are written with 17 significant digits so a save/load round trip is
// exact.

#include "aif/nn/dense.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

namespace aif::nn {

using TensorMap = std::map<std::string, Matrix>;

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_archive(std::ostream& os, const TensorMap& tensors) {
  os << "aif-tensors 1\n" << tensors.size() << '\n' << std::setprecision(17);
  for (const auto& [name, m] : tensors) {
    os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << m(r, c);
      os << '\n';
    }
  }
}

inline TensorMap read_archive(std::istream& is) {
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(is >> magic >> version >> count) || magic != "aif-tensors" || version != 1)
    throw ArchiveError("not a tensor archive");
  TensorMap out;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    Index rows = 0, cols = 0;
    if (!(is >> name >> rows >> cols) || rows < 0 || cols < 0) throw ArchiveError("bad tensor header");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c)
        if (!(is >> m(r, c))) throw ArchiveError("truncated tensor " + name);
    out.emplace(name, std::move(m));
  }
  return out;
}

inline void save_archive(const std::string& path, const TensorMap& tensors) {
  std::ofstream os(path);
  if (!os) throw ArchiveError("cannot write " + path);
  write_archive(os, tensors);
}

inline TensorMap load_archive(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ArchiveError("cannot read " + path);
  return read_archive(is);
}

inline void export_net(const DenseNet& net, const std::string& prefix, TensorMap& out) {
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    out[prefix + "." + std::to_string(i) + ".weight"] = l.weight;
    out[prefix + "." + std::to_string(i) + ".bias"] = l.bias;
  }
}

// Loads weights into a network of the expected architecture.
inline void import_net(DenseNet& net, const std::string& prefix, const TensorMap& in) {
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    auto& l = net.layers()[i];
    const auto w = in.find(prefix + "." + std::to_string(i) + ".weight");
    const auto b = in.find(prefix + "." + std::to_string(i) + ".bias");
    if (w == in.end() || b == in.end()) throw ArchiveError("missing tensors for " + prefix);
    if (w->second.rows() != l.out() || w->second.cols() != l.in() || b->second.size() != l.out())
      throw ArchiveError("shape mismatch for " + prefix + " layer " + std::to_string(i));
    l.weight = w->second;
    l.bias = b->second.reshaped();
  }
}

}  // namespace aif::nn
