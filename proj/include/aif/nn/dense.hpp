#pragma once

// Feed-forward networks over row-major batches (one sample per row) with a
// recorded tape for reverse-mode differentiation.

#include "aif/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace aif::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ActivationKind { Identity, Relu, Tanh, Sigmoid, ScaledSigmoid, Softmax, Clamp };

struct Activation {
  ActivationKind kind = ActivationKind::Identity;
  double scale = 1.0;  // ScaledSigmoid: scale * sigmoid(x) + floor
  double floor = 0.0;
  double lo = 0.0;     // Clamp bounds
  double hi = 1.0;

  static Activation identity() { return {}; }
  static Activation relu() { return {ActivationKind::Relu}; }
  static Activation tanh() { return {ActivationKind::Tanh}; }
  static Activation sigmoid() { return {ActivationKind::Sigmoid}; }
  static Activation softmax() { return {ActivationKind::Softmax}; }
  static Activation scaled_sigmoid(double scale, double floor = 0.0) {
    return {ActivationKind::ScaledSigmoid, scale, floor};
  }
  static Activation clamp(double lo, double hi) { return {ActivationKind::Clamp, 1.0, 0.0, lo, hi}; }
};

// Contiguous block of a layer's outputs sharing one activation.
struct Segment {
  Index width = 0;
  Activation activation;
};

struct Layer {
  Matrix weight;  // out x in
  Vector bias;
  std::vector<Segment> head;
  double dropout = 0.0;  // applied to this layer's activated output

  Index in() const { return weight.cols(); }
  Index out() const { return weight.rows(); }
};

struct LayerSpec {
  Index width = 0;
  std::vector<Segment> head;  // empty: one identity segment
  double dropout = 0.0;
};

class DenseNet {
 public:
  DenseNet() = default;

  // Glorot-uniform weights, zero biases.
  DenseNet(Index input_width, const std::vector<LayerSpec>& specs, Rng& rng) {
    Index in = input_width;
    for (const auto& spec : specs) {
      Layer layer;
      layer.weight.resize(spec.width, in);
      const double bound = std::sqrt(6.0 / static_cast<double>(in + spec.width));
      for (Index r = 0; r < layer.weight.rows(); ++r)
        for (Index c = 0; c < layer.weight.cols(); ++c)
          layer.weight(r, c) = (2.0 * uniform01(rng) - 1.0) * bound;
      layer.bias = Vector::Zero(spec.width);
      layer.head = spec.head.empty() ? std::vector<Segment>{{spec.width, Activation::identity()}} : spec.head;
      layer.dropout = spec.dropout;
      layers_.push_back(std::move(layer));
      in = spec.width;
    }
    validate();
  }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  Index input_width() const { return layers_.empty() ? 0 : layers_.front().in(); }
  Index output_width() const { return layers_.empty() ? 0 : layers_.back().out(); }
  bool has_dropout() const {
    for (const auto& l : layers_)
      if (l.dropout > 0.0) return true;
    return false;
  }
  Index parameter_count() const {
    Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  void validate() const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.bias.size() != l.out()) throw ShapeError("bias width mismatch in layer " + std::to_string(i));
      if (i > 0 && l.in() != layers_[i - 1].out())
        throw ShapeError("layer " + std::to_string(i) + " input does not chain");
      Index w = 0;
      for (const auto& seg : l.head) w += seg.width;
      if (w != l.out()) throw ShapeError("activation segments do not cover layer " + std::to_string(i));
      if (!(l.dropout >= 0.0 && l.dropout < 1.0)) throw ShapeError("dropout must be in [0, 1)");
    }
  }

 private:
  std::vector<Layer> layers_;
};

// One draw of dropout masks, shared by every row of a batch: a sample of the
// network parameters for Monte-Carlo dropout.
struct ThetaSample {
  std::vector<RowVector> masks;  // empty entry: layer without dropout
};

inline ThetaSample sample_theta(const DenseNet& net, Rng& rng) {
  ThetaSample t;
  for (const auto& l : net.layers()) {
    if (l.dropout <= 0.0) {
      t.masks.emplace_back();
      continue;
    }
    RowVector m(l.out());
    const double keep = 1.0 - l.dropout;
    for (Index j = 0; j < m.size(); ++j) m(j) = uniform01(rng) < keep ? 1.0 / keep : 0.0;
    t.masks.push_back(std::move(m));
  }
  return t;
}

enum class DropoutMode { Off, PerRow, Shared };

struct LayerRecord {
  Matrix input;
  Matrix pre;   // pre-activation
  Matrix post;  // activation output before dropout
  Matrix mask;  // rows x out, or 1 x out when shared, or empty
};

class Tape {
 public:
  std::vector<LayerRecord> layers;
  bool consumed() const { return consumed_; }
  void consume() {
    if (consumed_) throw std::logic_error("tape already consumed by a backward pass");
    consumed_ = true;
  }

 private:
  bool consumed_ = false;
};

namespace detail {

inline void activate(const Activation& a, const Eigen::Ref<const Matrix>& z, Eigen::Ref<Matrix> out) {
  switch (a.kind) {
    case ActivationKind::Identity: out = z; break;
    case ActivationKind::Relu: out = z.cwiseMax(0.0); break;
    case ActivationKind::Tanh: out = z.array().tanh(); break;
    case ActivationKind::Sigmoid: out = (1.0 + (-z.array()).exp()).inverse(); break;
    case ActivationKind::ScaledSigmoid:
      out = a.scale * (1.0 + (-z.array()).exp()).inverse() + a.floor;
      break;
    case ActivationKind::Softmax:
      for (Index r = 0; r < z.rows(); ++r) {
        const double m = z.row(r).maxCoeff();
        out.row(r) = (z.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
      }
      break;
    case ActivationKind::Clamp: out = z.cwiseMax(a.lo).cwiseMin(a.hi); break;
  }
}

// d(loss)/d(pre) from d(loss)/d(post).
inline void activate_backward(const Activation& a, const Eigen::Ref<const Matrix>& z,
                              const Eigen::Ref<const Matrix>& y, const Eigen::Ref<const Matrix>& dy,
                              Eigen::Ref<Matrix> dz) {
  switch (a.kind) {
    case ActivationKind::Identity: dz = dy; break;
    case ActivationKind::Relu: dz = (z.array() > 0.0).select(dy, 0.0); break;
    case ActivationKind::Tanh: dz = dy.array() * (1.0 - y.array().square()); break;
    case ActivationKind::Sigmoid: dz = dy.array() * y.array() * (1.0 - y.array()); break;
    case ActivationKind::ScaledSigmoid: {
      const auto s = (y.array() - a.floor) / a.scale;
      dz = dy.array() * a.scale * s * (1.0 - s);
      break;
    }
    case ActivationKind::Softmax:
      for (Index r = 0; r < z.rows(); ++r) {
        const double dot = dy.row(r).dot(y.row(r));
        dz.row(r) = y.row(r).array() * (dy.row(r).array() - dot);
      }
      break;
    case ActivationKind::Clamp:
      dz = (z.array() > a.lo && z.array() < a.hi).select(dy, 0.0);
      break;
  }
}

inline void apply_head(const Layer& l, const Matrix& pre, Matrix& post) {
  post.resize(pre.rows(), pre.cols());
  Index col = 0;
  for (const auto& seg : l.head) {
    activate(seg.activation, pre.middleCols(col, seg.width), post.middleCols(col, seg.width));
    col += seg.width;
  }
}

}  // namespace detail

// Inference pass; `theta` selects a Monte-Carlo dropout sample, null disables
// dropout.
inline Matrix forward(const DenseNet& net, const Matrix& x, const ThetaSample* theta = nullptr) {
  if (x.cols() != net.input_width())
    throw ShapeError("input width " + std::to_string(x.cols()) + " != " + std::to_string(net.input_width()));
  Matrix a = x;
  Matrix pre;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    pre.noalias() = a * l.weight.transpose();
    pre.rowwise() += l.bias.transpose();
    detail::apply_head(l, pre, a);
    if (theta && theta->masks[i].size() > 0) a.array().rowwise() *= theta->masks[i].array();
  }
  return a;
}

inline Vector forward_one(const DenseNet& net, const Vector& x) {
  return forward(net, Matrix(x.transpose())).row(0).transpose();
}

struct ForwardResult {
  Matrix output;
  Tape tape;
};

// Recording pass. PerRow draws an independent dropout mask for every row;
// Shared uses one mask (from `theta` if given, else drawn) for the batch.
inline ForwardResult forward_tape(const DenseNet& net, const Matrix& x, DropoutMode mode = DropoutMode::Off,
                                  Rng* rng = nullptr, const ThetaSample* theta = nullptr) {
  if (x.cols() != net.input_width())
    throw ShapeError("input width " + std::to_string(x.cols()) + " != " + std::to_string(net.input_width()));
  if (mode != DropoutMode::Off && !theta && !rng && net.has_dropout())
    throw std::invalid_argument("dropout needs a random generator");
  ForwardResult r;
  Matrix a = x;
  ThetaSample drawn;
  if (mode == DropoutMode::Shared && !theta) {
    drawn = sample_theta(net, *rng);
    theta = &drawn;
  }
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    LayerRecord rec;
    rec.input = std::move(a);
    rec.pre.noalias() = rec.input * l.weight.transpose();
    rec.pre.rowwise() += l.bias.transpose();
    detail::apply_head(l, rec.pre, rec.post);
    a = rec.post;
    if (l.dropout > 0.0 && mode == DropoutMode::PerRow) {
      const double keep = 1.0 - l.dropout;
      rec.mask.resize(a.rows(), a.cols());
      for (Index c = 0; c < a.cols(); ++c)
        for (Index row = 0; row < a.rows(); ++row) rec.mask(row, c) = uniform01(*rng) < keep ? 1.0 / keep : 0.0;
      a.array() *= rec.mask.array();
    } else if (l.dropout > 0.0 && mode == DropoutMode::Shared) {
      rec.mask = theta->masks[i];
      a.array().rowwise() *= theta->masks[i].array();
    }
    r.tape.layers.push_back(std::move(rec));
  }
  r.output = std::move(a);
  return r;
}

struct LayerGrad {
  Matrix weight;
  Vector bias;
};

struct Gradients {
  std::vector<LayerGrad> layers;

  static Gradients zeros_like(const DenseNet& net) {
    Gradients g;
    for (const auto& l : net.layers())
      g.layers.push_back({Matrix::Zero(l.out(), l.in()), Vector::Zero(l.out())});
    return g;
  }
  Gradients& operator+=(const Gradients& o) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += o.layers[i].weight;
      layers[i].bias += o.layers[i].bias;
    }
    return *this;
  }
  Gradients& operator*=(double s) {
    for (auto& l : layers) {
      l.weight *= s;
      l.bias *= s;
    }
    return *this;
  }
  double squared_norm() const {
    double n = 0.0;
    for (const auto& l : layers) n += l.weight.squaredNorm() + l.bias.squaredNorm();
    return n;
  }
  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }
};

struct BackwardResult {
  Gradients grads;
  Matrix input_grad;
};

// Gradients of a scalar loss given d(loss)/d(output). A tape can be consumed
// once.
inline BackwardResult backward(const DenseNet& net, Tape& tape, const Matrix& output_grad) {
  tape.consume();
  if (tape.layers.size() != net.layers().size()) throw ShapeError("tape does not match network");
  BackwardResult r;
  r.grads.layers.resize(net.layers().size());
  Matrix d = output_grad;
  Matrix dz;
  for (std::size_t k = net.layers().size(); k-- > 0;) {
    const auto& l = net.layers()[k];
    const auto& rec = tape.layers[k];
    if (d.rows() != rec.post.rows() || d.cols() != rec.post.cols()) throw ShapeError("output gradient shape mismatch");
    if (rec.mask.size() > 0) {
      if (rec.mask.rows() == 1)
        d.array().rowwise() *= rec.mask.row(0).array();
      else
        d.array() *= rec.mask.array();
    }
    dz.resize(d.rows(), d.cols());
    Index col = 0;
    for (const auto& seg : l.head) {
      detail::activate_backward(seg.activation, rec.pre.middleCols(col, seg.width),
                                rec.post.middleCols(col, seg.width), d.middleCols(col, seg.width),
                                dz.middleCols(col, seg.width));
      col += seg.width;
    }
    r.grads.layers[k].weight.noalias() = dz.transpose() * rec.input;
    r.grads.layers[k].bias = dz.colwise().sum().transpose();
    d.noalias() = dz * l.weight;
  }
  r.input_grad = std::move(d);
  return r;
}

}  // namespace aif::nn
