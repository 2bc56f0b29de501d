#pragma once

#include "aif/nn/dense.hpp"

#include <cmath>

namespace aif::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double max_grad_norm = 0.0;  // 0 disables global-norm clipping
};

struct AdamState {
  Gradients first;
  Gradients second;
  long step = 0;

  static AdamState for_net(const DenseNet& net) {
    return {Gradients::zeros_like(net), Gradients::zeros_like(net), 0};
  }
};

// Bias-corrected Adam update.
inline void adam_step(DenseNet& net, const Gradients& grads, AdamState& state, const AdamConfig& cfg) {
  double clip = 1.0;
  if (cfg.max_grad_norm > 0.0) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > cfg.max_grad_norm) clip = cfg.max_grad_norm / norm;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * clip * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * (clip * g).cwiseAbs2();
    param.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  };
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    auto& l = net.layers()[i];
    update(l.weight, grads.layers[i].weight, state.first.layers[i].weight, state.second.layers[i].weight);
    update(l.bias, grads.layers[i].bias, state.first.layers[i].bias, state.second.layers[i].bias);
  }
}

}  // namespace aif::nn
