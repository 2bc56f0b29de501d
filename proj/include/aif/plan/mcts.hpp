#pragma once

// Monte-Carlo tree search over latent states. Edge scores are expected free
// energies, so lower is better and selection uses -G.

#include "aif/nn/dense.hpp"
#include "aif/rng.hpp"

#include <cmath>
#include <concepts>
#include <memory>
#include <stdexcept>
#include <vector>

namespace aif::plan {

using nn::Index;
using nn::Vector;

struct MctsSettings {
  int n_actions = 7;
  int budget = 60;
  int max_depth = 3;
  double c_explore = 0.5;
  double t_dec = 0.25;
};

struct MctsEdge {
  Vector next_latent;
  double g = 0.0;
};

struct MctsNode {
  Vector latent;
  Vector prior;    // habit distribution at this node
  Vector visits;   // N(s, a)
  Vector g_mean;   // running mean of the accumulated G through (s, a)
  Vector edge_g;   // G of the edge itself, scored once on expansion
  std::vector<std::unique_ptr<MctsNode>> children;

  MctsNode(Vector s, Vector p) : latent(std::move(s)), prior(std::move(p)) {
    const Index n = prior.size();
    visits = Vector::Zero(n);
    g_mean = Vector::Zero(n);
    edge_g = Vector::Zero(n);
    children.resize(static_cast<std::size_t>(n));
  }

  double total_visits() const { return visits.sum(); }
};

struct MctsResult {
  Vector distribution;  // N(s0, a) / sum_j N(s0, j)
  Vector g_mean;        // root running means
  Vector visits;
  int loops = 0;
  bool stopped_early = false;
};

// max P - mean P, the confidence of the visit distribution.
inline double visit_margin(const Vector& visits) {
  const double total = visits.sum();
  if (total <= 0.0) return 0.0;
  const Vector p = visits / total;
  return p.maxCoeff() - p.mean();
}

// `evaluate(latent, action, rng) -> MctsEdge` scores one transition;
// `habit(latent, depth) -> Vector` gives the prior over actions at a node.
template <typename Evaluate, typename Habit>
  requires std::invocable<Evaluate&, const Vector&, int, Rng&> && std::invocable<Habit&, const Vector&, int>
MctsResult mcts_search(const Vector& root_latent, const Vector& root_prior, const MctsSettings& s, Evaluate&& evaluate,
                       Habit&& habit, Rng& rng) {
  if (s.n_actions < 1 || root_prior.size() != s.n_actions) throw std::invalid_argument("bad action count");
  if (s.budget < s.n_actions) throw std::invalid_argument("MCTS budget must cover every root action");
  if (s.max_depth < 1) throw std::invalid_argument("MCTS depth must be >= 1");

  MctsNode root(root_latent, root_prior);
  MctsResult out;
  struct Step {
    MctsNode* node;
    int action;
  };
  std::vector<Step> path;
  for (int loop = 0; loop < s.budget; ++loop) {
    path.clear();
    MctsNode* node = &root;
    for (int depth = 0; depth < s.max_depth; ++depth) {
      int action = -1;
      for (int a = 0; a < s.n_actions; ++a)
        if (node->visits(a) == 0.0) {
          action = a;
          break;
        }
      if (action >= 0) {
        MctsEdge e = evaluate(node->latent, action, rng);
        node->edge_g(action) = e.g;
        Vector prior = depth + 1 < s.max_depth ? Vector(habit(e.next_latent, depth + 1)) : Vector(node->prior);
        node->children[static_cast<std::size_t>(action)] = std::make_unique<MctsNode>(std::move(e.next_latent), std::move(prior));
        path.push_back({node, action});
        break;
      }
      double best = -INFINITY;
      for (int a = 0; a < s.n_actions; ++a) {
        const double u = -node->g_mean(a) + s.c_explore * node->prior(a) / (1.0 + node->visits(a));
        if (u > best) {
          best = u;
          action = a;
        }
      }
      path.push_back({node, action});
      node = node->children[static_cast<std::size_t>(action)].get();
    }

    double value = 0.0;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      value += it->node->edge_g(it->action);
      auto& n = it->node->visits(it->action);
      auto& m = it->node->g_mean(it->action);
      n += 1.0;
      m += (value - m) / n;
    }
    out.loops = loop + 1;
    if ((root.visits.array() > 0.0).all() && visit_margin(root.visits) > s.t_dec) {
      out.stopped_early = out.loops < s.budget;
      break;
    }
  }
  out.visits = root.visits;
  out.g_mean = root.g_mean;
  out.distribution = root.visits / root.visits.sum();
  return out;
}

}  // namespace aif::plan
