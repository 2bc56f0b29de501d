#pragma once

// Action selection: EFE planners, habit blending and precision feedback.

#include "aif/config_file.hpp"
#include "aif/efe.hpp"
#include "aif/nn/prob.hpp"
#include "aif/plan/mcts.hpp"
#include "aif/rng.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace aif::plan {

using efe::EfeEstimate;
using efe::EfeModel;
using nn::Matrix;

enum class PlannerKind { Repeated, LightRollout, Mcts };

inline PlannerKind parse_planner_kind(const std::string& s) {
  if (s == "repeated") return PlannerKind::Repeated;
  if (s == "rollout") return PlannerKind::LightRollout;
  if (s == "mcts") return PlannerKind::Mcts;
  throw ConfigError("unknown planner kind: " + s);
}

inline const char* to_string(PlannerKind k) {
  switch (k) {
    case PlannerKind::Repeated: return "repeated";
    case PlannerKind::LightRollout: return "rollout";
    case PlannerKind::Mcts: return "mcts";
  }
  return "?";
}

struct PrecisionParams {
  double alpha = 1.0;
  double b = 1.0;
  double c = 0.3;
  double d = 0.5;
};

struct PlannerConfig {
  PlannerKind kind = PlannerKind::Repeated;
  double gamma = 0.05;
  double c_explore = 0.5;
  double t_dec = 0.25;
  int mcts_budget = 60;
  int rollout_depth = 3;
  int rollout_loops = 1;
  int plan_blocks = 1;  // depth-s transitions chained by the repeated-action planner
  PrecisionParams precision;
  efe::EfeConfig efe;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
    if (!(c_explore >= 0.0 && c_explore <= 1.0)) throw std::invalid_argument("c_explore must be in [0, 1]");
    if (!(t_dec >= 0.0 && t_dec <= 1.0)) throw std::invalid_argument("t_dec must be in [0, 1]");
    if (mcts_budget < 1 || rollout_depth < 1 || rollout_loops < 1 || plan_blocks < 1)
      throw std::invalid_argument("planner counts must be >= 1");
    if (!(precision.alpha > 0.0)) throw std::invalid_argument("precision alpha must be > 0");
    if (!(precision.c > 0.0)) throw std::invalid_argument("precision c must be > 0");
    if (!(precision.d > 0.0)) throw std::invalid_argument("precision d must be > 0");
    efe.validate();
  }

  void read(const KeyValues& kv, const std::string& prefix = "planner.") {
    std::string kind_name;
    kv.read(prefix + "kind", kind_name);
    if (!kind_name.empty()) kind = parse_planner_kind(kind_name);
    kv.read(prefix + "gamma", gamma);
    kv.read(prefix + "c_explore", c_explore);
    kv.read(prefix + "t_dec", t_dec);
    kv.read(prefix + "mcts_budget", mcts_budget);
    kv.read(prefix + "rollout_depth", rollout_depth);
    kv.read(prefix + "rollout_loops", rollout_loops);
    kv.read(prefix + "plan_blocks", plan_blocks);
    kv.read(prefix + "alpha", precision.alpha);
    kv.read(prefix + "b", precision.b);
    kv.read(prefix + "c", precision.c);
    kv.read(prefix + "d", precision.d);
    kv.read(prefix + "n_theta", efe.sampling.n_theta);
    kv.read(prefix + "n_state", efe.sampling.n_state);
    kv.read(prefix + "n_obs", efe.sampling.n_obs);
    kv.read(prefix + "reward_floor", efe.reward_floor);
    kv.read(prefix + "accumulate_trajectory", efe.accumulate_trajectory);
  }
};

// omega = alpha / (1 + exp(-(b - D) / c)) + d
inline double precision_update(double d_prev, const PrecisionParams& p) {
  if (p.c == 0.0) throw std::invalid_argument("precision c must be nonzero");
  if (!(d_prev >= 0.0)) throw std::invalid_argument("divergence must be >= 0");
  return p.alpha / (1.0 + std::exp(-(p.b - d_prev) / p.c)) + p.d;
}

// KL[habit || planner], planner floored at 1e-6 and renormalized.
inline double habit_divergence(const Vector& habit, const Vector& planner) {
  if (habit.size() != planner.size()) throw std::invalid_argument("distribution sizes differ");
  return nn::kl_categorical(habit, planner, 1e-6);
}

inline Vector hybrid_policy(const Vector& habit, const Vector& planner, double gamma) {
  if (habit.size() != planner.size()) throw std::invalid_argument("distribution sizes differ");
  if (gamma == 1.0) return habit;
  if (gamma == 0.0) return planner;
  return gamma * habit + (1.0 - gamma) * planner;
}

inline Vector efe_distribution(const Vector& g) { return nn::softmax(-g); }

inline int select_action(const Vector& dist, Rng& rng) {
  if (dist.size() == 0) throw std::invalid_argument("empty distribution");
  const double u = uniform01(rng) * dist.sum();
  double acc = 0.0;
  for (Index a = 0; a < dist.size(); ++a) {
    acc += dist(a);
    if (u < acc) return static_cast<int>(a);
  }
  for (Index a = dist.size(); a-- > 0;)
    if (dist(a) > 0.0) return static_cast<int>(a);
  return static_cast<int>(dist.size() - 1);
}

struct PlanResult {
  Vector g;                          // per-action G
  Vector distribution;               // planner P(a)
  std::vector<EfeEstimate> terms;    // per-action terms of the first step, when available
  int loops = 0;
  bool stopped_early = false;
};

template <EfeModel M>
Vector repeated_block(const M& m, int action) {
  return Vector::Constant(m.depth(), action / static_cast<double>(m.n_actions() - 1));
}

// Each action gets its own RNG stream derived from `seed`.
template <EfeModel M>
PlanResult repeated_action_plan(const M& m, const Vector& s0, double omega, const PlannerConfig& cfg,
                                std::uint64_t seed) {
  const int n = m.n_actions();
  PlanResult out;
  out.g.resize(n);
  for (int a = 0; a < n; ++a) {
    Rng rng(stream_seed(seed, static_cast<std::uint64_t>(a)));
    const std::vector<Vector> blocks(static_cast<std::size_t>(cfg.plan_blocks), repeated_block(m, a));
    out.terms.push_back(efe::efe_policy(m, s0, blocks, omega, cfg.efe, rng));
    out.g(a) = out.terms.back().total;
  }
  out.distribution = efe_distribution(out.g);
  out.loops = 1;
  return out;
}

template <EfeModel M>
Vector habit_at_latent(const M& m, const Vector& latent, Rng& rng) {
  const auto d = m.decode(Matrix(latent.transpose()), nullptr);
  return m.habit(efe::sample_observations(d, rng).row(0).transpose());
}

// Continuation distribution of a light rollout:
// (1 - c) * habit + c * softmax(log P(o)) over one-step lookaheads.
template <EfeModel M>
Vector rollout_continuation(const M& m, const Vector& latent, double omega, const PlannerConfig& cfg, Rng& rng) {
  const int n = m.n_actions();
  Vector habit = Vector::Constant(n, 1.0 / n);
  if (cfg.c_explore < 1.0) habit = habit_at_latent(m, latent, rng);
  if (cfg.c_explore == 0.0) return habit;
  Matrix from = latent.transpose().replicate(n, 1);
  Matrix actions(n, m.depth());
  for (int a = 0; a < n; ++a) actions.row(a) = repeated_block(m, a).transpose();
  const auto prior = m.transition(from, actions, omega, nullptr);
  const auto d = m.decode(prior.mean, nullptr);
  const Vector log_pref = d.rewards.col(d.rewards.cols() - 1).array().max(cfg.efe.reward_floor).min(1.0).log();
  const Vector explore = nn::softmax(log_pref);
  if (cfg.c_explore == 1.0) return explore;
  return (1.0 - cfg.c_explore) * habit + cfg.c_explore * explore;
}

template <EfeModel M>
PlanResult light_rollout_plan(const M& m, const Vector& s0, double omega, const PlannerConfig& cfg,
                              std::uint64_t seed) {
  const int n = m.n_actions();
  PlanResult out;
  out.g = Vector::Zero(n);
  for (int a = 0; a < n; ++a) {
    Rng rng(stream_seed(seed, static_cast<std::uint64_t>(a)));
    for (int loop = 0; loop < cfg.rollout_loops; ++loop) {
      auto step = efe::efe_step(m, s0, repeated_block(m, a), omega, cfg.efe, rng);
      if (loop == 0) out.terms.push_back(step.estimate);
      double g = step.estimate.total;
      Vector s = std::move(step.next_latent);
      for (int tau = 1; tau < cfg.rollout_depth; ++tau) {
        const int next = select_action(rollout_continuation(m, s, omega, cfg, rng), rng);
        step = efe::efe_step(m, s, repeated_block(m, next), omega, cfg.efe, rng);
        g += step.estimate.total;
        s = std::move(step.next_latent);
      }
      out.g(a) += g / cfg.rollout_loops;
    }
  }
  out.distribution = efe_distribution(out.g);
  out.loops = cfg.rollout_loops;
  return out;
}

template <EfeModel M>
PlanResult mcts_plan(const M& m, const Vector& s0, const Vector& root_habit, double omega, const PlannerConfig& cfg,
                     Rng& rng) {
  MctsSettings s{m.n_actions(), cfg.mcts_budget, cfg.rollout_depth, cfg.c_explore, cfg.t_dec};
  auto evaluate = [&](const Vector& latent, int action, Rng& r) {
    auto step = efe::efe_step(m, latent, repeated_block(m, action), omega, cfg.efe, r);
    return MctsEdge{std::move(step.next_latent), step.estimate.total};
  };
  auto habit = [&](const Vector& latent, int) { return habit_at_latent(m, latent, rng); };
  const auto r = mcts_search(s0, root_habit, s, evaluate, habit, rng);
  PlanResult out;
  out.g = r.g_mean;
  out.distribution = r.distribution;
  out.loops = r.loops;
  out.stopped_early = r.stopped_early;
  return out;
}

// ---------------------------------------------------------------------------
// One decision epoch.

struct Decision {
  int action = 0;
  Vector habit;
  Vector hybrid;
  PlanResult plan;
  double divergence = 0.0;
  double omega = 1.0;       // precision used for this decision
  double next_omega = 1.0;  // precision for the next one
};

template <EfeModel M>
Decision decide(const M& m, const Vector& obs, double omega, const PlannerConfig& cfg, Rng& rng) {
  Decision d;
  d.omega = omega;
  const auto posterior = m.encode(Matrix(obs.transpose()));
  const Vector s0 = nn::reparameterize(posterior.mean.row(0).transpose(), posterior.variance.row(0).transpose(), rng);
  d.habit = m.habit(obs);
  switch (cfg.kind) {
    case PlannerKind::Repeated: d.plan = repeated_action_plan(m, s0, omega, cfg, rng()); break;
    case PlannerKind::LightRollout: d.plan = light_rollout_plan(m, s0, omega, cfg, rng()); break;
    case PlannerKind::Mcts: d.plan = mcts_plan(m, s0, d.habit, omega, cfg, rng); break;
  }
  d.hybrid = hybrid_policy(d.habit, d.plan.distribution, cfg.gamma);
  d.action = select_action(d.hybrid, rng);
  d.divergence = habit_divergence(d.habit, d.hybrid);
  d.next_omega = precision_update(d.divergence, cfg.precision);
  return d;
}

// Decision log: time, action, P(a) per action, G per action, D_t, omega_t.
inline void write_decision_header(std::ostream& os, int n_actions) {
  os << "time,action";
  for (int a = 0; a < n_actions; ++a) os << ",p" << a;
  for (int a = 0; a < n_actions; ++a) os << ",g" << a;
  os << ",divergence,omega\n";
}

inline void write_decision_row(std::ostream& os, double time, const Decision& d) {
  os << time << ',' << d.action;
  for (Index a = 0; a < d.hybrid.size(); ++a) os << ',' << d.hybrid(a);
  for (Index a = 0; a < d.plan.g.size(); ++a) os << ',' << d.plan.g(a);
  os << ',' << d.divergence << ',' << d.omega << '\n';
}

}  // namespace aif::plan
