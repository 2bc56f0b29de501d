#pragma once

// Sectioned experiment configuration: sim, preference, agent, planner,
// trainer and run. Unknown keys are rejected; the resolved form lists every
// value and round-trips exactly.

#include "aif/config_file.hpp"
#include "aif/model/generative_model.hpp"
#include "aif/plan/planner.hpp"
#include "aif/preference.hpp"
#include "aif/sim/observation.hpp"
#include "aif/sim/workstation.hpp"
#include "aif/train/trainer.hpp"

#include <charconv>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace aif::harness {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kInvalidConfig = 2,
  kMissingCheckpoint = 3,
  kUnwritableOutput = 4,
  kMalformedCsv = 5,
  kReproductionMismatch = 6,
};

class HarnessError : public std::runtime_error {
 public:
  HarnessError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

inline std::vector<double> parse_number_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(token, &pos));
      while (pos < token.size() && token[pos] == ' ') ++pos;
      if (pos != token.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("bad number list for " + key + ": " + text);
    }
  }
  if (out.empty()) throw ConfigError("empty number list for " + key);
  return out;
}

struct RunSection {
  std::uint64_t seed = 1;
  std::string out = "results";
  std::string checkpoint;  // checkpoint stem; empty means <out>/agent
  bool calibrate_t_max = true;
  double calibration_horizon = 14400.0;
  int calibration_replications = 5;
  int fixed_k = 3;
  std::string sweep_gamma = "0,0.05,0.5,1";
  std::string sweep_depth = "1,90";
  bool log_decisions = true;  // decision and EFE term logs for the first evaluation seed

  void validate() const {
    if (out.empty()) throw std::invalid_argument("run.out must not be empty");
    if (!(calibration_horizon > 0.0) || calibration_replications < 1)
      throw std::invalid_argument("calibration settings must be positive");
    for (double g : parse_number_list("run.sweep_gamma", sweep_gamma))
      if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("sweep gamma values must be in [0, 1]");
    for (double s : parse_number_list("run.sweep_depth", sweep_depth))
      if (s < 1.0 || s != static_cast<int>(s)) throw std::invalid_argument("sweep depths must be positive integers");
  }

  void read(const KeyValues& kv, const std::string& prefix = "run.") {
    kv.read(prefix + "seed", seed);
    kv.read(prefix + "out", out);
    kv.read(prefix + "checkpoint", checkpoint);
    kv.read(prefix + "calibrate_t_max", calibrate_t_max);
    kv.read(prefix + "calibration_horizon", calibration_horizon);
    kv.read(prefix + "calibration_replications", calibration_replications);
    kv.read(prefix + "fixed_k", fixed_k);
    kv.read(prefix + "sweep_gamma", sweep_gamma);
    kv.read(prefix + "sweep_depth", sweep_depth);
    kv.read(prefix + "log_decisions", log_decisions);
  }
};

struct ExperimentConfig {
  sim::SimConfig sim;
  pref::PreferenceConfig preference;
  model::ModelConfig agent;
  plan::PlannerConfig planner;
  train::TrainSchedule trainer;
  RunSection run;

  ExperimentConfig() {
    agent.transition_depth = 90;
    sync_layout();
  }

  // Observation layout and machine count follow the simulator.
  void sync_layout() {
    const auto layout = sim::ObservationLayout::of(sim);
    agent.n_binary = layout.n_binary();
    agent.n_reward = layout.n_reward();
    agent.n_machines = sim.n_machines;
  }

  void validate() const {
    sim.validate();
    preference.validate();
    agent.validate();
    planner.validate();
    trainer.validate();
    run.validate();
    if (run.fixed_k < 0 || run.fixed_k > sim.n_machines) throw std::invalid_argument("run.fixed_k out of range");
  }

  static ExperimentConfig from_key_values(const KeyValues& kv) {
    ExperimentConfig c;
    try {
      c.sim.read(kv, "sim.");
      const bool explicit_e_max = kv.contains("preference.e_max");
      c.preference.read(kv, "preference.");
      if (!explicit_e_max && c.sim.n_machines >= 1) c.preference.e_max = pref::e_max(c.sim);
      c.agent.read(kv, "agent.");
      c.planner.read(kv, "planner.");
      c.trainer.read(kv, "trainer.");
      c.run.read(kv, "run.");
      kv.reject_unknown();
      c.sync_layout();
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return c;
  }

  static ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides = {}) {
    auto kv = KeyValues::load(path);
    for (const auto& o : overrides) kv.apply_override(o);
    return from_key_values(kv);
  }

  static ExperimentConfig parse(const std::string& text, const std::vector<std::string>& overrides = {}) {
    std::istringstream in(text);
    auto kv = KeyValues::parse(in);
    for (const auto& o : overrides) kv.apply_override(o);
    return from_key_values(kv);
  }
};

// Shortest text that parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline std::string format_number(std::uint64_t v) { return std::to_string(v); }
inline std::string format_number(int v) { return std::to_string(v); }

using Section = std::vector<std::pair<std::string, std::string>>;

inline std::vector<std::pair<std::string, Section>> resolved_sections(const ExperimentConfig& c) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  auto n = [](auto v) { return format_number(v); };
  std::string hidden;
  for (std::size_t i = 0; i < c.agent.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(c.agent.hidden[i]);
  const auto& s = c.sim;
  const auto& p = c.planner;
  const auto& t = c.trainer;
  return {
      {"sim",
       {{"n_machines", n(s.n_machines)}, {"buffer_capacity", n(s.buffer_capacity)}, {"lambda", n(s.lambda)},
        {"mu", n(s.mu)}, {"delta", n(s.delta)}, {"psi", n(s.psi)}, {"xi", n(s.xi)}, {"w_busy", n(s.w_busy)},
        {"w_startup", n(s.w_startup)}, {"w_idle", n(s.w_idle)}, {"w_standby", n(s.w_standby)},
        {"w_failed", n(s.w_failed)}, {"decision_stride", n(s.decision_stride)},
        {"history_interval", n(s.history_interval)}, {"history_span", n(s.history_span)}}},
      {"preference",
       {{"phi_weight", n(c.preference.phi_weight)}, {"t_s", n(c.preference.t_s)}, {"t_max", n(c.preference.t_max)},
        {"e_max", n(c.preference.e_max)}}},
      {"agent",
       {{"latent_dim", n(c.agent.latent_dim)}, {"hidden", hidden}, {"lambda_s", n(c.agent.lambda_s)},
        {"dropout", n(c.agent.dropout)}, {"transition_depth", n(c.agent.transition_depth)},
        {"habit_temperature", n(c.agent.habit_temperature)}}},
      {"planner",
       {{"kind", plan::to_string(p.kind)}, {"gamma", n(p.gamma)}, {"c_explore", n(p.c_explore)},
        {"t_dec", n(p.t_dec)}, {"mcts_budget", n(p.mcts_budget)}, {"rollout_depth", n(p.rollout_depth)},
        {"rollout_loops", n(p.rollout_loops)}, {"plan_blocks", n(p.plan_blocks)}, {"alpha", n(p.precision.alpha)},
        {"b", n(p.precision.b)}, {"c", n(p.precision.c)}, {"d", n(p.precision.d)},
        {"n_theta", n(p.efe.sampling.n_theta)}, {"n_state", n(p.efe.sampling.n_state)},
        {"n_obs", n(p.efe.sampling.n_obs)}, {"reward_floor", n(p.efe.reward_floor)},
        {"accumulate_trajectory", b(p.efe.accumulate_trajectory)}}},
      {"trainer",
       {{"epochs", n(t.epochs)}, {"steps_per_epoch", n(t.steps_per_epoch)}, {"batch_size", n(t.batch_size)},
        {"eval_every", n(t.eval_every)}, {"eval_replications", n(t.eval_replications)},
        {"early_stop_factor", n(t.early_stop_factor)}, {"eval_minutes", n(t.eval_minutes)},
        {"warmup_all_on", n(t.warmup_all_on)}, {"warmup_random", n(t.warmup_random)},
        {"replay_capacity", n(t.replay_capacity)}, {"discount", n(t.discount)},
        {"target_refresh", n(t.target_refresh)}, {"learning_rate", n(t.model_adam.lr)},
        {"habit_learning_rate", n(t.habit_adam.lr)}, {"max_grad_norm", n(t.model_adam.max_grad_norm)},
        {"transition_mode", t.mode == train::TransitionMode::OneStep ? "one_step" : "multi_step"},
        {"threads", n(t.threads)}}},
      {"run",
       {{"seed", n(c.run.seed)}, {"out", c.run.out}, {"checkpoint", c.run.checkpoint},
        {"calibrate_t_max", b(c.run.calibrate_t_max)}, {"calibration_horizon", n(c.run.calibration_horizon)},
        {"calibration_replications", n(c.run.calibration_replications)}, {"fixed_k", n(c.run.fixed_k)},
        {"sweep_gamma", c.run.sweep_gamma}, {"sweep_depth", c.run.sweep_depth},
        {"log_decisions", b(c.run.log_decisions)}}},
  };
}

inline void write_resolved(std::ostream& os, const ExperimentConfig& c) {
  bool first = true;
  for (const auto& [name, entries] : resolved_sections(c)) {
    if (!first) os << '\n';
    first = false;
    os << '[' << name << "]\n";
    for (const auto& [key, value] : entries) os << key << " = " << value << '\n';
  }
}

inline std::string resolved_text(const ExperimentConfig& c) {
  std::ostringstream os;
  write_resolved(os, c);
  return os.str();
}

}  // namespace aif::harness
