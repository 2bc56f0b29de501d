#pragma once

// Warm-up, on-policy training, evaluation and early stopping.

#include "aif/config_file.hpp"
#include "aif/efe.hpp"
#include "aif/model/generative_model.hpp"
#include "aif/plan/planner.hpp"
#include "aif/preference.hpp"
#include "aif/rng.hpp"
#include "aif/sim/observation.hpp"
#include "aif/sim/workstation.hpp"
#include "aif/train/replay.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace aif::train {

enum class TransitionMode { MultiStep, OneStep };

struct TrainSchedule {
  int epochs = 40;
  int steps_per_epoch = 2000;
  int batch_size = 32;
  int eval_every = 2;
  int eval_replications = 10;
  double early_stop_factor = 3.0;
  double eval_minutes = 1440.0;
  double warmup_all_on = 1440.0;
  double warmup_random = 1440.0;
  int replay_capacity = 200;
  double discount = 0.99;
  int target_refresh = 50;
  nn::AdamConfig model_adam;
  nn::AdamConfig habit_adam;
  TransitionMode mode = TransitionMode::MultiStep;
  int threads = 1;

  void validate() const {
    if (epochs < 1 || steps_per_epoch < 1 || batch_size < 1 || eval_every < 1 || eval_replications < 1)
      throw std::invalid_argument("schedule counts must be >= 1");
    if (!(early_stop_factor > 0.0)) throw std::invalid_argument("early_stop_factor must be > 0");
    if (!(eval_minutes > 0.0) || warmup_all_on < 0.0 || warmup_random < 0.0)
      throw std::invalid_argument("schedule durations must be positive");
    if (replay_capacity < 1) throw std::invalid_argument("replay_capacity must be >= 1");
    if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("discount must be in [0, 1)");
    if (target_refresh < 1) throw std::invalid_argument("target_refresh must be >= 1");
    if (model_adam.lr < 0.0 || habit_adam.lr < 0.0) throw std::invalid_argument("learning rates must be >= 0");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  }

  void read(const KeyValues& kv, const std::string& prefix = "trainer.") {
    kv.read(prefix + "epochs", epochs);
    kv.read(prefix + "steps_per_epoch", steps_per_epoch);
    kv.read(prefix + "batch_size", batch_size);
    kv.read(prefix + "eval_every", eval_every);
    kv.read(prefix + "eval_replications", eval_replications);
    kv.read(prefix + "early_stop_factor", early_stop_factor);
    kv.read(prefix + "eval_minutes", eval_minutes);
    kv.read(prefix + "warmup_all_on", warmup_all_on);
    kv.read(prefix + "warmup_random", warmup_random);
    kv.read(prefix + "replay_capacity", replay_capacity);
    kv.read(prefix + "discount", discount);
    kv.read(prefix + "target_refresh", target_refresh);
    kv.read(prefix + "learning_rate", model_adam.lr);
    kv.read(prefix + "habit_learning_rate", habit_adam.lr);
    kv.read(prefix + "max_grad_norm", model_adam.max_grad_norm);
    std::string mode_name;
    kv.read(prefix + "transition_mode", mode_name);
    if (mode_name == "one_step") mode = TransitionMode::OneStep;
    else if (mode_name == "multi_step") mode = TransitionMode::MultiStep;
    else if (!mode_name.empty()) throw ConfigError("unknown transition_mode: " + mode_name);
    kv.read(prefix + "threads", threads);
  }
};

struct Agent {
  model::AgentParams params;
  model::TrainingState opt;
  double omega = 1.0;

  static Agent create(const model::ModelConfig& c, const plan::PrecisionParams& precision, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0xA9E);
    Agent a;
    a.params = model::AgentParams::init(c, rng);
    a.opt = model::TrainingState::for_params(a.params);
    a.omega = plan::precision_update(0.0, precision);
    return a;
  }
};

// ---------------------------------------------------------------------------
// Controllers drive a simulator one event at a time.

using Controller = std::function<int(const sim::SimState&, const Vector& obs, Rng&)>;

inline Controller all_on_controller() {
  return [](const sim::SimState& s, const Vector&, Rng&) { return s.config.n_machines; };
}

inline Controller random_controller() {
  return [](const sim::SimState& s, const Vector&, Rng& rng) {
    return static_cast<int>(rng() % static_cast<std::uint64_t>(s.config.n_machines + 1));
  };
}

inline Controller fixed_k_controller(int k) {
  return [k](const sim::SimState&, const Vector&, Rng&) { return k; };
}

// Frozen agent with its own precision state.
inline Controller agent_controller(const model::AgentParams& params, const plan::PlannerConfig& cfg) {
  return [model = efe::NetworkModel(params), cfg, omega = plan::precision_update(0.0, cfg.precision)](
             const sim::SimState&, const Vector& obs, Rng& rng) mutable {
    const auto d = plan::decide(model, obs, omega, cfg, rng);
    omega = d.next_omega;
    return d.action;
  };
}

// Applies `action` and holds it for `decision_stride` events (fewer if the
// clock reaches `until`). Each event becomes one replay record. Returns the
// observation after the last event.
inline Vector act_and_hold(sim::SimState& s, const pref::PreferenceConfig& pc, Vector obs, int action, double until,
                           ReplayBuffer* replay = nullptr) {
  sim::apply_action(s, action);
  for (int k = 0; k < s.config.decision_stride; ++k) {
    if (k > 0 && s.clock >= until) break;
    sim::advance_to_next_event(s);
    Vector next = sim::observe(s, pc);
    if (replay) replay->push(std::move(obs), action, next);
    obs = std::move(next);
  }
  return obs;
}

// Steps until the clock reaches `until`; one decision per decision epoch.
inline void run_until(sim::SimState& s, const pref::PreferenceConfig& pc, const Controller& control, double until,
                      Rng& rng, ReplayBuffer* replay = nullptr) {
  while (s.clock < until) {
    Vector obs = sim::observe(s, pc);
    const int a = control(s, obs, rng);
    act_and_hold(s, pc, std::move(obs), a, until, replay);
  }
}

// One day ALL-ON, then one day of the random policy. Transitions of the
// random day go to `replay` when given.
inline sim::SimState warmup_system(const sim::SimConfig& config, const pref::PreferenceConfig& pc,
                                   const TrainSchedule& sched, std::uint64_t seed, ReplayBuffer* replay = nullptr) {
  auto s = sim::init_sim(config, seed);
  Rng rng = make_rng(seed, 0x3A7);
  run_until(s, pc, all_on_controller(), sched.warmup_all_on, rng);
  run_until(s, pc, random_controller(), sched.warmup_all_on + sched.warmup_random, rng, replay);
  return s;
}

// ---------------------------------------------------------------------------
// Training.

struct EpochMetrics {
  int epoch = 0;
  double vfe = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double q_loss = 0.0;
  double mean_reward = 0.0;
  double mean_divergence = 0.0;
  double omega = 0.0;
  int steps = 0;
  int vfe_updates = 0;
  double seconds = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepTrace {
  double time = 0.0;
  const plan::Decision* decision = nullptr;
};

using StepObserver = std::function<void(const StepTrace&)>;

inline EpochMetrics train_epoch(Agent& agent, sim::SimState& s, ReplayBuffer& replay, const plan::PlannerConfig& cfg,
                                const TrainSchedule& sched, const pref::PreferenceConfig& pc, Rng& rng,
                                const StepObserver& observer = {}) {
  const auto& mc = agent.params.config;
  if (sched.mode == TransitionMode::OneStep && mc.transition_depth != 1)
    throw std::invalid_argument("one-step mode needs transition depth 1");
  const auto start = std::chrono::steady_clock::now();
  EpochMetrics m;
  efe::NetworkModel model(agent.params);
  for (int step = 0; step < sched.steps_per_epoch; ++step) {
    Vector obs = sim::observe(s, pc);
    const auto d = plan::decide(model, obs, agent.omega, cfg, rng);
    const Vector next = act_and_hold(s, pc, std::move(obs), d.action, std::numeric_limits<double>::infinity(), &replay);
    if (observer) observer({s.clock, &d});
    m.mean_reward += next(mc.combined_index());

    const auto batch = sched.mode == TransitionMode::MultiStep
                           ? replay.sample_windows(mc.transition_depth, sched.batch_size, mc.n_machines, rng)
                           : replay.sample_transitions(sched.batch_size, mc.n_machines, rng);
    if (batch.size() > 0) {
      const auto rep = model::vfe_step(agent.params, agent.opt, batch, agent.omega, sched.model_adam, rng);
      if (!std::isfinite(rep.total))
        throw DivergenceError("non-finite free energy at epoch step " + std::to_string(step));
      m.vfe += rep.total;
      m.recon += rep.recon;
      m.kl += rep.kl;
      ++m.vfe_updates;
    }
    const auto qb = replay.sample_q(sched.batch_size, mc.combined_index(), rng);
    const double q = model::habit_step(agent.params, agent.opt, qb, sched.discount, sched.target_refresh, sched.habit_adam);
    if (!std::isfinite(q)) throw DivergenceError("non-finite Q loss at epoch step " + std::to_string(step));
    m.q_loss += q;
    m.mean_divergence += d.divergence;
    agent.omega = d.next_omega;
    ++m.steps;
  }
  if (m.vfe_updates > 0) {
    m.vfe /= m.vfe_updates;
    m.recon /= m.vfe_updates;
    m.kl /= m.vfe_updates;
  }
  m.q_loss /= m.steps;
  m.mean_reward /= m.steps;
  m.mean_divergence /= m.steps;
  m.omega = agent.omega;
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

// Stop once the latest reconstruction loss exceeds factor x the best so far.
inline bool early_stop_check(const std::vector<double>& recon_history, double factor) {
  if (recon_history.size() < 2 || !std::isfinite(factor)) return false;
  const double best = *std::min_element(recon_history.begin(), recon_history.end() - 1);
  return recon_history.back() > factor * best;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalOutcome {
  std::uint64_t seed = 0;
  pref::RewardTerms terms;
};

struct EvalSummary {
  std::vector<EvalOutcome> runs;

  double mean(double pref::RewardTerms::*field) const {
    double s = 0.0;
    for (const auto& r : runs) s += r.terms.*field;
    return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
  }
  double mean_combined() const { return mean(&pref::RewardTerms::combined); }
  double mean_production() const { return mean(&pref::RewardTerms::production); }
  double mean_energy() const { return mean(&pref::RewardTerms::energy); }
};

inline std::vector<std::uint64_t> evaluation_seeds(std::uint64_t base, int count) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(stream_seed(base, 0xE7A1 + static_cast<std::uint64_t>(i)));
  return seeds;
}

// Runs one warm-started system per seed under its own controller, for
// `eval_minutes` after warm-up, and reports the final windowed reward terms.
// Systems run share-nothing on up to `threads` workers.
inline EvalSummary evaluate_controllers(const std::function<Controller()>& make_controller, const sim::SimConfig& config,
                                        const pref::PreferenceConfig& pc, const TrainSchedule& sched,
                                        const std::vector<std::uint64_t>& seeds) {
  EvalSummary out;
  out.runs.resize(seeds.size());
  std::vector<Controller> controllers;
  for (std::size_t i = 0; i < seeds.size(); ++i) controllers.push_back(make_controller());
  auto run_one = [&](std::size_t i) {
    auto s = warmup_system(config, pc, sched, seeds[i]);
    Rng rng = make_rng(seeds[i], 0xC7);
    run_until(s, pc, controllers[i], s.clock + sched.eval_minutes, rng);
    out.runs[i] = {seeds[i], pref::reward_terms(s, pc)};
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(sched.threads), seeds.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) run_one(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < seeds.size(); i += workers) run_one(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline EvalSummary evaluate(const model::AgentParams& params, const plan::PlannerConfig& cfg,
                            const sim::SimConfig& config, const pref::PreferenceConfig& pc, const TrainSchedule& sched,
                            const std::vector<std::uint64_t>& seeds) {
  return evaluate_controllers([&] { return agent_controller(params, cfg); }, config, pc, sched, seeds);
}

// ---------------------------------------------------------------------------
// Full training run.

struct EvalPoint {
  int epoch = 0;
  EvalSummary summary;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::vector<EvalPoint> evals;
  bool stopped_early = false;
};

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  std::function<void(const EvalPoint&, const Agent&)> on_eval;
  StepObserver on_step;
};

inline TrainResult train(Agent& agent, const sim::SimConfig& config, const pref::PreferenceConfig& pc,
                         const plan::PlannerConfig& cfg, const TrainSchedule& sched, std::uint64_t seed,
                         const TrainHooks& hooks = {}) {
  sched.validate();
  cfg.validate();
  TrainResult out;
  ReplayBuffer replay(static_cast<std::size_t>(sched.replay_capacity));
  Rng rng = make_rng(seed, 0x7EA);
  const auto eval_seeds = evaluation_seeds(seed, sched.eval_replications);
  std::vector<double> recon;
  for (int epoch = 1; epoch <= sched.epochs; ++epoch) {
    replay.begin_segment();
    auto s = warmup_system(config, pc, sched, stream_seed(seed, static_cast<std::uint64_t>(epoch)), &replay);
    auto m = train_epoch(agent, s, replay, cfg, sched, pc, rng, hooks.on_step);
    m.epoch = epoch;
    out.epochs.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);
    if (epoch % sched.eval_every == 0 || epoch == sched.epochs) {
      EvalPoint p{epoch, evaluate(agent.params, cfg, config, pc, sched, eval_seeds)};
      if (hooks.on_eval) hooks.on_eval(p, agent);
      out.evals.push_back(std::move(p));
    }
    if (m.vfe_updates > 0) recon.push_back(m.recon);
    if (early_stop_check(recon, sched.early_stop_factor)) {
      out.stopped_early = true;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV output.

inline void write_epoch_header(std::ostream& os) { os << "epoch,vfe,recon,kl,q_loss,mean_R,D_t,omega_t\n"; }

inline void write_epoch_row(std::ostream& os, const EpochMetrics& m) {
  os << m.epoch << ',' << m.vfe << ',' << m.recon << ',' << m.kl << ',' << m.q_loss << ',' << m.mean_reward << ','
     << m.mean_divergence << ',' << m.omega << '\n';
}

inline void write_eval_header(std::ostream& os) { os << "epoch,seed,final_R,R_prod,R_energy\n"; }

inline void write_eval_rows(std::ostream& os, int epoch, const EvalSummary& e) {
  for (const auto& r : e.runs)
    os << epoch << ',' << r.seed << ',' << r.terms.combined << ',' << r.terms.production << ',' << r.terms.energy << '\n';
}

}  // namespace aif::train
