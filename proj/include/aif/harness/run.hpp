#pragma once

// Experiment modes: calibrate, train, evaluate, baseline, sweep, plot and
// manifest re-runs. Every run writes resolved.ini and manifest.json next to
// its outputs.

#include "aif/harness/experiment.hpp"
#include "aif/harness/manifest.hpp"
#include "aif/harness/plots.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace aif::harness {

namespace fs = std::filesystem;

using Logger = std::function<void(const std::string&)>;

inline const std::vector<std::string>& mode_names() {
  static const std::vector<std::string> names = {"calibrate", "train", "evaluate", "baseline", "sweep"};
  return names;
}

// Output directory that records every file written through it.
class OutputDir {
 public:
  explicit OutputDir(const std::string& path) : root_(path) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec || !fs::is_directory(root_))
      throw HarnessError(kUnwritableOutput, "cannot create output directory " + path);
    const auto probe = root_ / ".write-test";
    {
      std::ofstream os(probe);
      if (!os) throw HarnessError(kUnwritableOutput, "output directory is not writable: " + path);
    }
    fs::remove(probe, ec);
  }

  fs::path path(const std::string& name) const { return root_ / name; }

  std::ofstream open(const std::string& name) {
    std::ofstream os(path(name), std::ios::binary);
    if (!os) throw HarnessError(kUnwritableOutput, "cannot write " + path(name).string());
    record(name);
    return os;
  }

  void write(const std::string& name, const std::string& bytes) {
    auto os = open(name);
    os << bytes;
  }

  void record(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }

  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

struct RunReport {
  Manifest manifest;
  std::string out_dir;
};

inline pref::Calibration calibrate(const ExperimentConfig& c) {
  return pref::calibrate_t_max(c.sim, c.run.calibration_horizon, c.run.calibration_replications, c.trainer.warmup_all_on,
                               stream_seed(c.run.seed, 0xCA1), c.preference.t_s);
}

inline void ensure_calibrated(ExperimentConfig& c, const Logger& log) {
  if (!c.run.calibrate_t_max) return;
  const auto cal = calibrate(c);
  c.preference.t_max = cal.t_max;
  c.run.calibrate_t_max = false;
  if (log) log("calibrated t_max = " + format_number(cal.t_max) + " +- " + format_number(cal.std_error));
}

inline std::string checkpoint_stem(const ExperimentConfig& c) {
  return c.run.checkpoint.empty() ? (fs::path(c.run.out) / "agent").string() : c.run.checkpoint;
}

inline std::vector<std::uint64_t> run_eval_seeds(const ExperimentConfig& c) {
  return train::evaluation_seeds(c.run.seed, c.trainer.eval_replications);
}

// One evaluation run of a frozen agent with its decisions and per-action EFE
// terms logged. Matches the corresponding run inside train::evaluate.
inline pref::RewardTerms log_agent_day(const model::AgentParams& params, const ExperimentConfig& c, std::uint64_t seed,
                          std::ostream& decisions, std::ostream& terms) {
  auto s = train::warmup_system(c.sim, c.preference, c.trainer, seed);
  Rng rng = make_rng(seed, 0xC7);
  const efe::NetworkModel model(params);
  double omega = plan::precision_update(0.0, c.planner.precision);
  const double until = s.clock + c.trainer.eval_minutes;
  plan::write_decision_header(decisions, params.config.n_actions());
  efe::write_term_header(terms);
  while (s.clock < until) {
    nn::Vector obs = sim::observe(s, c.preference);
    const auto d = plan::decide(model, obs, omega, c.planner, rng);
    plan::write_decision_row(decisions, s.clock, d);
    for (std::size_t a = 0; a < d.plan.terms.size(); ++a)
      efe::write_term_row(terms, s.clock, static_cast<int>(a), d.plan.terms[a]);
    omega = d.next_omega;
    train::act_and_hold(s, c.preference, std::move(obs), d.action, until);
  }
  return pref::reward_terms(s, c.preference);
}

inline model::AgentParams load_agent(const ExperimentConfig& c, const std::string& stem) {
  if (!fs::exists(stem + ".json") || !fs::exists(stem + ".tensors"))
    throw HarnessError(kMissingCheckpoint, "checkpoint not found: " + stem + ".{json,tensors}");
  model::AgentParams p;
  try {
    p = model::load_checkpoint(stem);
  } catch (const std::exception& e) {
    throw HarnessError(kMissingCheckpoint, std::string("cannot load checkpoint: ") + e.what());
  }
  if (p.config.n_binary != c.agent.n_binary || p.config.n_machines != c.agent.n_machines)
    throw HarnessError(kInvalidConfig, "checkpoint observation layout does not match the sim section");
  return p;
}

namespace modes {

inline void calibrate_mode(ExperimentConfig& c, OutputDir& out, const Logger& log) {
  const auto cal = calibrate(c);
  c.preference.t_max = cal.t_max;
  c.run.calibrate_t_max = false;
  auto os = out.open("calibration.csv");
  os << "replicate,throughput\n";
  for (std::size_t i = 0; i < cal.replicate_throughput.size(); ++i)
    os << i << ',' << format_number(cal.replicate_throughput[i]) << '\n';
  auto summary = out.open("t_max.csv");
  summary << "t_max,std_error,e_max\n"
          << format_number(cal.t_max) << ',' << format_number(cal.std_error) << ',' << format_number(c.preference.e_max)
          << '\n';
  if (log) log("t_max = " + format_number(cal.t_max));
}

inline void write_eval(std::ostream& os, int epoch, const train::EvalSummary& e) { train::write_eval_rows(os, epoch, e); }

inline void train_mode(ExperimentConfig& c, OutputDir& out, const Logger& log) {
  ensure_calibrated(c, log);
  auto agent = train::Agent::create(c.agent, c.planner.precision, c.run.seed);
  auto epochs = out.open("epochs.csv");
  auto evals = out.open("eval.csv");
  train::write_epoch_header(epochs);
  train::write_eval_header(evals);
  train::TrainHooks hooks;
  hooks.on_epoch = [&](const train::EpochMetrics& m) {
    train::write_epoch_row(epochs, m);
    epochs.flush();
    if (log)
      log("epoch " + std::to_string(m.epoch) + " vfe " + format_number(m.vfe) + " mean R " +
          format_number(m.mean_reward) + " omega " + format_number(m.omega));
  };
  hooks.on_eval = [&](const train::EvalPoint& p, const train::Agent& a) {
    write_eval(evals, p.epoch, p.summary);
    evals.flush();
    const std::string epoch_stem = "agent_epoch" + std::to_string(p.epoch);
    model::save_checkpoint(a.params, out.path(epoch_stem).string(), {{"seed", c.run.seed}, {"epochs", p.epoch}});
    out.record(epoch_stem + ".tensors");
    out.record(epoch_stem + ".json");
    if (log) log("eval epoch " + std::to_string(p.epoch) + " R " + format_number(p.summary.mean_combined()));
  };
  const auto result = train::train(agent, c.sim, c.preference, c.planner, c.trainer, c.run.seed, hooks);
  if (result.stopped_early && log) log("early stop after epoch " + std::to_string(result.epochs.size()));
  const std::string stem = "agent";
  model::save_checkpoint(agent.params, out.path(stem).string(),
                         {{"seed", c.run.seed}, {"epochs", result.epochs.size()}, {"omega", agent.omega}});
  out.record(stem + ".tensors");
  out.record(stem + ".json");
  if (c.run.log_decisions) {
    auto d = out.open("decisions.csv");
    auto t = out.open("terms.csv");
    log_agent_day(agent.params, c, run_eval_seeds(c).front(), d, t);
  }
}

inline void evaluate_mode(ExperimentConfig& c, OutputDir& out, Manifest& manifest, const Logger& log) {
  ensure_calibrated(c, log);
  const auto stem = checkpoint_stem(c);
  c.run.checkpoint = stem;
  const auto params = load_agent(c, stem);
  manifest.inputs[stem + ".json"] = sha1_file(stem + ".json");
  manifest.inputs[stem + ".tensors"] = sha1_file(stem + ".tensors");
  const auto seeds = run_eval_seeds(c);
  const auto summary = train::evaluate(params, c.planner, c.sim, c.preference, c.trainer, seeds);
  auto os = out.open("eval.csv");
  train::write_eval_header(os);
  write_eval(os, 0, summary);
  if (log)
    log("R " + format_number(summary.mean_combined()) + " R_prod " + format_number(summary.mean_production()) +
        " R_energy " + format_number(summary.mean_energy()));
  if (c.run.log_decisions) {
    auto d = out.open("decisions.csv");
    auto t = out.open("terms.csv");
    log_agent_day(params, c, seeds.front(), d, t);
  }
}

inline void baseline_mode(ExperimentConfig& c, OutputDir& out, const Logger& log) {
  ensure_calibrated(c, log);
  const auto seeds = run_eval_seeds(c);
  const std::vector<std::pair<std::string, std::function<train::Controller()>>> policies = {
      {"ALL_ON", train::all_on_controller},
      {"RANDOM", train::random_controller},
      {"FIXED_" + std::to_string(c.run.fixed_k), [k = c.run.fixed_k] { return train::fixed_k_controller(k); }},
  };
  auto os = out.open("baseline.csv");
  os << "policy,seed,final_R,R_prod,R_energy\n";
  for (const auto& [name, make] : policies) {
    const auto e = train::evaluate_controllers(make, c.sim, c.preference, c.trainer, seeds);
    for (const auto& r : e.runs)
      os << name << ',' << r.seed << ',' << r.terms.combined << ',' << r.terms.production << ',' << r.terms.energy
         << '\n';
    if (log)
      log(name + " R " + format_number(e.mean_combined()) + " R_prod " + format_number(e.mean_production()) +
          " R_energy " + format_number(e.mean_energy()));
  }
}

struct SweepEntry {
  double gamma = 0.0;
  int depth = 1;
  train::TrainResult result;
};

inline void sweep_mode(ExperimentConfig& c, OutputDir& out, const Logger& log) {
  ensure_calibrated(c, log);
  std::vector<SweepEntry> entries;
  for (double s : parse_number_list("run.sweep_depth", c.run.sweep_depth))
    for (double g : parse_number_list("run.sweep_gamma", c.run.sweep_gamma)) entries.push_back({g, static_cast<int>(s), {}});
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(c.trainer.threads), entries.size());
  std::mutex log_mutex;
  auto run_entry = [&](SweepEntry& e, int eval_threads) {
    auto mc = c.agent;
    mc.transition_depth = e.depth;
    auto pc = c.planner;
    pc.gamma = e.gamma;
    auto ts = c.trainer;
    ts.threads = eval_threads;
    auto agent = train::Agent::create(mc, pc.precision, c.run.seed);
    e.result = train::train(agent, c.sim, c.preference, pc, ts, c.run.seed);
    if (log) {
      std::lock_guard lock(log_mutex);
      log("sweep s=" + std::to_string(e.depth) + " gamma=" + format_number(e.gamma) + " final R " +
          format_number(e.result.evals.empty() ? 0.0 : e.result.evals.back().summary.mean_combined()));
    }
  };
  if (workers <= 1) {
    for (auto& e : entries) run_entry(e, c.trainer.threads);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < entries.size(); i += workers) run_entry(entries[i], 1);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  auto evals = out.open("sweep.csv");
  auto epochs = out.open("sweep_epochs.csv");
  evals << "gamma,depth,epoch,seed,final_R,R_prod,R_energy\n";
  epochs << "gamma,depth,epoch,vfe,recon,kl,q_loss,mean_R,D_t,omega_t\n";
  for (const auto& e : entries) {
    for (const auto& p : e.result.evals)
      for (const auto& r : p.summary.runs)
        evals << e.gamma << ',' << e.depth << ',' << p.epoch << ',' << r.seed << ',' << r.terms.combined << ','
              << r.terms.production << ',' << r.terms.energy << '\n';
    for (const auto& m : e.result.epochs) {
      epochs << e.gamma << ',' << e.depth << ',';
      train::write_epoch_row(epochs, m);
    }
  }
}

}  // namespace modes

// Runs one mode and writes resolved.ini plus manifest.json into run.out.
inline RunReport run(const std::string& mode, ExperimentConfig c, const Logger& log = {}) {
  if (std::find(mode_names().begin(), mode_names().end(), mode) == mode_names().end())
    throw HarnessError(kInvalidConfig, "unknown mode: " + mode);
  OutputDir out(c.run.out);
  Manifest manifest;
  manifest.mode = mode;
  manifest.seed = c.run.seed;
  if (mode == "calibrate") modes::calibrate_mode(c, out, log);
  else if (mode == "train") modes::train_mode(c, out, log);
  else if (mode == "evaluate") modes::evaluate_mode(c, out, manifest, log);
  else if (mode == "baseline") modes::baseline_mode(c, out, log);
  else modes::sweep_mode(c, out, log);
  for (const auto& f : out.files()) manifest.outputs[f] = sha1_file(out.path(f).string());
  manifest.config = resolved_text(c);
  {
    std::ofstream os(out.path("resolved.ini"), std::ios::binary);
    if (!os) throw HarnessError(kUnwritableOutput, "cannot write resolved.ini");
    os << manifest.config;
  }
  {
    std::ofstream os(out.path("manifest.json"), std::ios::binary);
    if (!os) throw HarnessError(kUnwritableOutput, "cannot write manifest.json");
    os << manifest.to_json().dump(2) << '\n';
  }
  return {manifest, c.run.out};
}

struct RerunCheck {
  RunReport report;
  std::vector<std::string> mismatched;  // outputs whose digest differs or that are missing
};

// Re-executes a manifest into `out_dir` and compares output digests.
inline RerunCheck rerun(const std::string& manifest_path, const std::string& out_dir, const Logger& log = {}) {
  Manifest m;
  try {
    m = Manifest::load(manifest_path);
  } catch (const std::exception& e) {
    throw HarnessError(kInvalidConfig, std::string("cannot read manifest: ") + e.what());
  }
  for (const auto& [path, digest] : m.inputs) {
    if (!fs::exists(path)) throw HarnessError(kMissingCheckpoint, "manifest input missing: " + path);
    if (sha1_file(path) != digest) throw HarnessError(kReproductionMismatch, "manifest input changed: " + path);
  }
  auto c = ExperimentConfig::parse(m.config, {"run.out=" + out_dir});
  RerunCheck check{run(m.mode, c, log), {}};
  for (const auto& [name, digest] : m.outputs) {
    const auto it = check.report.manifest.outputs.find(name);
    if (it == check.report.manifest.outputs.end() || it->second != digest) check.mismatched.push_back(name);
  }
  return check;
}

// Writes every figure derived from `csv_path` into `out_dir`; nothing is
// written when the CSV is malformed.
inline std::vector<std::string> plot(const std::string& csv_path, const std::string& out_dir) {
  std::vector<Figure> figures;
  try {
    figures = figures_for(read_csv(csv_path));
  } catch (const CsvError& e) {
    throw HarnessError(kMalformedCsv, csv_path + ": " + e.what());
  }
  OutputDir out(out_dir);
  std::vector<std::string> written;
  for (const auto& f : figures) {
    out.write(f.file, f.svg);
    written.push_back(out.path(f.file).string());
  }
  return written;
}

}  // namespace aif::harness
