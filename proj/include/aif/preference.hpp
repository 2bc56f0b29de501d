#pragma once

// Windowed production/energy preference signal and its normalizing
// constants.

#include "aif/config_file.hpp"
#include "aif/sim/workstation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace aif::pref {

inline constexpr double kRewardCeiling = 1.05;

struct PreferenceConfig {
  double phi_weight = 0.97;  // weight of production against energy
  double t_s = 480.0;        // window length, minutes
  double t_max = 1.0;        // parts per minute under ALL ON (calibrated)
  double e_max = 60.0;       // kW with every machine busy

  void validate() const {
    if (!(phi_weight >= 0.0 && phi_weight <= 1.0))
      throw std::invalid_argument("phi_weight must be in [0, 1]");
    if (!(t_s > 0.0)) throw std::invalid_argument("t_s must be > 0");
    if (!(t_max > 0.0)) throw std::invalid_argument("t_max must be > 0");
    if (!(e_max > 0.0)) throw std::invalid_argument("e_max must be > 0");
  }

  void read(const KeyValues& kv, const std::string& prefix = "") {
    kv.read(prefix + "phi_weight", phi_weight);
    kv.read(prefix + "t_s", t_s);
    kv.read(prefix + "t_max", t_max);
    kv.read(prefix + "e_max", e_max);
  }
};

inline double e_max(const sim::SimConfig& c) {
  if (c.n_machines < 1) throw std::invalid_argument("e_max needs at least one machine");
  return c.n_machines * c.w_busy;
}

struct RewardTerms {
  double production = 0.0;
  double energy = 0.0;
  double combined = 0.0;
  bool partial_window = false;  // less than t_s of history was available
};

inline double clamp_reward(double r) { return std::clamp(r, 0.0, kRewardCeiling); }

inline RewardTerms reward_terms(const sim::SimState& s, const PreferenceConfig& p) {
  RewardTerms r;
  const double start = s.clock - p.t_s;
  r.partial_window = start < 0.0;
  const double from = std::max(0.0, start);
  const double span = r.partial_window ? s.clock : p.t_s;
  double throughput = 0.0;
  double e_avg = sim::power_kw(s);
  if (span > 0.0) {
    const auto then = sim::counters_at(s, from);
    throughput = static_cast<double>(s.parts_produced - then.parts) / span;
    e_avg = (s.energy_kwh - then.energy_kwh) * 60.0 / span;
  }
  r.production = clamp_reward(throughput / p.t_max);
  r.energy = std::clamp(1.0 - e_avg / p.e_max, 0.0, 1.0);
  r.combined = clamp_reward(p.phi_weight * r.production + (1.0 - p.phi_weight) * r.energy);
  return r;
}

// Long-run ALL ON throughput estimate.
struct Calibration {
  double t_max = 0.0;
  double std_error = 0.0;
  std::vector<double> replicate_throughput;
};

inline Calibration calibrate_t_max(const sim::SimConfig& config, double horizon, int replications,
                                   double warmup = 1440.0, std::uint64_t seed = 1,
                                   double t_s = 480.0) {
  if (!(horizon >= 10.0 * t_s)) throw std::invalid_argument("calibration horizon must be >= 10 t_s");
  if (replications < 1) throw std::invalid_argument("replications must be >= 1");
  Calibration cal;
  for (int rep = 0; rep < replications; ++rep) {
    auto s = sim::init_sim(config, stream_seed(seed, static_cast<std::uint64_t>(rep)));
    sim::apply_action(s, config.n_machines);
    while (s.clock < warmup) sim::advance_to_next_event(s);
    const auto parts0 = s.parts_produced;
    const double t0 = s.clock;
    while (s.clock < warmup + horizon) sim::advance_to_next_event(s);
    cal.replicate_throughput.push_back(static_cast<double>(s.parts_produced - parts0) / (s.clock - t0));
  }
  const auto n = static_cast<double>(replications);
  double mean = 0.0;
  for (double v : cal.replicate_throughput) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : cal.replicate_throughput) var += (v - mean) * (v - mean);
  cal.t_max = mean;
  cal.std_error = replications > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
  return cal;
}

}  // namespace aif::pref
