#pragma once

#include "aif/preference.hpp"
#include "aif/sim/workstation.hpp"

#include <Eigen/Dense>

namespace aif::sim {

using Observation = Eigen::VectorXd;

// Layout: one-hot buffer level, one-hot mode per machine, then the
// production, energy and combined reward terms.
struct ObservationLayout {
  int buffer_capacity = 10;
  int n_machines = 6;

  static ObservationLayout of(const SimConfig& c) { return {c.buffer_capacity, c.n_machines}; }
  int n_binary() const { return buffer_capacity + 1 + n_machines * kModeCount; }
  int n_reward() const { return 3; }
  int width() const { return n_binary() + n_reward(); }
  int combined_index() const { return n_binary() + 2; }
};

inline Observation observe(const SimState& s, const pref::PreferenceConfig& p) {
  const auto layout = ObservationLayout::of(s.config);
  Observation o = Observation::Zero(layout.width());
  o[s.buffer_level] = 1.0;
  const int base = layout.buffer_capacity + 1;
  for (std::size_t i = 0; i < s.machines.size(); ++i)
    o[base + static_cast<int>(i) * kModeCount + static_cast<int>(s.machines[i].mode)] = 1.0;
  const auto r = pref::reward_terms(s, p);
  o[layout.n_binary()] = r.production;
  o[layout.n_binary() + 1] = r.energy;
  o[layout.n_binary() + 2] = r.combined;
  return o;
}

}  // namespace aif::sim
