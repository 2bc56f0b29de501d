#include "aif/preference.hpp"
#include "aif/sim/workstation.hpp"
#include "queue_oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace aif;
using namespace aif::sim;
using pref::PreferenceConfig;

namespace {

SimState run_all_on(const SimConfig& c, std::uint64_t seed, double until) {
  auto s = init_sim(c, seed);
  apply_action(s, c.n_machines);
  while (s.clock < until) advance_to_next_event(s);
  return s;
}

}  // namespace

TEST(EMax, ProductOfMachinesAndBusyPower) {
  SimConfig c;
  EXPECT_DOUBLE_EQ(pref::e_max(c), 60.0);
  c.n_machines = 1;
  EXPECT_DOUBLE_EQ(pref::e_max(c), c.w_busy);
  c.n_machines = 0;
  EXPECT_THROW(pref::e_max(c), std::invalid_argument);
}

TEST(RewardTerms, PhiOneIsProductionOnly) {
  const auto s = run_all_on(SimConfig{}, 3, 1000.0);
  PreferenceConfig p;
  p.phi_weight = 1.0;
  const auto r = pref::reward_terms(s, p);
  EXPECT_EQ(r.combined, r.production);
}

TEST(RewardTerms, AllStandbyWindow) {
  SimConfig c;
  c.lambda = 0.0;
  auto s = init_sim(c, 1);
  apply_action(s, 0);
  // No events are pending, so jump the clock by hand.
  s.history.clear();
  s.history.push_back({0.0, 0, 0.0, power_kw(s)});
  s.clock = 500.0;
  s.energy_kwh = power_kw(s) * 500.0 / 60.0;
  s.history.push_back({500.0, 0, s.energy_kwh, power_kw(s)});
  PreferenceConfig p;
  const auto r = pref::reward_terms(s, p);
  EXPECT_EQ(r.production, 0.0);
  // 1 - (6 * 0.05) / (6 * 10)
  EXPECT_NEAR(r.energy, 0.995, 1e-12);
  EXPECT_FALSE(r.partial_window);
}

TEST(RewardTerms, WarmupUsesElapsedSpan) {
  const auto s = run_all_on(SimConfig{}, 4, 100.0);
  PreferenceConfig p;
  const auto r = pref::reward_terms(s, p);
  EXPECT_TRUE(r.partial_window);
  EXPECT_NEAR(r.production, std::min(1.05, s.parts_produced / s.clock / p.t_max), 1e-12);
}

TEST(RewardTerms, RangesHoldOnRandomTrajectory) {
  auto s = init_sim(SimConfig{}, 9);
  auto policy = make_rng(9, 1);
  PreferenceConfig p;
  for (int i = 0; i < 20'000; ++i) {
    apply_action(s, static_cast<int>(policy() % 7));
    advance_to_next_event(s);
    if (i % 97 == 0) {
      const auto r = pref::reward_terms(s, p);
      ASSERT_GE(r.energy, 0.0);
      ASSERT_LE(r.energy, 1.0);
      ASSERT_GE(r.production, 0.0);
      ASSERT_LE(r.production, pref::kRewardCeiling);
      ASSERT_LE(r.combined, pref::kRewardCeiling);
    }
  }
}

TEST(RewardTerms, MonotoneInWindowCounters) {
  auto s = run_all_on(SimConfig{}, 5, 900.0);
  PreferenceConfig p;
  p.t_max = 2.0;  // keep production away from the clamp
  const auto base = pref::reward_terms(s, p);
  auto more_parts = s;
  more_parts.parts_produced += 10;
  auto more_energy = s;
  more_energy.energy_kwh += 5.0;
  EXPECT_GT(pref::reward_terms(more_parts, p).combined, base.combined);
  EXPECT_LT(pref::reward_terms(more_energy, p).combined, base.combined);
}

TEST(RewardTerms, CoarserSamplingBarelyMovesReward) {
  SimConfig fine;
  SimConfig coarse;
  coarse.history_interval = 0.05;
  auto a = init_sim(fine, 13);
  auto b = init_sim(coarse, 13);
  auto policy = make_rng(13, 1);
  PreferenceConfig p;
  double total = 0.0;
  int probes = 0;
  for (int i = 0; i < 30'000; ++i) {
    const int action = static_cast<int>(policy() % 7);
    apply_action(a, action);
    apply_action(b, action);
    advance_to_next_event(a);
    advance_to_next_event(b);
    if (a.clock > 600.0 && i % 50 == 0) {
      total += std::abs(pref::reward_terms(a, p).combined - pref::reward_terms(b, p).combined);
      ++probes;
    }
  }
  ASSERT_GT(probes, 100);
  EXPECT_LT(total / probes, 1e-3);
}

TEST(CalibrateTMax, WorkConservingLimitIsArrivalRate) {
  SimConfig c;
  c.psi = 0.0;
  c.lambda = 0.2;
  const auto cal = pref::calibrate_t_max(c, 4800.0 * 2, 3, 1440.0, 2);
  EXPECT_NEAR(cal.t_max / 0.2, 1.0, 0.03);
}

TEST(CalibrateTMax, DefaultConfigMatchesQueueOracle) {
  const SimConfig c;
  const auto oracle = oracle::solve_all_on(c.n_machines, c.buffer_capacity, c.lambda, c.mu, c.psi, c.xi);
  const auto cal = pref::calibrate_t_max(c, 14400.0, 5);
  EXPECT_NEAR(cal.t_max / oracle.throughput, 1.0, 0.02);
}

TEST(CalibrateTMax, ReplicationCountsAgreeWithinConfidence) {
  const SimConfig c;
  const auto ten = pref::calibrate_t_max(c, 4800.0, 10, 1440.0, 100);
  const auto twenty = pref::calibrate_t_max(c, 4800.0, 20, 1440.0, 200);
  const double combined = std::sqrt(ten.std_error * ten.std_error + twenty.std_error * twenty.std_error);
  EXPECT_LT(std::abs(ten.t_max - twenty.t_max), 3.0 * combined);
}

TEST(CalibrateTMax, SelfConsistentAllOnReward) {
  const SimConfig c;
  PreferenceConfig p;
  p.t_max = pref::calibrate_t_max(c, 14400.0, 5).t_max;
  // Mean over consecutive 8 h windows of a 10 day run; one window alone has
  // a ~4.5% Poisson spread, the mean of 27 about 1%.
  auto s = run_all_on(c, 77, 1440.0);
  double sum = 0.0;
  int windows = 0;
  for (double end = 1440.0 + p.t_s; end <= 1440.0 * 10; end += p.t_s, ++windows) {
    while (s.clock < end) advance_to_next_event(s);
    sum += pref::reward_terms(s, p).production;
  }
  EXPECT_NEAR(sum / windows, 1.0, 0.03);
}

TEST(CalibrateTMax, RejectsShortHorizon) {
  EXPECT_THROW(pref::calibrate_t_max(SimConfig{}, 1000.0, 2), std::invalid_argument);
}
