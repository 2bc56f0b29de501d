#pragma once

// Event-driven simulator of a single workstation: one finite upstream buffer
// feeding identical parallel machines that switch between idle, busy,
// standby, startup and failed modes. All durations are exponential.

#include "aif/config_file.hpp"
#include "aif/rng.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace aif::sim {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

struct SimConfig {
  int n_machines = 6;
  int buffer_capacity = 10;
  double lambda = 1.0;      // arrivals per minute
  double mu = 0.25;         // parts per minute, per machine
  double delta = 0.5;       // startup completions per minute
  double psi = 1.0 / 60.0;  // failures per busy minute; 0 disables failures
  double xi = 0.2;          // repairs per minute
  double w_busy = 10.0;     // kW
  double w_startup = 6.0;
  double w_idle = 3.0;
  double w_standby = 0.05;
  double w_failed = 0.05;
  int decision_stride = 1;        // events between decision epochs
  double history_interval = 0.0;  // minutes between counter samples, 0 = every event
  double history_span = 1440.0;   // minutes of counter history retained

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("SimConfig: " + what); };
    if (n_machines < 1) fail("n_machines must be >= 1");
    if (buffer_capacity < 1) fail("buffer_capacity must be >= 1");
    if (!(lambda >= 0.0)) fail("lambda must be >= 0");
    if (!(mu > 0.0)) fail("mu must be > 0");
    if (!(delta > 0.0)) fail("delta must be > 0");
    if (!(psi >= 0.0)) fail("psi must be >= 0");
    if (!(xi > 0.0)) fail("xi must be > 0");
    if (!(w_busy > w_startup && w_startup > w_idle && w_idle > w_standby && w_standby >= 0.0))
      fail("power levels must satisfy w_busy > w_startup > w_idle > w_standby >= 0");
    if (!(w_failed >= 0.0 && w_failed < w_idle)) fail("w_failed must be in [0, w_idle)");
    if (decision_stride < 1) fail("decision_stride must be >= 1");
    if (!(history_interval >= 0.0)) fail("history_interval must be >= 0");
    if (!(history_span > 0.0)) fail("history_span must be > 0");
  }

  // Reads keys named exactly like the fields, optionally under a prefix such
  // as "sim.".
  void read(const KeyValues& kv, const std::string& prefix = "") {
    kv.read(prefix + "n_machines", n_machines);
    kv.read(prefix + "buffer_capacity", buffer_capacity);
    kv.read(prefix + "lambda", lambda);
    kv.read(prefix + "mu", mu);
    kv.read(prefix + "delta", delta);
    kv.read(prefix + "psi", psi);
    kv.read(prefix + "xi", xi);
    kv.read(prefix + "w_busy", w_busy);
    kv.read(prefix + "w_startup", w_startup);
    kv.read(prefix + "w_idle", w_idle);
    kv.read(prefix + "w_standby", w_standby);
    kv.read(prefix + "w_failed", w_failed);
    kv.read(prefix + "decision_stride", decision_stride);
    kv.read(prefix + "history_interval", history_interval);
    kv.read(prefix + "history_span", history_span);
  }
};

enum class MachineMode : std::uint8_t { Idle = 0, Busy = 1, Standby = 2, Startup = 3, Failed = 4 };
inline constexpr int kModeCount = 5;

inline const char* to_string(MachineMode m) {
  switch (m) {
    case MachineMode::Idle: return "IDLE";
    case MachineMode::Busy: return "BUSY";
    case MachineMode::Standby: return "STANDBY";
    case MachineMode::Startup: return "STARTUP";
    case MachineMode::Failed: return "FAILED";
  }
  return "?";
}

struct Machine {
  MachineMode mode = MachineMode::Idle;
  bool enabled = true;
  double activity_end = kNever;  // process, startup or repair completion
  double failure_at = kNever;    // only finite while busy
};

enum class EventKind : std::uint8_t { Arrival, ProcessDone, StartupDone, Failure, RepairDone };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Arrival: return "ARRIVAL";
    case EventKind::ProcessDone: return "PROCESS_DONE";
    case EventKind::StartupDone: return "STARTUP_DONE";
    case EventKind::Failure: return "FAILURE";
    case EventKind::RepairDone: return "REPAIR_DONE";
  }
  return "?";
}

struct EventRecord {
  EventKind kind = EventKind::Arrival;
  std::optional<int> machine;
  double time = 0.0;
  bool arrival_lost = false;
};

// Counter sample; power is the plant's power draw right after `time`, which
// makes energy exact between samples taken at every event.
struct CounterSample {
  double time = 0.0;
  std::int64_t parts = 0;
  double energy_kwh = 0.0;
  double power_kw = 0.0;
};

struct SimState {
  SimConfig config;
  Rng rng;
  double clock = 0.0;
  double last_decision_clock = 0.0;
  double delta_t = 0.0;  // minutes since the previous decision epoch
  int buffer_level = 0;
  std::vector<Machine> machines;
  double next_arrival = kNever;
  std::int64_t arrivals = 0;
  std::int64_t arrivals_lost = 0;
  std::int64_t parts_produced = 0;
  double energy_kwh = 0.0;
  std::int64_t events = 0;
  std::deque<CounterSample> history;

  int enabled_count() const {
    return static_cast<int>(std::count_if(machines.begin(), machines.end(),
                                           [](const Machine& m) { return m.enabled; }));
  }
  int count(MachineMode mode) const {
    return static_cast<int>(std::count_if(machines.begin(), machines.end(),
                                          [mode](const Machine& m) { return m.mode == mode; }));
  }
  std::int64_t arrivals_accepted() const { return arrivals - arrivals_lost; }
  // Parts held by machines: busy ones and failed ones waiting for repair.
  int parts_in_machines() const { return count(MachineMode::Busy) + count(MachineMode::Failed); }
};

inline double mode_power(const SimConfig& c, MachineMode mode) {
  switch (mode) {
    case MachineMode::Idle: return c.w_idle;
    case MachineMode::Busy: return c.w_busy;
    case MachineMode::Standby: return c.w_standby;
    case MachineMode::Startup: return c.w_startup;
    case MachineMode::Failed: return c.w_failed;
  }
  return 0.0;
}

inline double power_kw(const SimState& s) {
  double p = 0.0;
  for (const auto& m : s.machines) p += mode_power(s.config, m.mode);
  return p;
}

namespace detail {

inline void start_processing(SimState& s, Machine& m) {
  m.mode = MachineMode::Busy;
  m.activity_end = s.clock + sample_exponential(s.config.mu, s.rng);
  m.failure_at = s.config.psi > 0.0 ? s.clock + sample_exponential(s.config.psi, s.rng) : kNever;
}

inline void go_standby(Machine& m) {
  m.mode = MachineMode::Standby;
  m.activity_end = kNever;
  m.failure_at = kNever;
}

inline void go_idle(Machine& m) {
  m.mode = MachineMode::Idle;
  m.activity_end = kNever;
  m.failure_at = kNever;
}

inline void begin_startup(SimState& s, Machine& m) {
  m.mode = MachineMode::Startup;
  m.activity_end = s.clock + sample_exponential(s.config.delta, s.rng);
  m.failure_at = kNever;
}

// A machine that just became available: pull a part, idle, or switch off.
inline void on_ready(SimState& s, Machine& m) {
  if (!m.enabled) {
    go_standby(m);
  } else if (s.buffer_level > 0) {
    --s.buffer_level;
    start_processing(s, m);
  } else {
    go_idle(m);
  }
}

inline void record_sample(SimState& s, bool force) {
  const auto& c = s.config;
  if (!force && !s.history.empty() && c.history_interval > 0.0 &&
      s.clock - s.history.back().time < c.history_interval)
    return;
  s.history.push_back({s.clock, s.parts_produced, s.energy_kwh, power_kw(s)});
  // Keep the newest sample at or before the retention boundary.
  const double boundary = s.clock - c.history_span;
  while (s.history.size() >= 2 && s.history[1].time <= boundary) s.history.pop_front();
}

}  // namespace detail

inline SimState init_sim(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  SimState s;
  s.config = config;
  s.rng = make_rng(seed, 0x5157);
  s.machines.assign(static_cast<std::size_t>(config.n_machines), Machine{});
  if (config.lambda > 0.0) s.next_arrival = sample_exponential(config.lambda, s.rng);
  detail::record_sample(s, true);
  return s;
}

// Time and source of the earliest pending event, if any.
struct PendingEvent {
  double time = kNever;
  EventKind kind = EventKind::Arrival;
  int machine = -1;
};

inline PendingEvent next_event(const SimState& s) {
  PendingEvent e;
  e.time = s.next_arrival;
  for (int i = 0; i < static_cast<int>(s.machines.size()); ++i) {
    const auto& m = s.machines[static_cast<std::size_t>(i)];
    if (m.activity_end < e.time) {
      e.time = m.activity_end;
      e.machine = i;
      switch (m.mode) {
        case MachineMode::Busy: e.kind = EventKind::ProcessDone; break;
        case MachineMode::Startup: e.kind = EventKind::StartupDone; break;
        case MachineMode::Failed: e.kind = EventKind::RepairDone; break;
        default: break;
      }
    }
    if (m.failure_at < e.time) {
      e.time = m.failure_at;
      e.machine = i;
      e.kind = EventKind::Failure;
    }
  }
  return e;
}

class DeadlockError : public std::runtime_error {
 public:
  DeadlockError() : std::runtime_error("simulation has no pending events") {}
};

inline EventRecord advance_to_next_event(SimState& s) {
  const PendingEvent e = next_event(s);
  if (e.time == kNever) throw DeadlockError{};

  s.energy_kwh += power_kw(s) * (e.time - s.clock) / 60.0;
  s.clock = e.time;
  ++s.events;

  EventRecord rec{e.kind, std::nullopt, e.time, false};
  if (e.machine >= 0) rec.machine = e.machine;

  switch (e.kind) {
    case EventKind::Arrival: {
      ++s.arrivals;
      s.next_arrival = s.clock + sample_exponential(s.config.lambda, s.rng);
      auto idle = std::find_if(s.machines.begin(), s.machines.end(), [](const Machine& m) {
        return m.mode == MachineMode::Idle && m.enabled;
      });
      if (idle != s.machines.end()) {
        detail::start_processing(s, *idle);
      } else if (s.buffer_level < s.config.buffer_capacity) {
        ++s.buffer_level;
      } else {
        ++s.arrivals_lost;
        rec.arrival_lost = true;
      }
      break;
    }
    case EventKind::ProcessDone: {
      auto& m = s.machines[static_cast<std::size_t>(e.machine)];
      ++s.parts_produced;
      detail::on_ready(s, m);
      break;
    }
    case EventKind::StartupDone: {
      detail::on_ready(s, s.machines[static_cast<std::size_t>(e.machine)]);
      break;
    }
    case EventKind::Failure: {
      auto& m = s.machines[static_cast<std::size_t>(e.machine)];
      m.mode = MachineMode::Failed;
      m.failure_at = kNever;
      m.activity_end = s.clock + sample_exponential(s.config.xi, s.rng);
      break;
    }
    case EventKind::RepairDone: {
      // The interrupted part resumes with a fresh processing time.
      detail::start_processing(s, s.machines[static_cast<std::size_t>(e.machine)]);
      break;
    }
  }
  s.delta_t = s.clock - s.last_decision_clock;
  detail::record_sample(s, false);
  return rec;
}

// Enables exactly `action` machines. Idle machines are disabled first
// (highest index first) since they can switch off immediately; busy, startup
// and failed machines keep working and switch off when their activity ends.
// Enabling first revokes pending switch-offs, then wakes the lowest-indexed
// standby machines.
inline void apply_action(SimState& s, int action) {
  const int n = s.config.n_machines;
  if (action < 0 || action > n)
    throw std::out_of_range("action must be in [0, n_machines]");
  s.last_decision_clock = s.clock;
  s.delta_t = 0.0;

  int enabled = s.enabled_count();
  auto disable_pass = [&](auto pred) {
    for (int i = n - 1; i >= 0 && enabled > action; --i) {
      auto& m = s.machines[static_cast<std::size_t>(i)];
      if (m.enabled && pred(m)) {
        m.enabled = false;
        --enabled;
        if (m.mode == MachineMode::Idle) detail::go_standby(m);
      }
    }
  };
  disable_pass([](const Machine& m) { return m.mode == MachineMode::Idle; });
  disable_pass([](const Machine& m) { return m.mode == MachineMode::Startup; });
  disable_pass([](const Machine&) { return true; });

  for (int i = 0; i < n && enabled < action; ++i) {
    auto& m = s.machines[static_cast<std::size_t>(i)];
    if (!m.enabled && m.mode != MachineMode::Standby) {
      m.enabled = true;
      ++enabled;
    }
  }
  for (int i = 0; i < n && enabled < action; ++i) {
    auto& m = s.machines[static_cast<std::size_t>(i)];
    if (!m.enabled) {
      m.enabled = true;
      ++enabled;
      detail::begin_startup(s, m);
    }
  }
}

// Counter values at time t using the closest sample at or before t. Parts are
// piecewise constant; energy is extended with the power recorded at the sample.
struct CounterValue {
  double sample_time = 0.0;
  std::int64_t parts = 0;
  double energy_kwh = 0.0;
};

inline CounterValue counters_at(const SimState& s, double t) {
  const auto& h = s.history;
  auto it = std::upper_bound(h.begin(), h.end(), t,
                             [](double v, const CounterSample& c) { return v < c.time; });
  if (it == h.begin()) return {h.front().time, h.front().parts, h.front().energy_kwh};
  const auto& c = *std::prev(it);
  const double until = std::min(t, s.clock);
  return {c.time, c.parts, c.energy_kwh + c.power_kw * std::max(0.0, until - c.time) / 60.0};
}

inline void write_trace_header(std::ostream& os) { os << "time,kind,machine,buffer,NP,C\n"; }

inline void write_trace_row(std::ostream& os, const SimState& s, const EventRecord& e) {
  os << s.clock << ',' << to_string(e.kind) << ',';
  if (e.machine) os << *e.machine;
  os << ',' << s.buffer_level << ',' << s.parts_produced << ',' << s.energy_kwh << '\n';
}

}  // namespace aif::sim
