#pragma once

// Road-and-routing simulator: greedy farthest-neighbor V2V forwarding toward
// the RSU at the road end, dead-end detection, and three recoveries.
//
// Pure-V2V backtracking on a one-dimensional road can never discover a
// spatially disjoint path, so that baseline is given store-carry-forward
// semantics: the holder keeps the message while vehicles move until a relay
// beyond the stuck frontier comes into range.
//
// Time model: vehicle positions change only on carry ticks. Hop, D2D and
// cellular delays are accounted in the outcome but do not move vehicles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "v2vd2d/connectivity.hpp"
#include "v2vd2d/delay_model.hpp"
#include "v2vd2d/errors.hpp"
#include "v2vd2d/rng.hpp"
#include "v2vd2d/traffic_model.hpp"

namespace v2vd2d {

enum class StrategyKind { pure_v2v_backtrack, d2d_on_demand, d2d_proactive };

struct RecoveryStrategy {
  StrategyKind kind = StrategyKind::d2d_on_demand;
  unsigned max_back_hops = 1;
  double d2d_range_factor = 4.0;
  /// Permits a D2D range factor outside [3, 5] (with a warning).
  bool allow_nonstandard_factor = false;

  static RecoveryStrategy backtrack(unsigned max_back_hops = 1) {
    return {StrategyKind::pure_v2v_backtrack, max_back_hops, 4.0, false};
  }
  static RecoveryStrategy on_demand(double factor = 4.0) { return {StrategyKind::d2d_on_demand, 1, factor, false}; }
  static RecoveryStrategy proactive(double factor = 4.0) { return {StrategyKind::d2d_proactive, 1, factor, false}; }

  bool uses_d2d() const noexcept { return kind != StrategyKind::pure_v2v_backtrack; }

  /// Throws DomainError for an out-of-range factor unless overridden; returns
  /// the warnings of an accepted override.
  std::vector<std::string> validate() const {
    std::vector<std::string> warnings;
    if (!uses_d2d()) return warnings;
    if (!(d2d_range_factor > 0.0)) throw DomainError("d2d_range_factor must be > 0");
    if (d2d_range_factor < 3.0 || d2d_range_factor > 5.0) {
      if (!allow_nonstandard_factor) throw DomainError("d2d_range_factor must lie in [3, 5]");
      warnings.push_back("d2d_range_factor " + std::to_string(d2d_range_factor) + " outside [3, 5]");
    }
    return warnings;
  }

  bool operator==(const RecoveryStrategy&) const = default;
};

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::pure_v2v_backtrack: return "backtrack";
    case StrategyKind::d2d_on_demand: return "d2d_on_demand";
    case StrategyKind::d2d_proactive: return "d2d_proactive";
  }
  return "?";
}

enum class DeliveryMode { none, v2v_to_rsu, d2d_bridge_then_v2v, cellular_direct };

inline const char* to_string(DeliveryMode m) {
  switch (m) {
    case DeliveryMode::none: return "none";
    case DeliveryMode::v2v_to_rsu: return "v2v_to_rsu";
    case DeliveryMode::d2d_bridge_then_v2v: return "d2d_bridge_then_v2v";
    case DeliveryMode::cellular_direct: return "cellular_direct";
  }
  return "?";
}

enum class TraceEvent { source, v2v_hop, rsu_delivery, dead_end, backward_hop, carry, d2d_bridge, cellular_uplink, failure };

inline const char* to_string(TraceEvent e) {
  switch (e) {
    case TraceEvent::source: return "SRC";
    case TraceEvent::v2v_hop: return "HOP";
    case TraceEvent::rsu_delivery: return "RSU";
    case TraceEvent::dead_end: return "DEAD";
    case TraceEvent::backward_hop: return "BACK";
    case TraceEvent::carry: return "CARRY";
    case TraceEvent::d2d_bridge: return "D2D";
    case TraceEvent::cellular_uplink: return "CELL";
    case TraceEvent::failure: return "FAIL";
  }
  return "?";
}

/// One step of a message's life. `vehicle_id` is the holder after the event;
/// `delay` is the time the event added and `timestamp` the running total.
struct TraceRecord {
  std::uint64_t vehicle_id = 0;
  TraceEvent event = TraceEvent::source;
  double timestamp = 0.0;
  double position = 0.0;
  double delay = 0.0;

  bool operator==(const TraceRecord&) const = default;
};

struct RoutingOutcome {
  unsigned forward_hops = 0;
  unsigned backward_hops = 0;
  unsigned d2d_links = 0;
  unsigned dead_ends = 0;
  double carry_time = 0.0;
  double total_delay = 0.0;
  bool delivered = false;
  DeliveryMode delivery_mode = DeliveryMode::none;
  std::optional<std::size_t> stuck_index;  ///< set by route_v2v on a dead end
  std::vector<TraceRecord> trace;

  void record(std::uint64_t id, TraceEvent ev, double position, double delay) {
    total_delay += delay;
    trace.push_back({id, ev, total_delay, position, delay});
  }

  bool operator==(const RoutingOutcome&) const = default;
};

/// Line-oriented trace: "<timestamp_s> <holder_position_m> <event>".
inline void write_trace(std::ostream& os, const RoutingOutcome& out) {
  char buf[96];
  for (const auto& r : out.trace) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %s\n", r.timestamp, r.position, to_string(r.event));
    os << buf;
  }
}

// ---------------------------------------------------------------------------
// Forwarding primitives

/// Farthest vehicle ahead of `current` within range, or nothing (dead end).
inline std::optional<std::size_t> greedy_next_hop(const RoadSnapshot& s, std::size_t current, double range) {
  const auto& v = s.vehicles;
  const double from = v.at(current).position;
  const auto it = std::upper_bound(v.begin(), v.end(), from + range,
                                   [](double x, const Vehicle& veh) { return x < veh.position; });
  const auto j = static_cast<std::size_t>(it - v.begin());
  if (j == 0) return std::nullopt;
  const std::size_t cand = j - 1;
  if (cand <= current || !(v[cand].position > from)) return std::nullopt;
  return cand;
}

/// Other vehicles within range of vehicle i, in either direction.
inline std::size_t neighbor_count(const RoadSnapshot& s, std::size_t i, double range) {
  const auto& v = s.vehicles;
  const double p = v[i].position;
  const auto lo = std::lower_bound(v.begin(), v.end(), p - range,
                                   [](const Vehicle& veh, double x) { return veh.position < x; });
  const auto hi = std::upper_bound(v.begin(), v.end(), p + range,
                                   [](double x, const Vehicle& veh) { return x < veh.position; });
  return static_cast<std::size_t>(hi - lo) - 1;
}

inline double hop_delay(const RoadSnapshot& s, std::size_t sender, double range, const DelayModel& d) {
  return d.t_proc + d.t_access * static_cast<double>(neighbor_count(s, sender, range));
}

/// The RSU is reachable when strictly closer than the range.
inline bool rsu_in_range(const RoadSnapshot& s, std::size_t i, double range) {
  return s.rsu_position - s.vehicles[i].position < range;
}

namespace detail {

enum class ForwardResult { delivered, stuck };

/// Greedy V2V forwarding from `holder` until RSU delivery or a dead end.
inline ForwardResult forward(const RoadSnapshot& s, std::size_t& holder, double range, const DelayModel& d,
                             RoutingOutcome& out, std::vector<std::uint64_t>* path) {
  for (;;) {
    if (rsu_in_range(s, holder, range)) {
      out.record(s.vehicles[holder].id, TraceEvent::rsu_delivery, s.rsu_position, 0.0);
      return ForwardResult::delivered;
    }
    const auto next = greedy_next_hop(s, holder, range);
    if (!next) return ForwardResult::stuck;
    const double delay = hop_delay(s, holder, range, d);
    holder = *next;
    ++out.forward_hops;
    out.record(s.vehicles[holder].id, TraceEvent::v2v_hop, s.vehicles[holder].position, delay);
    if (path) path->push_back(s.vehicles[holder].id);
  }
}

}  // namespace detail

/// Pure V2V forwarding without recovery. A dead end leaves the message
/// undelivered with `stuck_index` set.
inline RoutingOutcome route_v2v(const RoadSnapshot& s, std::size_t source, double range, const DelayModel& d) {
  if (source >= s.size()) throw DomainError("route_v2v: source index out of range");
  RoutingOutcome out;
  out.record(s.vehicles[source].id, TraceEvent::source, s.vehicles[source].position, 0.0);
  std::size_t holder = source;
  if (detail::forward(s, holder, range, d, out, nullptr) == detail::ForwardResult::delivered) {
    out.delivered = true;
    out.delivery_mode = DeliveryMode::v2v_to_rsu;
  } else {
    ++out.dead_ends;
    out.stuck_index = holder;
    out.record(s.vehicles[holder].id, TraceEvent::dead_end, s.vehicles[holder].position, 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recoveries

struct D2DRecovery {
  std::optional<std::size_t> bridge_target;  ///< empty: cellular delivery to the TCC
  double added_delay = 0.0;
};

inline double d2d_discovery_delay(const RecoveryStrategy& st, const DelayModel& d) {
  return st.kind == StrategyKind::d2d_proactive ? d.t_d2d_discovery_proactive : d.t_d2d_discovery_on_demand;
}

/// Bridges from a stuck vehicle to the farthest vehicle within factor * R, or
/// falls back to the cellular uplink when none exists.
inline D2DRecovery recover_d2d(const RoadSnapshot& s, std::size_t stuck, const RecoveryStrategy& st, double range,
                               const DelayModel& d) {
  if (!st.uses_d2d()) throw DomainError("recover_d2d: strategy does not use D2D");
  const auto target = greedy_next_hop(s, stuck, st.d2d_range_factor * range);
  if (!target) return {std::nullopt, d.t_cellular_fallback};
  return {target, d2d_discovery_delay(st, d) + d.t_d2d_setup + d.t_d2d_tx};
}

/// Mobility inputs for store-carry-forward.
struct MobilityContext {
  double lambda_a;
  TruncatedNormal speeds;
  Rng* rng;
};

enum class BacktrackResult { resumed, delivered, failed };

/// Backtracking plus store-carry-forward from a dead end at `holder`.
///
/// The message first travels back along `path` (the holders so far, ending
/// with the current one), at most max_back_hops times, while the previous
/// holder is still in radio range; each pass costs a normal hop delay. After
/// every pass and on every carry tick the holder re-attempts forwarding: it
/// resumes once its farthest in-range vehicle lies beyond the stuck vehicle's
/// current position, and delivers if the RSU comes into range. The carry
/// budget bounds the total time spent holding.
///
/// On `resumed` the snapshot has been advanced and `holder` indexes the holder
/// in it; greedy forwarding from there makes progress.
inline BacktrackResult recover_backtrack(RoadSnapshot& s, std::size_t& holder, std::vector<std::uint64_t>& path,
                                         RoutingOutcome& out, const RecoveryStrategy& st, double range,
                                         const DelayModel& d, MobilityContext& mob) {
  if (st.uses_d2d()) throw DomainError("recover_backtrack: strategy is not backtracking");
  const std::uint64_t frontier_id = s.vehicles[holder].id;
  std::uint64_t holder_id = frontier_id;
  unsigned backs = 0;

  const auto progress = [&]() {
    const auto next = greedy_next_hop(s, holder, range);
    if (!next) return false;
    const std::size_t f = s.index_of(frontier_id);
    if (f == s.size()) return true;  // frontier left the road
    return s.vehicles[*next].position > s.vehicles[f].position;
  };

  for (;;) {
    if (rsu_in_range(s, holder, range)) {
      out.record(holder_id, TraceEvent::rsu_delivery, s.rsu_position, 0.0);
      return BacktrackResult::delivered;
    }
    if (progress()) return BacktrackResult::resumed;

    if (backs < st.max_back_hops && path.size() >= 2) {
      const std::size_t prev = s.index_of(path[path.size() - 2]);
      if (prev < s.size() && std::abs(s.vehicles[prev].position - s.vehicles[holder].position) <= range) {
        const double delay = hop_delay(s, holder, range, d);
        path.pop_back();
        holder = prev;
        holder_id = s.vehicles[holder].id;
        ++backs;
        ++out.backward_hops;
        out.record(holder_id, TraceEvent::backward_hop, s.vehicles[holder].position, delay);
        continue;
      }
    }

    if (out.carry_time + d.carry_step > d.carry_budget) {
      out.record(holder_id, TraceEvent::failure, s.vehicles[holder].position, 0.0);
      return BacktrackResult::failed;
    }
    s = advance(std::move(s), d.carry_step, mob.lambda_a, mob.speeds, *mob.rng);
    out.carry_time += d.carry_step;
    holder = s.index_of(holder_id);
    if (holder == s.size()) {
      // Carried past the road end, i.e. past the RSU.
      out.record(holder_id, TraceEvent::rsu_delivery, s.rsu_position, d.carry_step);
      return BacktrackResult::delivered;
    }
    out.record(holder_id, TraceEvent::carry, s.vehicles[holder].position, d.carry_step);
  }
}

/// Full hybrid routing from `source`: V2V forwarding with the configured
/// recovery at every dead end. `mobility` is required for backtracking only.
inline RoutingOutcome route_hybrid(RoadSnapshot s, std::size_t source, const RecoveryStrategy& st, double range,
                                   const DelayModel& d, MobilityContext* mobility = nullptr) {
  if (source >= s.size()) throw DomainError("route_hybrid: source index out of range");
  if (!st.uses_d2d() && mobility == nullptr) throw DomainError("route_hybrid: backtracking needs mobility");
  RoutingOutcome out;
  std::size_t holder = source;
  std::vector<std::uint64_t> path{s.vehicles[holder].id};
  out.record(s.vehicles[holder].id, TraceEvent::source, s.vehicles[holder].position, 0.0);

  for (;;) {
    if (detail::forward(s, holder, range, d, out, &path) == detail::ForwardResult::delivered) {
      out.delivered = true;
      out.delivery_mode = out.d2d_links > 0 ? DeliveryMode::d2d_bridge_then_v2v : DeliveryMode::v2v_to_rsu;
      return out;
    }
    ++out.dead_ends;
    out.record(s.vehicles[holder].id, TraceEvent::dead_end, s.vehicles[holder].position, 0.0);

    if (st.uses_d2d()) {
      const auto rec = recover_d2d(s, holder, st, range, d);
      if (!rec.bridge_target) {
        out.record(s.vehicles[holder].id, TraceEvent::cellular_uplink, s.vehicles[holder].position, rec.added_delay);
        out.delivered = true;
        out.delivery_mode = DeliveryMode::cellular_direct;
        return out;
      }
      holder = *rec.bridge_target;
      ++out.d2d_links;
      path.push_back(s.vehicles[holder].id);
      out.record(s.vehicles[holder].id, TraceEvent::d2d_bridge, s.vehicles[holder].position, rec.added_delay);
      continue;
    }

    switch (recover_backtrack(s, holder, path, out, st, range, d, *mobility)) {
      case BacktrackResult::resumed:
        break;  // path already ends with the holder
      case BacktrackResult::delivered:
        out.delivered = true;
        out.delivery_mode = DeliveryMode::v2v_to_rsu;
        return out;
      case BacktrackResult::failed:
        return out;
    }
  }
}

// ---------------------------------------------------------------------------
// Scenario runs

/// Road, traffic and timing of one simulated alert.
struct Scenario {
  TrafficParams traffic;
  double range = 200.0;         ///< V2V range R, m
  double road_length = 10000.0; ///< L, m; the RSU sits at L
  DelayModel delay;

  bool operator==(const Scenario&) const = default;
};

/// A scenario with its spatial rate resolved once.
class ScenarioRunner {
 public:
  explicit ScenarioRunner(Scenario sc)
      : scenario_(std::move(sc)), lambda_(spatial_rate(scenario_.traffic)), speeds_(scenario_.traffic) {
    if (!(scenario_.range > 0.0)) throw DomainError("scenario: range must be > 0");
    if (!(scenario_.road_length > 0.0)) throw DomainError("scenario: road length must be > 0");
    scenario_.delay.validate();
  }

  const Scenario& scenario() const noexcept { return scenario_; }
  double lambda() const noexcept { return lambda_; }
  const TruncatedNormal& speeds() const noexcept { return speeds_; }

  /// Poisson road plus the alerting vehicle at position 0 (index 0). Depends on
  /// the seed only, so every strategy sees the same road for a given seed.
  RoadSnapshot snapshot(std::uint64_t seed) const {
    Rng rng(derive_seed(seed, 0));
    auto s = generate_snapshot(lambda_, scenario_.road_length, speeds_, rng);
    const double v = sample_speed(speeds_, rng);
    s.vehicles.insert(s.vehicles.begin(), Vehicle{s.next_id++, 0.0, v});
    return s;
  }

  RoutingOutcome run(const RecoveryStrategy& st, std::uint64_t seed) const {
    Rng mobility_rng(derive_seed(seed, 1));
    MobilityContext mob{scenario_.traffic.lambda_a, speeds_, &mobility_rng};
    return route_hybrid(snapshot(seed), 0, st, scenario_.range, scenario_.delay, &mob);
  }

  /// Pure V2V attempt on the same road; tells whether a dead end occurs.
  RoutingOutcome run_v2v(std::uint64_t seed) const {
    return route_v2v(snapshot(seed), 0, scenario_.range, scenario_.delay);
  }

 private:
  Scenario scenario_;
  double lambda_;
  TruncatedNormal speeds_;
};

/// Generates a road, routes one alert with `strategy`, deterministic in seed.
inline RoutingOutcome run_hybrid(const Scenario& sc, const RecoveryStrategy& st, std::uint64_t seed) {
  st.validate();
  return ScenarioRunner(sc).run(st, seed);
}

// ---------------------------------------------------------------------------
// Component-level measurements

/// One connected component crossed by greedy relaying.
struct ComponentRecord {
  std::size_t first = 0;           ///< index of the first vehicle
  std::size_t last = 0;            ///< index of the last vehicle
  std::size_t retransmitters = 0;  ///< N_b: vehicles on the greedy chain
  double delay = 0.0;              ///< sum of per-sender hop delays
  double extent = 0.0;             ///< last - first + R
};

/// Partitions the road into connected components and relays greedily through
/// each, jumping to the first vehicle of the next component at every gap.
inline std::vector<ComponentRecord> traverse_components(const RoadSnapshot& s, double range, const DelayModel& d) {
  std::vector<ComponentRecord> out;
  std::size_t i = 0;
  while (i < s.size()) {
    ComponentRecord c;
    c.first = i;
    std::size_t holder = i;
    for (;;) {
      ++c.retransmitters;
      c.delay += hop_delay(s, holder, range, d);
      const auto next = greedy_next_hop(s, holder, range);
      if (!next) break;
      holder = *next;
    }
    c.last = holder;
    c.extent = s.position(c.last) - s.position(c.first) + range;
    out.push_back(c);
    i = holder + 1;
  }
  return out;
}

/// A component grown from a vehicle at 0 on an unbounded Poisson road.
struct ComponentSample {
  std::size_t retransmitters = 0;
  double extent = 0.0;            ///< last - first + R
  std::vector<double> hop_lengths; ///< greedy hop distances in order
};

inline ComponentSample simulate_component(double lambda, double range, Rng& rng) {
  std::vector<double> x{0.0};
  for (;;) {
    const double gap = rng.exponential(lambda);
    if (gap > range) break;
    x.push_back(x.back() + gap);
  }
  ComponentSample c;
  std::size_t holder = 0;
  c.retransmitters = 1;
  while (holder + 1 < x.size()) {
    const auto it = std::upper_bound(x.begin() + static_cast<std::ptrdiff_t>(holder), x.end(), x[holder] + range);
    const auto next = static_cast<std::size_t>(it - x.begin()) - 1;
    c.hop_lengths.push_back(x[next] - x[holder]);
    holder = next;
    ++c.retransmitters;
  }
  c.extent = x.back() + range;
  return c;
}

/// Empirical distribution of N_b over `count` simulated components.
inline ComponentDistribution empirical_component_distribution(double lambda, double range, std::size_t count,
                                                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> hist;
  for (std::size_t n = 0; n < count; ++n) {
    const auto c = simulate_component(lambda, range, rng);
    if (hist.size() < c.retransmitters) hist.resize(c.retransmitters, 0.0);
    hist[c.retransmitters - 1] += 1.0;
  }
  ComponentDistribution d;
  d.method = PmfMethod::monte_carlo;
  for (double h : hist) d.pmf.push_back(h / static_cast<double>(count));
  d.tail_mass = 0.0;
  return d;
}

}  // namespace v2vd2d
