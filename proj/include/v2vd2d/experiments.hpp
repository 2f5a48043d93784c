#pragma once

// Reproduction harness: seeded parallel replications, analytic-versus-
// simulation tables for hop count and delay, recovery-strategy comparison
// tables, and persistence of results with a manifest.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "v2vd2d/connectivity.hpp"
#include "v2vd2d/delay_model.hpp"
#include "v2vd2d/digest.hpp"
#include "v2vd2d/errors.hpp"
#include "v2vd2d/rng.hpp"
#include "v2vd2d/routing_sim.hpp"
#include "v2vd2d/stats.hpp"
#include "v2vd2d/traffic_model.hpp"

namespace v2vd2d {

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  TrafficParams traffic;
  /// Densities lambda*R swept in the hop/delay table, reached by solving for
  /// the arrival rate at each range; empty means traffic.lambda_a only.
  std::vector<double> lambda_prime_sweep;
  std::vector<double> ranges{200.0};
  std::vector<double> road_lengths{10000.0};
  std::vector<StrategyKind> strategies{StrategyKind::pure_v2v_backtrack, StrategyKind::d2d_on_demand,
                                       StrategyKind::d2d_proactive};
  std::vector<double> d2d_range_factors{3.0, 5.0};
  unsigned max_back_hops = 1;
  bool allow_nonstandard_factor = false;
  std::size_t replications = 10000;
  std::uint64_t master_seed = 20140601;
  DelayModel delay;
  double closed_form_margin = ConnectivityParams::default_margin;
  double deadend_floor = 0.5;
  std::string output_dir = "out";

  /// Arrival rates swept at range R.
  std::vector<double> arrival_rates(double range) const {
    if (lambda_prime_sweep.empty()) return {traffic.lambda_a};
    std::vector<double> out;
    for (double lp : lambda_prime_sweep) out.push_back(arrival_rate_for(lp / range, traffic));
    return out;
  }

  /// Backtracking once, each D2D kind once per range factor.
  std::vector<RecoveryStrategy> expanded_strategies() const {
    std::vector<RecoveryStrategy> out;
    for (auto k : strategies) {
      if (k == StrategyKind::pure_v2v_backtrack) {
        out.push_back(RecoveryStrategy::backtrack(max_back_hops));
        continue;
      }
      for (double f : d2d_range_factors) {
        RecoveryStrategy st{k, max_back_hops, f, allow_nonstandard_factor};
        out.push_back(st);
      }
    }
    return out;
  }

  void validate() const {
    traffic.validate();
    for (double lp : lambda_prime_sweep) {
      if (!(lp > 0.0)) throw DomainError("lambda_prime_sweep entries must be > 0");
    }
    if (ranges.empty() || road_lengths.empty()) throw DomainError("ranges and road_lengths must be non-empty");
    for (double r : ranges) {
      if (!(r > 0.0)) throw DomainError("ranges must be > 0");
    }
    for (double l : road_lengths) {
      if (!(l > 0.0)) throw DomainError("road_lengths must be > 0");
    }
    if (replications < 1) throw DomainError("replications must be >= 1");
    delay.validate();
    for (const auto& st : expanded_strategies()) st.validate();
  }

  bool operator==(const ExperimentConfig&) const = default;
};

NLOHMANN_JSON_SERIALIZE_ENUM(StrategyKind, {{StrategyKind::pure_v2v_backtrack, "backtrack"},
                                            {StrategyKind::d2d_on_demand, "d2d_on_demand"},
                                            {StrategyKind::d2d_proactive, "d2d_proactive"}})

inline void to_json(nlohmann::json& j, const TrafficParams& t) {
  j = {{"lambda_a", t.lambda_a}, {"v_min", t.v_min}, {"v_max", t.v_max}, {"mu", t.mu}, {"sigma", t.sigma}};
}
inline void from_json(const nlohmann::json& j, TrafficParams& t) {
  j.at("lambda_a").get_to(t.lambda_a);
  j.at("v_min").get_to(t.v_min);
  j.at("v_max").get_to(t.v_max);
  j.at("mu").get_to(t.mu);
  j.at("sigma").get_to(t.sigma);
}

inline void to_json(nlohmann::json& j, const DelayModel& d) {
  j = {{"t_proc", d.t_proc},
       {"t_access", d.t_access},
       {"t_d2d_discovery_on_demand", d.t_d2d_discovery_on_demand},
       {"t_d2d_discovery_proactive", d.t_d2d_discovery_proactive},
       {"t_d2d_setup", d.t_d2d_setup},
       {"t_d2d_tx", d.t_d2d_tx},
       {"t_cellular_fallback", d.t_cellular_fallback},
       {"carry_step", d.carry_step},
       {"carry_budget", d.carry_budget}};
}
inline void from_json(const nlohmann::json& j, DelayModel& d) {
  j.at("t_proc").get_to(d.t_proc);
  j.at("t_access").get_to(d.t_access);
  j.at("t_d2d_discovery_on_demand").get_to(d.t_d2d_discovery_on_demand);
  j.at("t_d2d_discovery_proactive").get_to(d.t_d2d_discovery_proactive);
  j.at("t_d2d_setup").get_to(d.t_d2d_setup);
  j.at("t_d2d_tx").get_to(d.t_d2d_tx);
  j.at("t_cellular_fallback").get_to(d.t_cellular_fallback);
  j.at("carry_step").get_to(d.carry_step);
  j.at("carry_budget").get_to(d.carry_budget);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"traffic", c.traffic},
       {"lambda_prime_sweep", c.lambda_prime_sweep},
       {"ranges", c.ranges},
       {"road_lengths", c.road_lengths},
       {"strategies", c.strategies},
       {"d2d_range_factors", c.d2d_range_factors},
       {"max_back_hops", c.max_back_hops},
       {"allow_nonstandard_factor", c.allow_nonstandard_factor},
       {"replications", c.replications},
       {"master_seed", c.master_seed},
       {"delay", c.delay},
       {"closed_form_margin", c.closed_form_margin},
       {"deadend_floor", c.deadend_floor},
       {"output_dir", c.output_dir}};
}
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  j.at("traffic").get_to(c.traffic);
  j.at("lambda_prime_sweep").get_to(c.lambda_prime_sweep);
  j.at("ranges").get_to(c.ranges);
  j.at("road_lengths").get_to(c.road_lengths);
  j.at("strategies").get_to(c.strategies);
  j.at("d2d_range_factors").get_to(c.d2d_range_factors);
  j.at("max_back_hops").get_to(c.max_back_hops);
  j.at("allow_nonstandard_factor").get_to(c.allow_nonstandard_factor);
  j.at("replications").get_to(c.replications);
  j.at("master_seed").get_to(c.master_seed);
  j.at("delay").get_to(c.delay);
  j.at("closed_form_margin").get_to(c.closed_form_margin);
  j.at("deadend_floor").get_to(c.deadend_floor);
  j.at("output_dir").get_to(c.output_dir);
}

// ---------------------------------------------------------------------------
// Replications

struct RunOptions {
  unsigned workers = 1;  ///< 0 = hardware concurrency
  std::function<void(const std::string&)> progress;
};

inline unsigned resolve_workers(unsigned w) {
  if (w != 0) return w;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Evaluates f(i) for i in [0, n) on `workers` threads. Results are stored by
/// index, so the output does not depend on the worker count or scheduling.
template <class F>
auto run_replications(std::size_t n, unsigned workers, F&& f) {
  using R = std::invoke_result_t<F&, std::size_t>;
  std::vector<R> out(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        out[i] = f(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
      }
    }
  };
  const unsigned w = std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(n, 1));
  if (w <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (unsigned t = 0; t < w; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

/// Per-replication numbers kept from a RoutingOutcome.
struct OutcomeMetrics {
  double forward_hops = 0.0;
  double backward_hops = 0.0;
  double d2d_links = 0.0;
  double total_delay = 0.0;
  double delivered = 0.0;

  static OutcomeMetrics of(const RoutingOutcome& o) {
    return {static_cast<double>(o.forward_hops), static_cast<double>(o.backward_hops),
            static_cast<double>(o.d2d_links), o.total_delay, o.delivered ? 1.0 : 0.0};
  }
};

struct AggregateStats {
  MetricSummary forward_hops;
  MetricSummary backward_hops;
  MetricSummary d2d_links;
  MetricSummary total_delay;
  MetricSummary delivery_rate;
  std::size_t replications = 0;

  bool operator==(const AggregateStats&) const = default;
};

inline AggregateStats aggregate(std::span<const OutcomeMetrics> ms) {
  const auto column = [&](double OutcomeMetrics::*field) {
    std::vector<double> v;
    v.reserve(ms.size());
    for (const auto& m : ms) v.push_back(m.*field);
    return summarize(v);
  };
  AggregateStats a;
  a.forward_hops = column(&OutcomeMetrics::forward_hops);
  a.backward_hops = column(&OutcomeMetrics::backward_hops);
  a.d2d_links = column(&OutcomeMetrics::d2d_links);
  a.total_delay = column(&OutcomeMetrics::total_delay);
  a.delivery_rate = column(&OutcomeMetrics::delivered);
  a.replications = ms.size();
  return a;
}

/// `replications` independent run_hybrid instances, replication i seeded with
/// derive_seed(master_seed, i).
inline AggregateStats monte_carlo(const Scenario& sc, const RecoveryStrategy& st, std::size_t replications,
                                  std::uint64_t master_seed, unsigned workers = 1) {
  if (replications < 1) throw DomainError("monte_carlo: replications must be >= 1");
  st.validate();
  const ScenarioRunner runner(sc);
  const auto ms = run_replications(replications, workers, [&](std::size_t i) {
    return OutcomeMetrics::of(runner.run(st, derive_seed(master_seed, i)));
  });
  return aggregate(ms);
}

// ---------------------------------------------------------------------------
// Tables

inline std::string fmt9(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

inline std::string fmt9(const std::optional<double>& x) { return x ? fmt9(*x) : std::string("n/a"); }

/// Short tag for an error, used in table cells.
inline std::string error_tag(const std::exception& e) {
  if (dynamic_cast<const ValidityError*>(&e)) return "error:validity";
  if (dynamic_cast<const DerivativeInstability*>(&e)) return "error:derivative_instability";
  if (dynamic_cast<const NonConvergence*>(&e)) return "error:non_convergence";
  if (dynamic_cast<const SingularityError*>(&e)) return "error:singularity";
  if (dynamic_cast<const AliasingError*>(&e)) return "error:aliasing";
  if (dynamic_cast<const OutOfRange*>(&e)) return "error:out_of_range";
  if (dynamic_cast<const InsufficientDeadEnds*>(&e)) return "error:insufficient_dead_ends";
  if (dynamic_cast<const DomainError*>(&e)) return "error:domain";
  return "error";
}

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

/// CSV text: a "# master_seed=" comment line, the header, then one line per row.
inline std::string to_csv(const Table& t, std::uint64_t master_seed) {
  std::ostringstream os;
  os << "# master_seed=" << master_seed << '\n';
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
  return os.str();
}

/// Parses to_csv output back (comment lines skipped).
inline Table parse_csv(const std::string& text, std::string name = {}) {
  Table t;
  t.name = std::move(name);
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (header) {
      t.columns = std::move(cells);
      header = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Hop count and delay: analytic versus simulated

struct Fig3Row {
  double lambda_a = 0.0;
  double range = 0.0;
  double road_length = 0.0;
  double lambda = 0.0;
  double lambda_prime = 0.0;
  std::optional<double> analytic_hops;
  std::optional<double> analytic_delay;
  MetricSummary sim_hops;
  MetricSummary sim_delay;
  std::optional<double> rel_dev_hops;
  std::optional<double> rel_dev_delay;
  std::string status;  ///< pass | fail | simulate_only | error:<kind>
};

struct Fig3Result {
  std::vector<Fig3Row> rows;

  Table table() const {
    Table t{"fig3",
            {"R_m", "L_m", "lambda_per_m", "lambda_prime", "analytic_hops", "analytic_delay_s", "sim_hops_mean",
             "sim_hops_ci95", "sim_delay_mean_s", "sim_delay_ci95_s", "rel_dev_hops", "rel_dev_delay", "status"},
            {}};
    for (const auto& r : rows) {
      const std::string missing = r.status == "simulate_only" ? "simulate_only" : r.status;
      const auto opt = [&](const std::optional<double>& v) { return v ? fmt9(*v) : missing; };
      t.rows.push_back({fmt9(r.range), fmt9(r.road_length), fmt9(r.lambda), fmt9(r.lambda_prime),
                        opt(r.analytic_hops), opt(r.analytic_delay), fmt9(r.sim_hops.mean), fmt9(r.sim_hops.ci95),
                        fmt9(r.sim_delay.mean), fmt9(r.sim_delay.ci95), opt(r.rel_dev_hops), opt(r.rel_dev_delay),
                        r.status});
    }
    return t;
  }
};

inline constexpr double fig3_hops_tolerance = 0.05;
inline constexpr double fig3_delay_tolerance = 0.10;

/// Per-road totals from relaying through every connected component.
struct RoadTotals {
  double retransmitters = 0.0;
  double delay = 0.0;
  double extent = 0.0;
};

inline RoadTotals simulate_road_totals(double lambda, double road_length, double range, const TruncatedNormal& speeds,
                                       const DelayModel& delay, std::uint64_t seed) {
  Rng rng(seed);
  const auto snap = generate_snapshot(lambda, road_length, speeds, rng);
  RoadTotals t;
  for (const auto& c : traverse_components(snap, range, delay)) {
    t.retransmitters += static_cast<double>(c.retransmitters);
    t.delay += c.delay;
    t.extent += c.extent;
  }
  return t;
}

/// For every (lambda_a, R, L) cell: hops and delay over the road from the
/// closed form next to their simulated counterparts. Simulated hops are
/// L * sum(N_b) / sum(component extent) over the components of the simulated
/// roads (and likewise for delay), which is the quantity the closed form
/// predicts; inter-component gaps are not counted.
inline Fig3Result run_fig3(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  Fig3Result res;
  const TruncatedNormal speeds(cfg.traffic);
  std::uint64_t cell = 0;
  for (double R : cfg.ranges) {
    for (double lambda_a : cfg.arrival_rates(R)) {
      TrafficParams tp = cfg.traffic;
      tp.lambda_a = lambda_a;
      const double lambda = spatial_rate(tp);
      for (double L : cfg.road_lengths) {
        Fig3Row row;
        row.lambda_a = lambda_a;
        row.range = R;
        row.road_length = L;
        row.lambda = lambda;
        row.lambda_prime = lambda * R;
        const ConnectivityParams cp(lambda, R, cfg.closed_form_margin);

        const std::uint64_t cell_seed = derive_seed(cfg.master_seed, 0x3000 + cell++);
        const auto totals = run_replications(cfg.replications, opts.workers, [&](std::size_t i) {
          return simulate_road_totals(lambda, L, R, speeds, cfg.delay, derive_seed(cell_seed, i));
        });
        std::vector<double> hops, delays, extents;
        for (const auto& t : totals) {
          hops.push_back(t.retransmitters * L);
          delays.push_back(t.delay * L);
          extents.push_back(t.extent);
        }
        row.sim_hops = summarize_ratio(hops, extents);
        row.sim_delay = summarize_ratio(delays, extents);

        if (!cp.closed_form_valid()) {
          row.status = "simulate_only";
        } else {
          try {
            row.analytic_hops = expected_hops_over_road(cp, L);
            row.analytic_delay = analytic_delay(cp, L, cfg.delay);
            row.rel_dev_hops = (row.sim_hops.mean - *row.analytic_hops) / *row.analytic_hops;
            row.rel_dev_delay = (row.sim_delay.mean - *row.analytic_delay) / *row.analytic_delay;
            const bool ok = std::abs(*row.rel_dev_hops) <= fig3_hops_tolerance &&
                            std::abs(*row.rel_dev_delay) <= fig3_delay_tolerance;
            row.status = ok ? "pass" : "fail";
          } catch (const Error& e) {
            row.analytic_hops.reset();
            row.analytic_delay.reset();
            row.rel_dev_hops.reset();
            row.rel_dev_delay.reset();
            row.status = error_tag(e);
          }
        }
        if (opts.progress) {
          opts.progress("fig3 cell R=" + fmt9(R) + " L=" + fmt9(L) + " lambda'=" + fmt9(row.lambda_prime) + ": " +
                        row.status);
        }
        res.rows.push_back(std::move(row));
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Recovery-strategy comparison

struct Fig4Row {
  RecoveryStrategy strategy;
  double range = 0.0;
  AggregateStats stats;
  double deadend_rate = 0.0;
  std::string error;  ///< non-empty replaces every statistic cell
};

struct Fig4Headline {
  double range = 0.0;
  RecoveryStrategy strategy;
  std::size_t deadend_samples = 0;
  PairedComparison backtrack_minus_d2d;  ///< delay difference on dead-end roads
  std::size_t delivery_violations = 0;   ///< seeds delivered by backtracking but not by this strategy
  std::size_t proactive_violations = 0;  ///< seeds where proactive delay exceeds on-demand (proactive rows)
  bool deadend_floor_met = false;
  std::string error;
};

struct Fig4Result {
  std::vector<Fig4Row> all;
  std::vector<Fig4Row> deadend;
  std::vector<Fig4Headline> headline;

  static Table rows_table(const std::string& name, const std::vector<Fig4Row>& rows) {
    Table t{name,
            {"strategy", "cr_factor", "R_m", "forward_hops_mean", "backward_hops_mean", "d2d_links_mean",
             "delay_mean_s", "delay_ci95_s", "delivery_rate", "deadend_rate"},
            {}};
    for (const auto& r : rows) {
      const std::string cr = r.strategy.uses_d2d() ? fmt9(r.strategy.d2d_range_factor) : "n/a";
      if (!r.error.empty()) {
        t.rows.push_back({to_string(r.strategy.kind), cr, fmt9(r.range), r.error, r.error, r.error, r.error, r.error,
                          r.error, fmt9(r.deadend_rate)});
        continue;
      }
      t.rows.push_back({to_string(r.strategy.kind), cr, fmt9(r.range), fmt9(r.stats.forward_hops.mean),
                        fmt9(r.stats.backward_hops.mean), fmt9(r.stats.d2d_links.mean),
                        fmt9(r.stats.total_delay.mean), fmt9(r.stats.total_delay.ci95),
                        fmt9(r.stats.delivery_rate.mean), fmt9(r.deadend_rate)});
    }
    return t;
  }

  Table table() const { return rows_table("fig4", all); }
  Table deadend_table() const { return rows_table("fig4_deadend", deadend); }

  Table headline_table() const {
    Table t{"fig4_headline",
            {"R_m", "strategy", "cr_factor", "deadend_samples", "delay_gain_mean_s", "delay_gain_lower99_s",
             "d2d_faster_at_99", "delivery_violations", "proactive_violations", "deadend_floor_met"},
            {}};
    for (const auto& h : headline) {
      if (!h.error.empty()) {
        t.rows.push_back({fmt9(h.range), to_string(h.strategy.kind), fmt9(h.strategy.d2d_range_factor),
                          std::to_string(h.deadend_samples), h.error, h.error, h.error, h.error, h.error,
                          h.deadend_floor_met ? "yes" : "no"});
        continue;
      }
      t.rows.push_back({fmt9(h.range), to_string(h.strategy.kind), fmt9(h.strategy.d2d_range_factor),
                        std::to_string(h.deadend_samples), fmt9(h.backtrack_minus_d2d.mean_difference),
                        fmt9(h.backtrack_minus_d2d.lower_bound), h.backtrack_minus_d2d.significant ? "yes" : "no",
                        std::to_string(h.delivery_violations), std::to_string(h.proactive_violations),
                        h.deadend_floor_met ? "yes" : "no"});
    }
    return t;
  }
};

inline constexpr std::size_t min_deadend_events = 100;

/// Every strategy on the same roads (replication i uses one seed for all
/// strategies), at each range R on the first configured road length.
/// Statistics are reported over all roads and over roads where pure V2V
/// forwarding from the source hits a dead end.
inline Fig4Result run_fig4(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  const auto strategies = cfg.expanded_strategies();
  if (strategies.empty()) throw DomainError("fig4: no strategies configured");
  const double L = cfg.road_lengths.front();
  Fig4Result res;
  std::size_t usable_blocks = 0;

  for (double R : cfg.ranges) {
    const ScenarioRunner runner(Scenario{cfg.traffic, R, L, cfg.delay});
    struct Replication {
      bool dead_end = false;
      std::vector<OutcomeMetrics> per_strategy;
    };
    const auto reps = run_replications(cfg.replications, opts.workers, [&](std::size_t i) {
      const std::uint64_t seed = derive_seed(cfg.master_seed, i);
      Replication r;
      r.dead_end = !runner.run_v2v(seed).delivered;
      for (const auto& st : strategies) r.per_strategy.push_back(OutcomeMetrics::of(runner.run(st, seed)));
      return r;
    });

    std::size_t deadends = 0;
    for (const auto& r : reps) deadends += r.dead_end ? 1 : 0;
    const double deadend_rate = static_cast<double>(deadends) / static_cast<double>(reps.size());
    const bool enough = deadends >= min_deadend_events;
    if (enough) ++usable_blocks;

    const auto metrics_for = [&](std::size_t s, bool conditioned) {
      std::vector<OutcomeMetrics> v;
      for (const auto& r : reps) {
        if (!conditioned || r.dead_end) v.push_back(r.per_strategy[s]);
      }
      return v;
    };

    std::optional<std::size_t> backtrack_index;
    for (std::size_t s = 0; s < strategies.size(); ++s) {
      if (!strategies[s].uses_d2d()) backtrack_index = s;
      const auto all = metrics_for(s, false);
      res.all.push_back({strategies[s], R, aggregate(all), deadend_rate, {}});
      Fig4Row cond{strategies[s], R, {}, deadend_rate, {}};
      if (enough) {
        cond.stats = aggregate(metrics_for(s, true));
      } else {
        cond.error = "error:insufficient_dead_ends";
      }
      res.deadend.push_back(std::move(cond));
    }

    if (!backtrack_index) continue;
    const auto bt = metrics_for(*backtrack_index, true);
    for (std::size_t s = 0; s < strategies.size(); ++s) {
      if (!strategies[s].uses_d2d()) continue;
      Fig4Headline h;
      h.range = R;
      h.strategy = strategies[s];
      h.deadend_samples = deadends;
      h.deadend_floor_met = deadend_rate >= cfg.deadend_floor;
      for (const auto& r : reps) {
        if (r.per_strategy[*backtrack_index].delivered > r.per_strategy[s].delivered) ++h.delivery_violations;
      }
      if (strategies[s].kind == StrategyKind::d2d_proactive) {
        for (std::size_t o = 0; o < strategies.size(); ++o) {
          if (strategies[o].kind != StrategyKind::d2d_on_demand ||
              strategies[o].d2d_range_factor != strategies[s].d2d_range_factor) {
            continue;
          }
          for (const auto& r : reps) {
            if (r.per_strategy[s].total_delay > r.per_strategy[o].total_delay) ++h.proactive_violations;
          }
        }
      }
      if (!enough) {
        h.error = "error:insufficient_dead_ends";
      } else {
        const auto d2d = metrics_for(s, true);
        std::vector<double> a, b;
        for (std::size_t i = 0; i < bt.size(); ++i) {
          a.push_back(bt[i].total_delay);
          b.push_back(d2d[i].total_delay);
        }
        h.backtrack_minus_d2d = paired_greater(a, b, 0.99);
      }
      res.headline.push_back(std::move(h));
    }
    if (opts.progress) {
      opts.progress("fig4 R=" + fmt9(R) + ": dead-end rate " + fmt9(deadend_rate) + " over " +
                    std::to_string(reps.size()) + " roads");
    }
  }
  if (usable_blocks == 0) {
    throw InsufficientDeadEnds("fig4: fewer than " + std::to_string(min_deadend_events) +
                               " dead-end roads at every range");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int summary_schema_version = 1;

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  out.close();
  if (!out) throw IoError(path.string(), "write failed");
}

/// Writes <name>.csv per table, summary.json (schema version, master seed,
/// resolved config, table index, `extra`) and MANIFEST ("<sha256>  <file>").
/// Returns the written file names in manifest order.
inline std::vector<std::string> persist(const std::vector<Table>& tables, const ExperimentConfig& cfg,
                                        const std::filesystem::path& dir,
                                        const nlohmann::json& extra = nlohmann::json::object()) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());

  std::vector<std::string> files;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& t : tables) {
    const std::string file = t.name + ".csv";
    write_text(dir / file, to_csv(t, cfg.master_seed));
    files.push_back(file);
    index.push_back({{"name", t.name}, {"file", file}, {"columns", t.columns}, {"rows", t.rows.size()}});
  }
  const nlohmann::json summary = {{"schema_version", summary_schema_version},
                                  {"master_seed", cfg.master_seed},
                                  {"config", cfg},
                                  {"tables", index},
                                  {"extra", extra}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  files.push_back("summary.json");

  std::sort(files.begin(), files.end());
  std::string manifest;
  for (const auto& f : files) manifest += sha256_file((dir / f).string()) + "  " + f + "\n";
  write_text(dir / "MANIFEST", manifest);
  return files;
}

/// Reads the resolved configuration back from summary.json.
inline ExperimentConfig load_summary_config(const std::filesystem::path& summary_path) {
  const auto text = read_file(summary_path.string());
  try {
    return nlohmann::json::parse(text).at("config").get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(summary_path.string(), std::string("malformed summary: ") + e.what());
  }
}

}  // namespace v2vd2d
