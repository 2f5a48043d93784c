#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "v2vd2d/connectivity.hpp"
#include "v2vd2d/routing_sim.hpp"

using namespace v2vd2d;

namespace {

RoadSnapshot road(const std::vector<double>& xs, double rsu, double speed = 25.0) {
  return RoadSnapshot::from(xs, std::vector<double>(xs.size(), speed), rsu, rsu);
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

const std::vector<RecoveryStrategy> all_strategies{RecoveryStrategy::backtrack(), RecoveryStrategy::on_demand(3),
                                                   RecoveryStrategy::on_demand(5), RecoveryStrategy::proactive(3),
                                                   RecoveryStrategy::proactive(5)};

}  // namespace

TEST(GreedyNextHop, PicksFarthestInRange) {
  const auto s = road({0, 50, 120, 190, 420}, 500);
  ASSERT_TRUE(greedy_next_hop(s, 0, 200));
  EXPECT_EQ(*greedy_next_hop(s, 0, 200), 3u);
  EXPECT_FALSE(greedy_next_hop(s, 3, 200));
}

TEST(GreedyNextHop, RangeIsInclusive) {
  const auto s = road({0, 200}, 1000);
  EXPECT_EQ(greedy_next_hop(s, 0, 200), std::optional<std::size_t>(1));
}

TEST(RouteV2V, SourceNearRsuDeliversImmediately) {
  const auto out = route_v2v(road({0, 450}, 150), 0, 200, DelayModel{});
  EXPECT_TRUE(out.delivered);
  EXPECT_EQ(out.forward_hops, 0u);
  EXPECT_EQ(out.total_delay, 0.0);
}

TEST(RouteV2V, HandCheckableChain) {
  const auto s = road({0, 150, 300, 450}, 500);
  const auto out = route_v2v(s, 0, 200, DelayModel{});
  EXPECT_TRUE(out.delivered);
  EXPECT_EQ(out.forward_hops, 3u);
  std::vector<double> visited;
  for (const auto& r : out.trace) {
    if (r.event == TraceEvent::v2v_hop) visited.push_back(r.position);
  }
  EXPECT_EQ(visited, (std::vector<double>{150, 300, 450}));
  // Neighbors within 200 m: 1, 2, 2 for senders at 0, 150, 300.
  const DelayModel d;
  EXPECT_NEAR(out.total_delay, 3 * d.t_proc + 5 * d.t_access, 1e-15);
}

TEST(RouteV2V, DeadEndIsReported) {
  const auto out = route_v2v(road({0, 50, 120, 190, 420}, 500), 0, 200, DelayModel{});
  EXPECT_FALSE(out.delivered);
  ASSERT_TRUE(out.stuck_index);
  EXPECT_EQ(*out.stuck_index, 3u);
  EXPECT_EQ(out.dead_ends, 1u);
}

TEST(RecoverD2D, BridgesTheGap) {
  const auto s = road({0, 50, 120, 190, 420}, 500);
  const DelayModel d;
  const auto rec = recover_d2d(s, 3, RecoveryStrategy::on_demand(3), 200, d);
  ASSERT_TRUE(rec.bridge_target);
  EXPECT_EQ(*rec.bridge_target, 4u);
  EXPECT_NEAR(rec.added_delay, d.t_d2d_discovery_on_demand + 0.050 + 0.010, 1e-15);
  const auto pro = recover_d2d(s, 3, RecoveryStrategy::proactive(3), 200, d);
  EXPECT_NEAR(pro.added_delay, d.t_d2d_discovery_proactive + 0.050 + 0.010, 1e-15);
}

TEST(RecoverD2D, FallsBackToCellular) {
  const auto s = road({0, 700}, 2000);
  const DelayModel d;
  const auto rec = recover_d2d(s, 0, RecoveryStrategy::on_demand(3), 200, d);
  EXPECT_FALSE(rec.bridge_target);
  EXPECT_EQ(rec.added_delay, d.t_cellular_fallback);
}

TEST(RecoverD2D, ReachabilityIsExactlyFactorTimesRange) {
  const DelayModel d;
  for (double f : {3.0, 4.0, 5.0}) {
    for (double g = 201.0; g <= 6.0 * 100.0 + 50.0; g += 7.0) {
      const auto s = road({0, g}, 10000);
      const auto out = route_hybrid(s, 0, RecoveryStrategy::on_demand(f), 100, d);
      if (g <= f * 100.0) {
        EXPECT_EQ(out.d2d_links, 1u) << "f=" << f << " g=" << g;
      } else {
        EXPECT_EQ(out.delivery_mode, DeliveryMode::cellular_direct) << "f=" << f << " g=" << g;
      }
    }
    const auto edge = route_hybrid(road({0, f * 100.0}, 10000), 0, RecoveryStrategy::on_demand(f), 100, d);
    EXPECT_EQ(edge.d2d_links, 1u);
  }
}

TEST(RouteHybrid, D2DBridgeThenV2V) {
  const auto out = route_hybrid(road({0, 50, 120, 190, 420}, 500), 0, RecoveryStrategy::on_demand(3), 200, DelayModel{});
  EXPECT_TRUE(out.delivered);
  EXPECT_EQ(out.delivery_mode, DeliveryMode::d2d_bridge_then_v2v);
  EXPECT_EQ(out.d2d_links, 1u);
  EXPECT_EQ(out.forward_hops, 1u);
}

TEST(RouteHybrid, NoGapsMeansRecoveryNeverRuns) {
  std::vector<double> xs;
  for (double x = 0; x < 3000; x += 100) xs.push_back(x);
  const auto s = road(xs, 3000);
  const TruncatedNormal speeds(25, 5, 20, 30);
  Rng rng(1);
  MobilityContext mob{0.25, speeds, &rng};
  const auto ref = route_hybrid(s, 0, RecoveryStrategy::backtrack(), 200, DelayModel{}, &mob);
  EXPECT_TRUE(ref.delivered);
  for (const auto& st : all_strategies) {
    Rng r2(1);
    MobilityContext m2{0.25, speeds, &r2};
    EXPECT_EQ(route_hybrid(s, 0, st, 200, DelayModel{}, &m2), ref);
  }
}

TEST(RouteHybrid, BacktrackNeedsMobility) {
  EXPECT_THROW(route_hybrid(road({0, 500}, 1000), 0, RecoveryStrategy::backtrack(), 200, DelayModel{}), DomainError);
}

TEST(Backtrack, ClosingGapDeliversAfterContact) {
  // A at 0 (30 m/s) behind B at 300 (20 m/s): the 300 m gap shrinks at 10 m/s
  // and falls to R = 200 after 10 s.
  auto s = RoadSnapshot::from({0, 300}, {30, 20}, 600, 600);
  const TruncatedNormal speeds(25, 5, 20, 30);
  Rng rng(3);
  MobilityContext mob{1e-12, speeds, &rng};
  const DelayModel d;
  const auto out = route_hybrid(s, 0, RecoveryStrategy::backtrack(), 200, d, &mob);
  EXPECT_TRUE(out.delivered);
  EXPECT_NEAR(out.carry_time, 10.0, d.carry_step);
  EXPECT_EQ(out.forward_hops, 1u);
}

TEST(Backtrack, StaticGapFailsAtBudget) {
  auto s = RoadSnapshot::from({0, 100, 400}, {25, 25, 25}, 10000, 10000);
  const TruncatedNormal speeds(25, 5, 20, 30);
  Rng rng(3);
  MobilityContext mob{1e-12, speeds, &rng};
  const DelayModel d;
  const auto out = route_hybrid(s, 0, RecoveryStrategy::backtrack(), 200, d, &mob);
  EXPECT_FALSE(out.delivered);
  EXPECT_LE(out.carry_time, d.carry_budget);
  EXPECT_GT(out.carry_time, d.carry_budget - d.carry_step - 1e-9);
  EXPECT_EQ(out.backward_hops, 1u);
  ASSERT_FALSE(out.trace.empty());
  EXPECT_EQ(out.trace.back().event, TraceEvent::failure);
}

TEST(Backtrack, BackwardPassesAreBounded) {
  auto s = RoadSnapshot::from({0, 100, 200, 300, 800}, {25, 25, 25, 25, 25}, 10000, 10000);
  const TruncatedNormal speeds(25, 5, 20, 30);
  for (unsigned m : {0u, 1u, 2u, 5u}) {
    Rng rng(3);
    MobilityContext mob{1e-12, speeds, &rng};
    DelayModel d;
    d.carry_budget = 2.0;
    const auto out = route_hybrid(s, 0, RecoveryStrategy::backtrack(m), 200, d, &mob);
    EXPECT_EQ(out.backward_hops, std::min(m, 2u));  // path 0 -> 200 -> 300
  }
}

TEST(Trace, TimestampsNonDecreasing) {
  const ScenarioRunner runner(Scenario{});
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    for (const auto& st : all_strategies) {
      const auto out = runner.run(st, seed);
      double prev = 0.0;
      for (const auto& r : out.trace) {
        EXPECT_GE(r.timestamp, prev);
        prev = r.timestamp;
      }
      EXPECT_NEAR(out.trace.back().timestamp, out.total_delay, 1e-9);
      EXPECT_EQ(out.trace.front().event, TraceEvent::source);
    }
  }
}

TEST(Trace, WriterEmitsOneLinePerRecord) {
  const auto out = route_v2v(road({0, 150, 300, 450}, 500), 0, 200, DelayModel{});
  std::ostringstream os;
  write_trace(os, out);
  const auto text = os.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), out.trace.size());
  EXPECT_NE(text.find(" HOP\n"), std::string::npos);
}

TEST(Scenario, DeterministicForSeed) {
  const ScenarioRunner runner(Scenario{});
  for (const auto& st : all_strategies) EXPECT_EQ(runner.run(st, 77), runner.run(st, 77));
  EXPECT_EQ(run_hybrid(Scenario{}, RecoveryStrategy::on_demand(), 5), run_hybrid(Scenario{}, RecoveryStrategy::on_demand(), 5));
}

TEST(Scenario, SameRoadForEveryStrategy) {
  const ScenarioRunner runner(Scenario{});
  EXPECT_EQ(runner.snapshot(9), runner.snapshot(9));
  EXPECT_NE(runner.snapshot(9), runner.snapshot(10));
}

TEST(Scenario, ProactiveNeverSlowerAndD2DAlwaysDelivers) {
  const ScenarioRunner runner(Scenario{});
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto bt = runner.run(RecoveryStrategy::backtrack(), seed);
    for (double f : {3.0, 5.0}) {
      const auto od = runner.run(RecoveryStrategy::on_demand(f), seed);
      const auto pr = runner.run(RecoveryStrategy::proactive(f), seed);
      EXPECT_LE(pr.total_delay, od.total_delay);
      EXPECT_TRUE(od.delivered);
      EXPECT_TRUE(pr.delivered);
      EXPECT_GE(od.delivered, bt.delivered);
    }
  }
}

TEST(Scenario, DelayMonotoneInCoefficients) {
  const std::vector<double DelayModel::*> fields{&DelayModel::t_proc,
                                                 &DelayModel::t_access,
                                                 &DelayModel::t_d2d_discovery_on_demand,
                                                 &DelayModel::t_d2d_discovery_proactive,
                                                 &DelayModel::t_d2d_setup,
                                                 &DelayModel::t_d2d_tx,
                                                 &DelayModel::t_cellular_fallback,
                                                 &DelayModel::carry_budget};
  Scenario base;
  base.road_length = 3000;
  const ScenarioRunner ref(base);
  for (auto field : fields) {
    Scenario bumped = base;
    bumped.delay.*field = 2.0 * (base.delay.*field) + 0.01;
    const ScenarioRunner more(bumped);
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      for (const auto& st : all_strategies) {
        EXPECT_GE(more.run(st, seed).total_delay, ref.run(st, seed).total_delay);
      }
    }
  }
}

TEST(Strategy, RangeFactorValidation) {
  EXPECT_NO_THROW(RecoveryStrategy::on_demand(3).validate());
  EXPECT_THROW(RecoveryStrategy::on_demand(2).validate(), DomainError);
  RecoveryStrategy st = RecoveryStrategy::on_demand(6);
  st.allow_nonstandard_factor = true;
  EXPECT_EQ(st.validate().size(), 1u);
}

TEST(Components, HopLengthsFollowKernel) {
  // Greedy hops inside components of random roads against draws from the
  // kernel at the same previous hop length, conditioned on continuation.
  const double lambda = 0.01, R = 200.0;
  const HopKernel kernel(ConnectivityParams(lambda, R));
  const TruncatedNormal speeds(25, 5, 20, 30);
  Rng road_rng(41), kernel_rng(43);
  std::vector<double> empirical, drawn;
  while (empirical.size() < 100000) {
    const auto s = generate_snapshot(lambda, 50000, speeds, road_rng);
    std::size_t i = 0;
    while (i < s.size()) {
      double x_prev = R;
      std::size_t holder = i;
      for (;;) {
        if (s.position(holder) + R > s.road_length) break;
        const auto next = greedy_next_hop(s, holder, R);
        if (!next) break;
        const double hop = s.position(*next) - s.position(holder);
        empirical.push_back(hop);
        std::optional<double> k;
        while (!(k = kernel.sample(x_prev, kernel_rng))) {
        }
        drawn.push_back(*k);
        x_prev = hop;
        holder = *next;
      }
      const auto next = greedy_next_hop(s, holder, R);
      i = next ? s.size() : holder + 1;
    }
  }
  const double n = static_cast<double>(empirical.size()), m = static_cast<double>(drawn.size());
  EXPECT_LT(ks_two_sample(empirical, drawn), 1.628 * std::sqrt((n + m) / (n * m)));
}

TEST(Components, MeanExtentMatchesClosedForm) {
  for (double a : {2.0, 3.0}) {
    const double lambda = a / 200.0;
    Rng rng(53);
    const int n = 100000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = simulate_component(lambda, 200.0, rng).extent;
      s += e;
      ss += e * e;
    }
    const double mean = s / n;
    const double se = std::sqrt((ss / n - mean * mean) / n);
    EXPECT_NEAR(mean, expected_component_size(ConnectivityParams(lambda, 200.0)), 4.0 * se) << "a=" << a;
  }
}

TEST(Components, EmpiricalPmfMatchesOracle) {
  const ConnectivityParams p(0.01, 200.0);
  const auto emp = empirical_component_distribution(0.01, 200.0, 200000, 61);
  const auto oracle = component_pmf_oracle(6, p);
  for (std::size_t k = 1; k <= 6; ++k) {
    const double q = oracle.probability(k);
    EXPECT_NEAR(emp.probability(k), q, 4.0 * std::sqrt(q * (1 - q) / 200000.0)) << "k=" << k;
  }
}

TEST(Components, TraversalCoversRoad) {
  const auto s = road({0, 50, 120, 190, 420, 600, 1000}, 1100);
  const auto cs = traverse_components(s, 200, DelayModel{});
  ASSERT_EQ(cs.size(), 3u);
  EXPECT_EQ(cs[0].retransmitters, 2u);  // 0 -> 190
  EXPECT_EQ(cs[1].retransmitters, 2u);  // 420 -> 600
  EXPECT_EQ(cs[2].retransmitters, 1u);
  EXPECT_DOUBLE_EQ(cs[0].extent, 390.0);
  EXPECT_DOUBLE_EQ(cs[2].extent, 200.0);
}
