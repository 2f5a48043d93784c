// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "v2vd2d/connectivity.hpp"
#include "v2vd2d/experiments.hpp"
#include "v2vd2d/routing_sim.hpp"
#include "v2vd2d/traffic_model.hpp"

using namespace v2vd2d;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

ConnectivityParams at(double lambda_prime) { return ConnectivityParams(lambda_prime / 200.0, 200.0); }

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

Outcome pgf_normalization() {
  double worst = 0.0;
  for (double a : {1.5, 2.0, 3.0, 4.0}) worst = std::max(worst, std::abs(q_transform(1.0, at(a)).real() - 1.0));
  return {worst <= 1e-6, "max |Q(1) - 1| = " + num(worst)};
}

Outcome oracle_equivalence() {
  double worst = 0.0;
  for (double a : {1.5, 2.0, 3.0, 4.0}) {
    const auto oracle = component_pmf_oracle(6, at(a));
    const auto cf = pmf_from_transform(6, at(a));
    for (std::size_t k = 1; k <= 6; ++k) worst = std::max(worst, std::abs(oracle.probability(k) - cf.probability(k)));
  }
  return {worst <= 1e-4, "max |P_oracle - P_transform| over k <= 6 = " + num(worst)};
}

Outcome printed_identities() {
  double worst = 0.0;
  for (double a : {1.5, 2.0, 3.0, 4.0}) {
    const auto p = at(a);
    const auto cf = pmf_from_transform(2, p);
    worst = std::max({worst, std::abs(cf.probability(1) - p.rho_prime()), std::abs(cf.probability(2) - p.rho())});
  }
  return {worst <= 1e-6, "max deviation of P1 from rho' and P2 from rho = " + num(worst)};
}

Outcome moment_consistency() {
  double worst = 0.0;
  MomentOptions opts;
  opts.cross_check = false;
  for (double a : {2.0, 3.0, 4.0}) {
    const double closed = expected_retransmitters(at(a), opts);
    const auto series = component_pmf_oracle_to_tail(at(a), 1e-8);
    worst = std::max(worst, std::abs(closed - series.mean()) / series.mean());
  }
  return {worst <= 1e-3, "max relative deviation = " + num(worst)};
}

Outcome mean_span() {
  double worst = 0.0;
  for (double a : {2.0, 3.0}) {
    const double lambda = a / 200.0;
    Rng rng(derive_seed(20140601, static_cast<std::uint64_t>(a)));
    double sum = 0.0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) sum += simulate_component(lambda, 200.0, rng).extent;
    const double truth = expected_component_size(ConnectivityParams(lambda, 200.0));
    worst = std::max(worst, std::abs(sum / n - truth) / truth);
  }
  return {worst <= 0.01, "max relative deviation of mean span = " + num(worst)};
}

Outcome fig3_reproduction() {
  ExperimentConfig c;
  c.road_lengths = {5000, 10000, 20000};
  c.lambda_prime_sweep = {2.0, 3.0};
  const auto res = run_fig3(c);
  bool ok = res.rows.size() == 6;
  double worst_hops = 0.0, worst_delay = 0.0, worst_flat = 0.0;
  bool increasing = true;
  for (const auto& r : res.rows) {
    if (r.status != "pass") ok = false;
    if (r.rel_dev_hops) worst_hops = std::max(worst_hops, std::abs(*r.rel_dev_hops));
    if (r.rel_dev_delay) worst_delay = std::max(worst_delay, std::abs(*r.rel_dev_delay));
  }
  // Rows are ordered density-major for each range: [lambda'=2: L...][lambda'=3: L...].
  for (std::size_t i = 0; i < 3 && res.rows.size() == 6; ++i) {
    const auto& lo = res.rows[i];
    const auto& hi = res.rows[i + 3];
    increasing = increasing && hi.sim_delay.mean > lo.sim_delay.mean;
    const double per_len_lo = lo.sim_hops.mean / lo.road_length;
    const double per_len_hi = hi.sim_hops.mean / hi.road_length;
    worst_flat = std::max(worst_flat, std::abs(per_len_hi - per_len_lo) / per_len_lo);
  }
  ok = ok && increasing && worst_hops <= 0.05 && worst_delay <= 0.10 && worst_flat <= 0.05;
  return {ok, "max hop dev " + num(worst_hops) + ", max delay dev " + num(worst_delay) +
                  ", delay increases with density: " + (increasing ? "yes" : "no") +
                  ", hops-per-length spread " + num(worst_flat)};
}

Outcome fig4_reproduction() {
  const ExperimentConfig c;
  const auto res = run_fig4(c);
  bool ok = !res.headline.empty();
  std::size_t od = 0, pr = 0;
  double min_bound = 1e300;
  std::size_t violations = 0;
  for (const auto& h : res.headline) {
    ok = ok && h.error.empty() && h.backtrack_minus_d2d.significant && h.deadend_floor_met;
    violations += h.delivery_violations + h.proactive_violations;
    min_bound = std::min(min_bound, h.backtrack_minus_d2d.lower_bound);
    (h.strategy.kind == StrategyKind::d2d_on_demand ? od : pr) += 1;
  }
  ok = ok && violations == 0 && od > 0 && pr > 0;
  return {ok, "smallest 99% lower bound of backtrack - D2D delay = " + num(min_bound) + " s, per-seed violations " +
                  std::to_string(violations)};
}

Outcome spatial_rate_limits() {
  const TrafficParams degenerate{0.5, 24.9, 25.1, 25.0, 1e-4};
  const double rel = std::abs(spatial_rate(degenerate) - 0.5 / 25.0) / (0.5 / 25.0);

  const TrafficParams general{0.5, 20, 30, 25, 5};
  const TruncatedNormal d(general);
  Rng rng(8);
  const int n = 10'000'000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = 0.5 / sample_speed(d, rng);
    s += x;
    ss += x * x;
  }
  const double mean = s / n;
  const double se = std::sqrt((ss / n - mean * mean) / n);
  const double z = std::abs(spatial_rate(general) - mean) / se;
  return {rel <= 1e-3 && z <= 3.0, "degenerate relative error " + num(rel) + ", general |z| = " + num(z)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism() {
  ExperimentConfig c;
  c.road_lengths = {5000, 10000, 20000};
  c.lambda_prime_sweep = {2.0, 3.0};
  const auto base = fs::temp_directory_path() / "v2vd2d_acceptance";
  fs::remove_all(base);
  std::vector<std::string> names;
  for (unsigned workers : {1u, 4u}) {
    RunOptions o;
    o.workers = workers;
    const auto f3 = run_fig3(c, o);
    ExperimentConfig c4 = c;
    c4.road_lengths = {10000};
    const auto f4 = run_fig4(c4, o);
    persist({f3.table(), f4.table(), f4.deadend_table(), f4.headline_table()}, c,
            base / ("workers" + std::to_string(workers)));
  }
  bool same = true;
  int files = 0;
  for (const auto& entry : fs::directory_iterator(base / "workers1")) {
    if (entry.path().extension() != ".csv") continue;
    ++files;
    same = same && slurp(entry.path()) == slurp(base / "workers4" / entry.path().filename());
  }
  return {same && files == 4, std::to_string(files) + " CSV files compared across 1 and 4 workers"};
}

Outcome validity_guards() {
  const double threshold = std::log(4.0) + ConnectivityParams::default_margin;
  int rejected = 0, attempts = 0;
  for (double a : {0.5, 1.0, std::log(4.0), threshold - 1e-6}) {
    const auto p = at(a);
    const std::vector<std::function<void()>> calls{[&] { (void)q_transform(0.5, p); },
                                                   [&] { (void)m1_closed(0.5, p); },
                                                   [&] { (void)pmf_from_transform(6, p); },
                                                   [&] { (void)expected_retransmitters(p); }};
    for (const auto& call : calls) {
      ++attempts;
      try {
        call();
      } catch (const ValidityError&) {
        ++rejected;
      }
    }
  }
  bool oracle_ok = false;
  try {
    const auto d = component_pmf_oracle(10, at(1.0));
    oracle_ok = std::abs(d.probability(1) - std::exp(-1.0)) < 1e-12 && std::abs(d.probability(2) - std::exp(-1.0)) < 1e-6;
  } catch (const Error&) {
  }
  return {rejected == attempts && oracle_ok, std::to_string(rejected) + "/" + std::to_string(attempts) +
                                                 " closed-form calls rejected, oracle at lambda'=1: " +
                                                 (oracle_ok ? "ok" : "failed")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    Outcome (*run)();
  };
  const std::vector<Criterion> criteria{
      {1, "PGF normalization Q(1) = 1", 1, pgf_normalization},
      {2, "oracle and transform coefficients agree", 30, oracle_equivalence},
      {3, "P(N_b=1) = rho', P(N_b=2) = rho", 1, printed_identities},
      {4, "closed-form mean agrees with oracle series", 60, moment_consistency},
      {5, "simulated mean component span", 120, mean_span},
      {6, "hop count and delay: analytic versus simulated", 300, fig3_reproduction},
      {7, "D2D recovery beats backtracking", 300, fig4_reproduction},
      {8, "spatial rate limits and Monte Carlo agreement", 30, spatial_rate_limits},
      {9, "byte-identical tables across runs and worker counts", 600, determinism},
      {10, "closed-form validity guard, oracle below threshold", 1, validity_guards},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("%s [%d] %s: %s (%.2f s of %.0f s budget)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
