#pragma once

// Subcommand bodies shared by the command-line tool and its tests. Each takes
// a resolved configuration, prints a human-readable report and returns the
// process exit status.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "v2vd2d/config.hpp"
#include "v2vd2d/connectivity.hpp"
#include "v2vd2d/experiments.hpp"
#include "v2vd2d/routing_sim.hpp"

namespace v2vd2d {

enum ExitCode : int { exit_ok = 0, exit_validation_failure = 1, exit_config_error = 2, exit_io_error = 3 };

struct CommandContext {
  std::ostream& out;
  std::ostream& log;
  int verbosity = 0;
  unsigned workers = 1;
};

namespace detail {

inline void print_table(std::ostream& os, const Table& t) {
  std::vector<std::size_t> width(t.columns.size());
  for (std::size_t i = 0; i < t.columns.size(); ++i) width[i] = t.columns[i].size();
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      os << (i ? "  " : "") << std::setw(static_cast<int>(width[i])) << cells[i];
    }
    os << '\n';
  };
  line(t.columns);
  for (const auto& r : t.rows) line(r);
}

inline void print_warnings(const ExperimentConfig& cfg, const CommandContext& ctx) {
  for (const auto& w : cfg.traffic.warnings()) ctx.log << "warning: " << w << '\n';
  for (const auto& st : cfg.expanded_strategies()) {
    for (const auto& w : st.validate()) ctx.log << "warning: " << w << '\n';
  }
}

inline RunOptions run_options(const CommandContext& ctx) {
  RunOptions o;
  o.workers = ctx.workers;
  if (ctx.verbosity >= 1) {
    std::ostream* log = &ctx.log;
    o.progress = [log](const std::string& msg) { *log << msg << '\n'; };
  }
  return o;
}

}  // namespace detail

inline constexpr std::size_t analytic_pmf_terms = 10;

/// Analytic quantities per (density, R, L) cell. Cells below the closed-form
/// threshold show the oracle pmf and an error tag in the closed-form columns.
inline Table analytic_table(const ExperimentConfig& cfg) {
  Table t{"analytic", {"R_m", "L_m", "lambda_per_m", "lambda_prime", "rho", "rho_prime", "pmf_method"}, {}};
  for (std::size_t k = 1; k <= analytic_pmf_terms; ++k) t.columns.push_back("P" + std::to_string(k));
  for (const char* c : {"expected_retransmitters", "expected_size_m", "expected_hops", "analytic_delay_s", "status"}) {
    t.columns.push_back(c);
  }
  for (double R : cfg.ranges) {
    for (double lambda_a : cfg.arrival_rates(R)) {
      TrafficParams tp = cfg.traffic;
      tp.lambda_a = lambda_a;
      const double lambda = spatial_rate(tp);
      const ConnectivityParams p(lambda, R, cfg.closed_form_margin);
      for (double L : cfg.road_lengths) {
        std::vector<std::string> row{fmt9(R), fmt9(L), fmt9(lambda), fmt9(p.lambda_prime()), fmt9(p.rho()),
                                     fmt9(p.rho_prime())};
        std::string status = "ok";
        ComponentDistribution pmf;
        try {
          pmf = p.closed_form_valid() ? pmf_from_transform(analytic_pmf_terms, p)
                                      : component_pmf_oracle(analytic_pmf_terms, p);
        } catch (const Error& e) {
          pmf = component_pmf_oracle(analytic_pmf_terms, p);
          status = error_tag(e);
        }
        row.push_back(to_string(pmf.method));
        for (std::size_t k = 1; k <= analytic_pmf_terms; ++k) row.push_back(fmt9(pmf.probability(k)));
        try {
          const double e_nb = expected_retransmitters(p);
          row.push_back(fmt9(e_nb));
          row.push_back(fmt9(expected_component_size(p)));
          row.push_back(fmt9(expected_hops_over_road(p, L)));
          row.push_back(fmt9(analytic_delay(p, L, cfg.delay)));
        } catch (const Error& e) {
          status = error_tag(e);
          row.push_back(status);
          try {
            row.push_back(fmt9(expected_component_size(p)));
          } catch (const Error& e2) {
            row.push_back(error_tag(e2));
          }
          row.push_back(status);
          row.push_back(status);
        }
        row.push_back(status);
        t.rows.push_back(std::move(row));
      }
    }
  }
  return t;
}

inline int cmd_analytic(const ExperimentConfig& cfg, const CommandContext& ctx) {
  detail::print_warnings(cfg, ctx);
  const auto t = analytic_table(cfg);
  ctx.out << "# master_seed=" << cfg.master_seed << " (analytic results do not depend on it)\n";
  detail::print_table(ctx.out, t);
  persist({t}, cfg, cfg.output_dir);
  if (ctx.verbosity >= 1) ctx.log << "wrote " << (std::filesystem::path(cfg.output_dir) / "analytic.csv").string() << '\n';
  bool all_ok = true;
  for (const auto& r : t.rows) all_ok = all_ok && r.back() == "ok";
  return all_ok ? exit_ok : exit_validation_failure;
}

/// One line of the validation report.
struct CheckResult {
  std::string name;
  std::string outcome;  ///< PASS, FAIL or SKIP
  std::string detail;
};

/// Fast cross-checks at every configured (density, R): kernel termination
/// identity and oracle normalization always; Q(1) = 1, oracle versus transform
/// coefficients and the first moment when the closed form applies.
inline std::vector<CheckResult> validation_checks(const ExperimentConfig& cfg) {
  std::vector<CheckResult> out;
  const auto add = [&](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok ? "PASS" : "FAIL", std::move(detail)});
  };
  for (double R : cfg.ranges) {
    for (double lambda_a : cfg.arrival_rates(R)) {
      TrafficParams tp = cfg.traffic;
      tp.lambda_a = lambda_a;
      const double lambda = spatial_rate(tp);
      const ConnectivityParams p(lambda, R, cfg.closed_form_margin);
      const std::string cell = "R=" + fmt9(R) + " lambda'=" + fmt9(p.lambda_prime()) + ": ";
      const HopKernel kernel(p);

      double worst = 0.0;
      for (int i = 0; i <= 100; ++i) {
        const double x = R * i / 100.0;
        worst = std::max(worst, std::abs(kernel.cdf(R, x) + kernel.termination(x) - 1.0));
      }
      add(cell + "kernel termination identity", worst <= 1e-12, "max |F(R|x) + e^{-lambda x} - 1| = " + fmt9(worst));

      const auto oracle = component_pmf_oracle(6, p);
      const double p1 = std::abs(oracle.probability(1) - p.rho_prime());
      add(cell + "oracle P(N_b=1) = rho'", p1 <= 1e-6, "deviation " + fmt9(p1));

      if (!p.closed_form_valid()) {
        out.push_back({cell + "closed-form checks", "SKIP",
                       "lambda' below ln4 + margin = " + fmt9(p.closed_form_threshold())});
        continue;
      }
      try {
        const double q1 = std::abs(q_transform(cplx(1.0, 0.0), p).real() - 1.0);
        add(cell + "Q(1) = 1", q1 <= 1e-6, "deviation " + fmt9(q1));
      } catch (const Error& e) {
        add(cell + "Q(1) = 1", false, error_tag(e) + ": " + e.what());
      }
      try {
        const auto cf = pmf_from_transform(6, p);
        double dev = 0.0;
        for (std::size_t k = 1; k <= 6; ++k) dev = std::max(dev, std::abs(cf.probability(k) - oracle.probability(k)));
        add(cell + "oracle vs transform, k <= 6", dev <= 1e-4, "max deviation " + fmt9(dev));
      } catch (const Error& e) {
        add(cell + "oracle vs transform, k <= 6", false, error_tag(e) + ": " + e.what());
      }
      try {
        const auto rep = expected_retransmitters_report(p);
        add(cell + "E(N_b) closed form vs series", true,
            "value " + fmt9(rep.value) + ", relative deviation " + fmt9(rep.series_deviation.value_or(0.0)));
      } catch (const Error& e) {
        add(cell + "E(N_b) closed form vs series", false, error_tag(e) + ": " + e.what());
      }
    }
  }
  return out;
}

inline int cmd_validate(const ExperimentConfig& cfg, const CommandContext& ctx) {
  detail::print_warnings(cfg, ctx);
  const auto checks = validation_checks(cfg);
  bool ok = true;
  for (const auto& c : checks) {
    ctx.out << c.outcome << "  " << c.name << "  (" << c.detail << ")\n";
    ok = ok && c.outcome != "FAIL";
  }
  ctx.out << (ok ? "all checks passed\n" : "validation FAILED\n");
  return ok ? exit_ok : exit_validation_failure;
}

/// Strategy statistics per (R, L) plus a hop-by-hop trace of replication 0
/// for each strategy at the first cell.
inline int cmd_simulate(const ExperimentConfig& cfg, const CommandContext& ctx) {
  cfg.validate();
  detail::print_warnings(cfg, ctx);
  Table t{"simulate",
          {"strategy", "cr_factor", "R_m", "L_m", "forward_hops_mean", "backward_hops_mean", "d2d_links_mean",
           "delay_mean_s", "delay_ci95_s", "delivery_rate"},
          {}};
  const auto strategies = cfg.expanded_strategies();
  for (double R : cfg.ranges) {
    for (double L : cfg.road_lengths) {
      const Scenario sc{cfg.traffic, R, L, cfg.delay};
      for (const auto& st : strategies) {
        const auto a = monte_carlo(sc, st, cfg.replications, cfg.master_seed, ctx.workers);
        t.rows.push_back({to_string(st.kind), st.uses_d2d() ? fmt9(st.d2d_range_factor) : "n/a", fmt9(R), fmt9(L),
                          fmt9(a.forward_hops.mean), fmt9(a.backward_hops.mean), fmt9(a.d2d_links.mean),
                          fmt9(a.total_delay.mean), fmt9(a.total_delay.ci95), fmt9(a.delivery_rate.mean)});
        if (ctx.verbosity >= 1) ctx.log << "simulated " << to_string(st.kind) << " at R=" << R << " L=" << L << '\n';
      }
    }
  }
  ctx.out << "# master_seed=" << cfg.master_seed << '\n';
  detail::print_table(ctx.out, t);
  persist({t}, cfg, cfg.output_dir);

  const ScenarioRunner runner(Scenario{cfg.traffic, cfg.ranges.front(), cfg.road_lengths.front(), cfg.delay});
  for (const auto& st : strategies) {
    std::string name = std::string("trace_") + to_string(st.kind);
    if (st.uses_d2d()) name += "_cr" + fmt9(st.d2d_range_factor);
    const auto path = std::filesystem::path(cfg.output_dir) / (name + ".txt");
    std::ofstream os(path);
    if (!os) throw IoError(path.string(), "cannot open for writing");
    write_trace(os, runner.run(st, derive_seed(cfg.master_seed, 0)));
    if (!os) throw IoError(path.string(), "write failed");
  }
  return exit_ok;
}

inline int cmd_fig3(const ExperimentConfig& cfg, const CommandContext& ctx) {
  detail::print_warnings(cfg, ctx);
  const auto res = run_fig3(cfg, detail::run_options(ctx));
  const auto t = res.table();
  ctx.out << "# master_seed=" << cfg.master_seed << '\n';
  detail::print_table(ctx.out, t);
  persist({t}, cfg, cfg.output_dir);
  bool ok = true;
  for (const auto& r : res.rows) ok = ok && (r.status == "pass" || r.status == "simulate_only");
  return ok ? exit_ok : exit_validation_failure;
}

inline int cmd_fig4(const ExperimentConfig& cfg, const CommandContext& ctx) {
  detail::print_warnings(cfg, ctx);
  const auto res = run_fig4(cfg, detail::run_options(ctx));
  const auto all = res.table();
  const auto cond = res.deadend_table();
  const auto head = res.headline_table();
  ctx.out << "# master_seed=" << cfg.master_seed << "\n# all roads\n";
  detail::print_table(ctx.out, all);
  ctx.out << "# roads where pure V2V forwarding hits a dead end\n";
  detail::print_table(ctx.out, cond);
  ctx.out << "# paired comparison against backtracking (delay gain = backtrack - D2D, 99% one-sided bound)\n";
  detail::print_table(ctx.out, head);
  persist({all, cond, head}, cfg, cfg.output_dir);
  bool ok = true;
  for (const auto& h : res.headline) {
    ok = ok && h.error.empty() && h.backtrack_minus_d2d.significant && h.delivery_violations == 0 &&
         h.proactive_violations == 0;
  }
  return ok ? exit_ok : exit_validation_failure;
}

}  // namespace v2vd2d
