// Command-line front end: analytic | simulate | fig3 | fig4 | validate.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "v2vd2d/commands.hpp"
#include "v2vd2d/config.hpp"

namespace {

constexpr const char* out_env = "V2VD2D_OUT";

std::string footer() {
  return std::string("\nOutput directory precedence: --out, then $") + out_env +
         ", then [experiment] output_dir.\nExit codes: 0 success, 1 validation failure, 2 config error, 3 I/O "
         "error.\n\n" +
         v2vd2d::config_help();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Alert propagation on a highway: connectivity analytics, V2V/D2D routing simulation and "
               "reproduction tables."};
  app.footer(footer());
  app.require_subcommand(1, 1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  unsigned workers = 1;
  int verbosity = 0;
  app.add_option("--config", config_path, "configuration file (INI-style, see keys below)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed override (unsigned 64-bit)");
  app.add_option("--out", out_dir, "output directory override");
  app.add_option("--workers", workers, "worker threads for replications (0 = all cores)");
  app.add_flag("-v", verbosity, "verbosity; -v progress, -vv more");

  const std::vector<std::pair<const char*, const char*>> subs{
      {"analytic", "closed-form quantities per (R, L) cell"},
      {"simulate", "Monte Carlo statistics per strategy, plus traces of one replication"},
      {"fig3", "analytic versus simulated hops and delay"},
      {"fig4", "recovery strategies compared on roads with dead ends"},
      {"validate", "fast analytic cross-checks; exit 0 iff all pass"}};
  for (const auto& [name, desc] : subs) {
    auto* sub = app.add_subcommand(name, desc);
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : v2vd2d::exit_config_error;
  }

  v2vd2d::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = v2vd2d::parse_config(config_path);
    if (*seed_opt) cfg.master_seed = seed;
    if (const char* env = std::getenv(out_env); env && *env) cfg.output_dir = env;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    v2vd2d::validate_config(cfg);
    cfg.validate();
  } catch (const v2vd2d::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return v2vd2d::exit_io_error;
  } catch (const v2vd2d::ParseError& e) {
    std::cerr << "config error: " << config_path << ": " << e.what() << '\n';
    return v2vd2d::exit_config_error;
  } catch (const v2vd2d::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return v2vd2d::exit_config_error;
  }

  if (verbosity >= 2) std::cerr << v2vd2d::render_config(cfg);
  if (verbosity >= 1) std::cerr << "master_seed=" << cfg.master_seed << " output_dir=" << cfg.output_dir << '\n';

  const v2vd2d::CommandContext ctx{std::cout, std::cerr, verbosity, workers};
  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    if (sub == "analytic") return v2vd2d::cmd_analytic(cfg, ctx);
    if (sub == "simulate") return v2vd2d::cmd_simulate(cfg, ctx);
    if (sub == "fig3") return v2vd2d::cmd_fig3(cfg, ctx);
    if (sub == "fig4") return v2vd2d::cmd_fig4(cfg, ctx);
    return v2vd2d::cmd_validate(cfg, ctx);
  } catch (const v2vd2d::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return v2vd2d::exit_io_error;
  } catch (const v2vd2d::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return v2vd2d::exit_validation_failure;
  }
}
