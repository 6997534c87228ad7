// plkf: moment benchmarks, tracking simulation and self-checks.
//
//   plkf bench    --rule sc --dims 3x10 --dims 3x100 --trials 10000
//   plkf sim      --agents 10 --steps 100 --filters both
//   plkf validate
//
// CSV goes to --out (or stdout); a short summary goes to stderr.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "plkf/errors.hpp"
#include "plkf/experiments.hpp"

namespace ex = plkf::experiments;

namespace {

using Overrides = std::map<std::string, std::string>;

void print_nested(const std::exception& e, int depth = 0) {
  std::cerr << (depth == 0 ? "error: " : "  caused by: ") << e.what() << '\n';
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    print_nested(inner, depth + 1);
  }
}

void flag(CLI::App* app, Overrides& ov, const std::string& name, const std::string& key,
          const std::string& help) {
  app->add_option_function<std::string>(
      name, [&ov, key](const std::string& v) { ov[key] = v; }, help);
}

void rule_flags(CLI::App* app, Overrides& ov, const std::string& prefix) {
  flag(app, ov, "--rule", prefix + ".rule", "cubature rule: sc, ut or gh");
  flag(app, ov, "--ut-alpha", prefix + ".ut_alpha", "unscented alpha");
  flag(app, ov, "--ut-kappa", prefix + ".ut_kappa", "unscented kappa");
  flag(app, ov, "--gh-order", prefix + ".gh_order", "Gauss-Hermite order p");
  flag(app, ov, "--point-budget", prefix + ".point_budget", "max points of a tensor rule");
}

ex::Config merged(const std::string& path, const Overrides& ov) {
  ex::Config cfg = path.empty() ? ex::Config{} : ex::Config::load(path);
  for (const auto& [k, v] : ov) cfg.set(k, v);
  return cfg;
}

template <typename Write>
void emit(const std::string& out_path, Write&& write) {
  if (out_path.empty()) {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw plkf::InvalidArgument("cannot open output file " + out_path);
  write(out);
  if (!out) throw plkf::Error("failed writing " + out_path);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partially-linear Kalman filter experiments"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  Overrides ov;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value configuration file");
    sub->add_option("--out", out_path, "output file (default: stdout)");
    flag(sub, ov, "--seed", "seed", "master RNG seed");
  };

  CLI::App* bench = app.add_subcommand("bench", "compare full and partially-linear moments");
  common(bench);
  rule_flags(bench, ov, "bench");
  bench->add_option_function<std::vector<std::string>>(
      "--dims",
      [&ov](const std::vector<std::string>& v) {
        std::string joined;
        for (const auto& d : v) joined += (joined.empty() ? "" : ",") + d;
        ov["bench.dims"] = joined;
      },
      "ZxL pair (repeatable)");
  flag(bench, ov, "--trials", "bench.trials", "trials per (Z, L) pair");
  flag(bench, ov, "--modes", "bench.modes", "full, pl or both");
  flag(bench, ov, "--timing-seconds", "bench.timing_seconds", "minimum timed duration per mode");

  CLI::App* sim = app.add_subcommand("sim", "multi-agent bearing tracking");
  common(sim);
  rule_flags(sim, ov, "sim");
  flag(sim, ov, "--agents", "sim.agents", "number of agents N");
  flag(sim, ov, "--steps", "sim.steps", "number of filter steps K");
  flag(sim, ov, "--filters", "sim.filters", "lrkf, pl or both");
  sim->add_flag_callback("--diagnostics", [&ov] { ov["sim.diagnostics"] = "true"; },
                         "add normalized innovation columns");

  CLI::App* validate = app.add_subcommand("validate", "rule and factorization self-checks");
  common(validate);
  flag(validate, ov, "--max-rule-dim", "validate.max_rule_dim", "SC/UT sweep bound");
  flag(validate, ov, "--gh-max-dim", "validate.gh_max_dim", "Gauss-Hermite sweep bound");
  flag(validate, ov, "--cholesky-matrices", "validate.cholesky_matrices", "random SPD matrices");
  flag(validate, ov, "--inject-fault", "validate.fault", "test hook: 'weight'");

  CLI11_PARSE(app, argc, argv);

  try {
    const ex::Config cfg = merged(config_path, ov);
    if (bench->parsed()) {
      const auto bc = ex::bench_config_from(cfg);
      const auto rows = ex::run_bench(bc);
      emit(out_path, [&](std::ostream& os) { ex::write_bench_csv(os, bc, rows); });
      for (const auto& r : rows) {
        std::cerr << ex::rule_label(bc.rule) << " (" << r.z << "/" << r.l << ") " << r.status;
        if (r.max_rel_diff) std::cerr << " max_rel_diff=" << fmt(*r.max_rel_diff);
        if (r.ratio()) std::cerr << " t_full/t_pl=" << fmt(*r.ratio());
        std::cerr << '\n';
      }
      return 0;
    }
    if (sim->parsed()) {
      const auto sc = ex::sim_config_from(cfg);
      const auto result = ex::run_sim(sc);
      emit(out_path, [&](std::ostream& os) { ex::write_sim_csv(os, sc, result); });
      double worst = 0;
      for (const auto& r : result.rows) worst = std::max(worst, r.mean_diff.value_or(0.0));
      std::cerr << "sim: " << result.rows.size() << " steps, N=" << sc.singer.agents;
      if (sc.run_lrkf && sc.run_pl) std::cerr << ", max mean difference " << fmt(worst);
      std::cerr << '\n';
      return 0;
    }
    const auto vc = ex::validate_config_from(cfg);
    const auto rows = ex::run_validate(vc);
    emit(out_path, [&](std::ostream& os) { ex::write_validate_report(os, rows); });
    int failed = 0;
    for (const auto& r : rows) failed += r.pass ? 0 : 1;
    std::cerr << "validate: " << rows.size() << " checks, " << failed << " failed\n";
    return failed == 0 ? 0 : 1;
  } catch (const plkf::InvalidArgument& e) {
    print_nested(e);
    return 2;
  } catch (const std::exception& e) {
    print_nested(e);
    return 3;
  }
}
