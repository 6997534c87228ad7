#include <algorithm>
#include <chrono>
#include <memory>
#include <ostream>
#include <sstream>

#include "plkf/errors.hpp"
#include "plkf/experiments.hpp"
#include "plkf/rng.hpp"

namespace plkf::experiments {

namespace {

using Clock = std::chrono::steady_clock;

template <typename A, typename B>
double rel_max_diff(const A& a, const B& b) {
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff() / (1.0 + a.cwiseAbs().maxCoeff());
}

// Max relative difference over m^y, P^xy and the three blocks of P^yy.
double block_diff(const JointGaussian<double>& a, const JointGaussian<double>& b, Index g) {
  const Index l = a.mean_y.size() - g;
  double d = rel_max_diff(a.mean_y, b.mean_y);
  d = std::max(d, rel_max_diff(a.cov_xy, b.cov_xy));
  d = std::max(d, rel_max_diff(a.cov_yy.topLeftCorner(g, g), b.cov_yy.topLeftCorner(g, g)));
  d = std::max(d, rel_max_diff(a.cov_yy.bottomLeftCorner(l, g), b.cov_yy.bottomLeftCorner(l, g)));
  d = std::max(d,
               rel_max_diff(a.cov_yy.bottomRightCorner(l, l), b.cov_yy.bottomRightCorner(l, l)));
  return d;
}

template <typename Fn>
double mean_seconds(const std::vector<GaussianMoments<double>>& pool, int trials,
                    double min_seconds, Fn&& fn) {
  fn(pool.front());  // warm-up, not timed
  const auto start = Clock::now();
  std::int64_t count = 0;
  double elapsed = 0.0;
  do {
    fn(pool[static_cast<std::size_t>(count) % pool.size()]);
    ++count;
    elapsed = std::chrono::duration<double>(Clock::now() - start).count();
  } while (count < trials || elapsed < min_seconds);
  return elapsed / static_cast<double>(count);
}

}  // namespace

void BenchConfig::validate() const {
  if (trials < 1) throw InvalidArgument("bench: trials must be >= 1");
  if (dims.empty()) throw InvalidArgument("bench: no (Z, L) pairs given");
  for (const auto& [z, l] : dims) {
    if (z < 1 || l < 1) throw InvalidArgument("bench: Z and L must be >= 1");
  }
  if (!run_full && !run_pl) throw InvalidArgument("bench: no mode selected");
  if (rule.point_budget < 1) throw InvalidArgument("bench: point budget must be >= 1");
  if (timing_pool < 1 || !(min_timing_seconds >= 0)) {
    throw InvalidArgument("bench: invalid timing settings");
  }
}

GaussianMoments<double> bench_input(std::uint64_t trial_seed, Index x) {
  Rng rng(trial_seed);
  GaussianMoments<double> in;
  in.mean = rng.normal_vector(x);
  const Matrix<double> b = rng.normal_matrix(x, x);
  in.cov = b * b.transpose() / static_cast<double>(x);
  in.cov.diagonal().array() += 0.1;
  return in;
}

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<BenchRow> rows;
  for (std::size_t r = 0; r < cfg.dims.size(); ++r) {
    const auto [z, l] = cfg.dims[r];
    BenchRow row;
    row.z = z;
    row.l = l;
    row.x = z + l;

    auto plf = models::benchmark_function(z, l, Rng::derive(cfg.seed, 2 * r));
    const std::uint64_t trial_base = Rng::derive(cfg.seed, 2 * r + 1);

    std::shared_ptr<const CubatureRule<double>> rule;
    std::optional<ClassifiedRule<double>> cr;
    // The unique-point evaluation never touches the linear points, so the
    // tensor rule is classified from its Z-dimensional factor alone.
    const bool tensor = cfg.rule.kind == RuleKind::GaussHermite;
    if (cfg.run_full || !tensor) {
      try {
        rule = std::make_shared<const CubatureRule<double>>(make_rule<double>(cfg.rule, row.x));
      } catch (const ResourceLimit&) {
      }
    }
    try {
      if (tensor) {
        cr = reduced_gauss_hermite<double>(row.x, z, cfg.rule.order, cfg.rule.point_budget);
      } else if (rule) {
        cr = classify(rule, z);
      }
    } catch (const ResourceLimit&) {
    }
    if (rule) row.points = rule->size();
    if (cr) row.unique_points = cr->unique.size();
    if (cfg.run_full && !rule) {
      row.status = cr ? "full_budget_exceeded" : "budget_exceeded";
    } else if (cfg.run_pl && !cr) {
      row.status = "pl_budget_exceeded";
    }

    const bool do_full = cfg.run_full && rule;
    const bool do_pl = cfg.run_pl && cr;

    auto full = [&](const GaussianMoments<double>& in) {
      return match_full(plf, in.mean, in.cov, *rule);
    };
    auto pl = [&](const GaussianMoments<double>& in) {
      return match_pl(plf, in.mean, in.cov, *cr, true);
    };

    if (do_full && do_pl) {
      double sum_m = 0, sum_xy = 0, sum_yy = 0, worst = 0;
      for (int t = 0; t < cfg.trials; ++t) {
        const auto in = bench_input(Rng::derive(trial_base, static_cast<std::uint64_t>(t)), row.x);
        plf.reset_evaluations();
        const auto a = full(in);
        if (t == 0) row.full_evals = static_cast<std::int64_t>(plf.evaluations());
        plf.reset_evaluations();
        const auto b = pl(in);
        if (t == 0) row.pl_evals = static_cast<std::int64_t>(plf.evaluations());
        sum_m += (a.mean_y - b.mean_y).norm();
        sum_xy += (a.cov_xy - b.cov_xy).norm();
        sum_yy += (a.cov_yy - b.cov_yy).norm();
        worst = std::max(worst, block_diff(a, b, z));
      }
      const double n = cfg.trials;
      row.delta_my = sum_m / n;
      row.delta_pxy = sum_xy / n;
      row.delta_pyy = sum_yy / n;
      row.max_rel_diff = worst;
    }

    std::vector<GaussianMoments<double>> pool;
    const int pool_size = std::min(cfg.trials, cfg.timing_pool);
    for (int t = 0; t < pool_size; ++t) {
      pool.push_back(bench_input(Rng::derive(trial_base, static_cast<std::uint64_t>(t)), row.x));
    }
    if (do_full) {
      plf.reset_evaluations();
      full(pool.front());
      row.full_evals = static_cast<std::int64_t>(plf.evaluations());
      row.t_full = mean_seconds(pool, cfg.trials, cfg.min_timing_seconds, full);
    }
    if (do_pl) {
      plf.reset_evaluations();
      pl(pool.front());
      row.pl_evals = static_cast<std::int64_t>(plf.evaluations());
      row.t_pl = mean_seconds(pool, cfg.trials, cfg.min_timing_seconds, pl);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const BenchConfig& cfg, const std::vector<BenchRow>& rows) {
  CsvWriter csv(out);
  std::ostringstream head;
  head << "plkf bench rule=" << rule_label(cfg.rule) << " trials=" << cfg.trials
       << " seed=" << cfg.seed << " rng=" << Rng::kAlgorithm
       << " point_budget=" << cfg.rule.point_budget;
  csv.comment(head.str());
  csv.row({"rule", "z", "l", "x", "status", "points", "unique_points", "full_evals", "pl_evals",
           "delta_my", "delta_pxy", "delta_pyy", "max_rel_diff", "nondet_t_full_s",
           "nondet_t_pl_s", "nondet_ratio"});
  auto opt_int = [](const std::optional<std::int64_t>& v) {
    return v ? std::to_string(*v) : std::string();
  };
  for (const auto& r : rows) {
    csv.row({rule_label(cfg.rule), std::to_string(r.z), std::to_string(r.l), std::to_string(r.x),
             r.status, opt_int(r.points), opt_int(r.unique_points), opt_int(r.full_evals),
             opt_int(r.pl_evals), CsvWriter::num(r.delta_my), CsvWriter::num(r.delta_pxy),
             CsvWriter::num(r.delta_pyy), CsvWriter::num(r.max_rel_diff),
             CsvWriter::num(r.t_full), CsvWriter::num(r.t_pl), CsvWriter::num(r.ratio())});
  }
}

}  // namespace plkf::experiments
