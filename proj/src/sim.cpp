#include <cmath>
#include <ostream>
#include <sstream>

#include "plkf/errors.hpp"
#include "plkf/experiments.hpp"
#include "plkf/rng.hpp"

namespace plkf::experiments {

namespace {

BlockStats block_stats(const GaussianMoments<double>& est, const Vector<double>& truth, int agents,
                       const std::optional<StepDiagnostics<double>>& diag,
                       const Vector<double>& y) {
  BlockStats s;
  for (int b = 0; b < 3; ++b) {
    double err2 = 0, var = 0;
    for (int i = 0; i < agents; ++i) {
      for (int d = 0; d < 3; ++d) {
        const Index at = static_cast<Index>(i) * models::kAgentStateDim + 3 * b + d;
        const double e = est.mean(at) - truth(at);
        err2 += e * e;
        var += est.cov(at, at);
      }
    }
    const double n = 3.0 * agents;
    s.rms_error[static_cast<std::size_t>(b)] = std::sqrt(err2 / n);
    s.envelope[static_cast<std::size_t>(b)] = 3.0 * std::sqrt(var / n);
  }
  if (diag) {
    const Vector<double> innov = y - diag->mean_y;
    s.nis = innov.dot(Eigen::LLT<Matrix<double>>(diag->cov_yy).solve(innov));
  }
  return s;
}

Vector<double> initial_truth(const SimConfig& cfg, Rng& rng) {
  const int n = cfg.singer.agents;
  Vector<double> x = Vector<double>::Zero(static_cast<Index>(n) * models::kAgentStateDim);
  const double sigma_a = std::sqrt(cfg.singer.maneuver_variance);
  for (int i = 0; i < n; ++i) {
    const Index base = static_cast<Index>(i) * models::kAgentStateDim;
    Eigen::Vector3d p;
    do {
      for (int d = 0; d < 3; ++d) p(d) = rng.uniform(0.0, cfg.cube);
    } while (p.norm() < cfg.exclusion);
    x.segment<3>(base) = p;
    for (int d = 0; d < 3; ++d) x(base + 3 + d) = rng.normal();
    for (int d = 0; d < 3; ++d) x(base + 6 + d) = sigma_a * rng.normal();
  }
  return x;
}

}  // namespace

void SimConfig::validate() const {
  singer.validate();
  sensor.validate(singer.agents);
  if (steps < 1) throw InvalidArgument("sim: steps must be >= 1");
  if (!run_lrkf && !run_pl) throw InvalidArgument("sim: no filter selected");
  if (!(cube > 0) || !(exclusion >= 0) || exclusion >= cube * std::sqrt(3.0)) {
    throw InvalidArgument("sim: the exclusion ball must leave part of the cube free");
  }
  if (!(initial_sd > 0)) throw InvalidArgument("sim: initial_sd must be > 0");
}

SimResult run_sim(const SimConfig& cfg) {
  cfg.validate();
  const int agents = cfg.singer.agents;
  const auto model = models::fusion_model(cfg.singer, cfg.sensor, cfg.rule, cfg.rule);
  const auto flow = models::singer_model(cfg.singer);
  const Index x_dim = model.state_dim();
  const Matrix<double> lq = cholesky_full(model.process_noise());
  const Matrix<double> lr = cholesky_full(model.measurement_noise());

  Rng truth_rng(Rng::derive(cfg.seed, 0));
  Rng prior_rng(Rng::derive(cfg.seed, 1));
  Vector<double> truth = initial_truth(cfg, truth_rng);

  FilterState<double> init;
  init.posterior.mean = truth + cfg.initial_sd * prior_rng.normal_vector(x_dim);
  init.posterior.cov = Matrix<double>::Identity(x_dim, x_dim) * (cfg.initial_sd * cfg.initial_sd);
  FilterState<double> a = init, b = init;

  StepOptions opts;
  opts.keep_diagnostics = cfg.diagnostics;

  SimResult result;
  for (int k = 1; k <= cfg.steps; ++k) {
    truth = flow.transition * truth + lq * truth_rng.normal_vector(x_dim);
    const Vector<double> y =
        model.measurement_full(truth) + lr * truth_rng.normal_vector(model.measurement_dim());

    SimStepRow row;
    row.k = k;
    if (cfg.run_lrkf) {
      a = lrkf_step(a, model, y, opts);
      row.lrkf = block_stats(a.posterior, truth, agents, a.diagnostics, y);
    }
    if (cfg.run_pl) {
      b = pl_lrkf_step(b, model, y, opts);
      row.pl = block_stats(b.posterior, truth, agents, b.diagnostics, y);
    }
    if (cfg.run_lrkf && cfg.run_pl) {
      row.mean_diff = (a.posterior.mean - b.posterior.mean).norm();
      row.cov_diff = (a.posterior.cov - b.posterior.cov).cwiseAbs().maxCoeff();
    }
    result.rows.push_back(row);
  }
  result.final_lrkf = a.posterior;
  result.final_pl = b.posterior;
  return result;
}

void write_sim_csv(std::ostream& out, const SimConfig& cfg, const SimResult& result) {
  CsvWriter csv(out);
  std::ostringstream head;
  head << "plkf sim agents=" << cfg.singer.agents << " steps=" << cfg.steps
       << " rule=" << rule_label(cfg.rule) << " seed=" << cfg.seed << " rng=" << Rng::kAlgorithm;
  csv.comment(head.str());

  const char* blocks[] = {"pos", "vel", "acc"};
  std::vector<std::string> header{"k"};
  auto add_filter_columns = [&](const std::string& prefix) {
    for (const char* b : blocks) header.push_back(prefix + "_rms_" + b);
    for (const char* b : blocks) header.push_back(prefix + "_3sigma_" + b);
    if (cfg.diagnostics) header.push_back(prefix + "_nis");
  };
  if (cfg.run_lrkf) add_filter_columns("lrkf");
  if (cfg.run_pl) add_filter_columns("pl_lrkf");
  const bool both = cfg.run_lrkf && cfg.run_pl;
  if (both) {
    header.push_back("mean_diff");
    header.push_back("cov_diff");
  }
  csv.row(header);

  for (const auto& r : result.rows) {
    std::vector<std::string> f{std::to_string(r.k)};
    auto add = [&](const std::optional<BlockStats>& s) {
      for (double v : s->rms_error) f.push_back(CsvWriter::num(v));
      for (double v : s->envelope) f.push_back(CsvWriter::num(v));
      if (cfg.diagnostics) f.push_back(CsvWriter::num(s->nis));
    };
    if (cfg.run_lrkf) add(r.lrkf);
    if (cfg.run_pl) add(r.pl);
    if (both) {
      f.push_back(CsvWriter::num(r.mean_diff));
      f.push_back(CsvWriter::num(r.cov_diff));
    }
    csv.row(f);
  }
}

}  // namespace plkf::experiments
