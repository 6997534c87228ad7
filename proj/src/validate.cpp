#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>

#include "plkf/errors.hpp"
#include "plkf/experiments.hpp"
#include "plkf/linalg.hpp"
#include "plkf/rng.hpp"

namespace plkf::experiments {

namespace {

constexpr double kWeightSumTol = 1e-12;
constexpr double kSecondMomentTol = 1e-10;
constexpr double kCholeskyTol = 1e-13;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

ValidateRow rule_row(const std::string& name, const CubatureRule<double>& rule) {
  const RuleCheck c = check_rule(rule);
  ValidateRow row;
  row.check = name;
  row.deviation = std::max(c.weight_sum_error, c.second_moment_error);
  row.tolerance = kSecondMomentTol;
  row.pass = c.weight_sum_error <= kWeightSumTol && c.second_moment_error <= kSecondMomentTol &&
             c.symmetric;
  row.detail = "sum_w=" + fmt(c.weight_sum_error) + " second_moment=" +
               fmt(c.second_moment_error) + " symmetric=" + (c.symmetric ? "yes" : "no");
  return row;
}

}  // namespace

RuleCheck check_rule(const CubatureRule<double>& rule) {
  RuleCheck c;
  const Index x = rule.dim();
  c.weight_sum_error = std::abs(rule.weights.sum() - 1.0);
  const Matrix<double> second =
      rule.points * rule.weights.asDiagonal() * rule.points.transpose();
  c.second_moment_error = (second - Matrix<double>::Identity(x, x)).cwiseAbs().maxCoeff();

  // Multiset {(xi, w)} over nonzero points must equal {(-xi, w)}.
  std::vector<std::vector<double>> plus, minus;
  for (Index j = 0; j < rule.size(); ++j) {
    if (rule.points.col(j).isZero(0.0)) continue;
    std::vector<double> a(static_cast<std::size_t>(x) + 1), b(static_cast<std::size_t>(x) + 1);
    for (Index i = 0; i < x; ++i) {
      a[static_cast<std::size_t>(i)] = rule.points(i, j);
      b[static_cast<std::size_t>(i)] = -rule.points(i, j) + 0.0;  // no signed zeros
    }
    a.back() = b.back() = rule.weights(j);
    plus.push_back(std::move(a));
    minus.push_back(std::move(b));
  }
  std::sort(plus.begin(), plus.end());
  std::sort(minus.begin(), minus.end());
  c.symmetric = plus == minus;
  return c;
}

std::vector<ValidateRow> run_validate(const ValidateConfig& cfg) {
  if (cfg.max_rule_dim < 1 || cfg.gh_max_dim < 1 || cfg.cholesky_max_dim < 2 ||
      cfg.cholesky_matrices < 0) {
    throw InvalidArgument("validate: invalid sweep bounds");
  }
  if (!cfg.fault.empty() && cfg.fault != "weight") {
    throw InvalidArgument("validate: unknown fault '" + cfg.fault + "'");
  }
  std::vector<ValidateRow> rows;

  for (Index x = 1; x <= cfg.max_rule_dim; ++x) {
    CubatureRule<double> rule = spherical_rule<double>(x);
    if (cfg.fault == "weight") rule.weights(0) *= 1.0 + 1e-6;
    rows.push_back(rule_row("assumptions sc X=" + std::to_string(x), rule));
  }
  for (Index x = 1; x <= cfg.max_rule_dim; ++x) {
    rows.push_back(rule_row("assumptions ut X=" + std::to_string(x),
                            unscented_rule<double>(x, cfg.ut_alpha, cfg.ut_kappa)));
  }
  for (int p : cfg.gh_orders) {
    for (Index x = 1; x <= cfg.gh_max_dim; ++x) {
      rows.push_back(rule_row("assumptions gh p=" + std::to_string(p) + " X=" + std::to_string(x),
                              gauss_hermite_rule<double>(x, p)));
    }
  }

  // Partial against full factor, max over every Z and every matrix of a size.
  std::map<Index, std::pair<double, int>> by_dim;
  const Index span = cfg.cholesky_max_dim - 1;
  for (int i = 0; i < cfg.cholesky_matrices; ++i) {
    const Index x = 2 + static_cast<Index>(i) % span;
    Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(i)));
    const Matrix<double> b = rng.normal_matrix(x, x);
    Matrix<double> p = b * b.transpose() / static_cast<double>(x);
    p.diagonal().array() += 0.5;
    const Matrix<double> full = cholesky_full(p);
    auto& [worst, count] = by_dim[x];
    ++count;
    for (Index z = 1; z <= x; ++z) {
      const Matrix<double> cols = cholesky_partial(p, z).columns();
      worst = std::max(worst, (cols - full.leftCols(z)).cwiseAbs().maxCoeff());
    }
  }
  for (const auto& [x, entry] : by_dim) {
    ValidateRow row;
    row.check = "partial cholesky X=" + std::to_string(x);
    row.deviation = entry.first;
    row.tolerance = kCholeskyTol;
    row.pass = entry.first <= kCholeskyTol;
    row.detail = "matrices=" + std::to_string(entry.second) + " all Z";
    rows.push_back(row);
  }
  return rows;
}

void write_validate_report(std::ostream& out, const std::vector<ValidateRow>& rows) {
  for (const auto& r : rows) {
    out << (r.pass ? "PASS " : "FAIL ") << r.check << " max_dev=" << fmt(r.deviation)
        << " tol=" << fmt(r.tolerance) << " (" << r.detail << ")\n";
  }
}

}  // namespace plkf::experiments
