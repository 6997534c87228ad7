#pragma once

// Experiment drivers behind the command-line tool: moment benchmarks of the
// full and partially-linear evaluations, the multi-agent tracking comparison,
// and the rule/factorization self-check.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "plkf/cubature.hpp"
#include "plkf/filter.hpp"
#include "plkf/models.hpp"

namespace plkf::experiments {

/// Flat `key = value` configuration; `#` starts a comment.
class Config {
 public:
  static Config load(const std::string& path);
  static Config parse(std::istream& in, const std::string& origin = "<config>");

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

RuleKind parse_rule_kind(const std::string& s);
std::string rule_label(const RuleSpec& spec);
std::pair<Index, Index> parse_dims(const std::string& s);  // "ZxL"
std::vector<std::pair<Index, Index>> parse_dims_list(const std::string& s);  // "3x10,3x100"

/// RFC-4180 CSV output, doubles at 17 significant digits, LF line endings.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void comment(const std::string& text);
  void row(const std::vector<std::string>& fields);

  static std::string quote(const std::string& field);
  static std::string num(double v);
  static std::string num(std::optional<double> v) { return v ? num(*v) : std::string(); }
  static std::string num(std::int64_t v) { return std::to_string(v); }

 private:
  std::ostream& out_;
};

// ---------------------------------------------------------------------------

struct BenchConfig {
  RuleSpec rule;
  std::vector<std::pair<Index, Index>> dims{{3, 10}};
  int trials = 10000;
  std::uint64_t seed = 1;
  bool run_full = true;
  bool run_pl = true;
  double min_timing_seconds = 0.2;
  int timing_pool = 16;  // distinct inputs cycled through while timing

  void validate() const;
};

struct BenchRow {
  Index z = 0, l = 0, x = 0;
  std::string status = "ok";
  std::optional<std::int64_t> points;         // C(X) of the full rule
  std::optional<std::int64_t> unique_points;  // |unique nonlinear set|
  std::optional<std::int64_t> full_evals;     // calls of the stacked function per match
  std::optional<std::int64_t> pl_evals;       // calls of g per match
  std::optional<double> delta_my, delta_pxy, delta_pyy;  // trial means of 2-/Frobenius norms
  std::optional<double> max_rel_diff;  // max |A - B| / (1 + |block|_max) over blocks and trials
  std::optional<double> t_full, t_pl;  // mean seconds per call (non-deterministic)

  std::optional<double> ratio() const {
    if (t_full && t_pl && *t_pl > 0) return *t_full / *t_pl;
    return std::nullopt;
  }
};

std::vector<BenchRow> run_bench(const BenchConfig& cfg);
void write_bench_csv(std::ostream& out, const BenchConfig& cfg, const std::vector<BenchRow>& rows);

/// Seeded benchmark input for one trial: m ~ N(0, I), P = B B^T / X + 0.1 I.
GaussianMoments<double> bench_input(std::uint64_t trial_seed, Index x);

// ---------------------------------------------------------------------------

struct SimConfig {
  models::SingerParams singer{0.1, 2.0, 1.0, 10};
  models::BearingSensorParams sensor;
  RuleSpec rule;
  int steps = 100;
  std::uint64_t seed = 1;
  bool run_lrkf = true;
  bool run_pl = true;
  bool diagnostics = false;
  double cube = 100.0;       // initial positions uniform in [0, cube]^3 ...
  double exclusion = 5.0;    // ... outside this ball around the base station
  double initial_sd = 1.0;   // prior standard deviation of every state

  void validate() const;
};

struct BlockStats {
  std::array<double, 3> rms_error{};  // position, velocity, acceleration
  std::array<double, 3> envelope{};   // 3 sigma, RMS over the block's coordinates
  std::optional<double> nis;          // normalized innovation squared (diagnostics)
};

struct SimStepRow {
  std::int64_t k = 0;
  std::optional<BlockStats> lrkf, pl;
  std::optional<double> mean_diff;  // |m_A - m_B|_2
  std::optional<double> cov_diff;   // |P_A - P_B|_max
};

struct SimResult {
  std::vector<SimStepRow> rows;
  GaussianMoments<double> final_lrkf, final_pl;
};

SimResult run_sim(const SimConfig& cfg);
void write_sim_csv(std::ostream& out, const SimConfig& cfg, const SimResult& result);

// ---------------------------------------------------------------------------

struct ValidateConfig {
  Index max_rule_dim = 50;            // SC and UT sweep 1..max
  std::vector<int> gh_orders{2, 3, 4, 5};
  Index gh_max_dim = 6;
  double ut_alpha = 1.0, ut_kappa = 2.0;
  int cholesky_matrices = 1000;
  Index cholesky_max_dim = 40;        // X in 2..max
  std::uint64_t seed = 7;
  std::string fault;                  // "weight" corrupts one SC weight (test hook)
};

struct ValidateRow {
  std::string check;
  double deviation = 0;
  double tolerance = 0;
  bool pass = false;
  std::string detail;
};

std::vector<ValidateRow> run_validate(const ValidateConfig& cfg);
void write_validate_report(std::ostream& out, const std::vector<ValidateRow>& rows);

/// Max deviations of a rule from sum(w) = 1 and Xi W Xi^T = I, and whether
/// every nonzero point has a negated twin of equal weight.
struct RuleCheck {
  double weight_sum_error = 0;
  double second_moment_error = 0;
  bool symmetric = false;
};
RuleCheck check_rule(const CubatureRule<double>& rule);

// ---------------------------------------------------------------------------
// Config keys (defaults are the struct defaults above):
//   seed
//   bench.rule bench.ut_alpha bench.ut_kappa bench.gh_order bench.point_budget
//   bench.dims bench.trials bench.modes bench.timing_seconds
//   sim.rule sim.ut_alpha sim.ut_kappa sim.gh_order sim.agents sim.steps
//   sim.filters sim.diagnostics sim.initial_sd sim.cube sim.exclusion
//   singer.dt singer.tau singer.sigma_m sensor.sigma_alpha sensor.reported_var
//   validate.max_rule_dim validate.gh_orders validate.gh_max_dim
//   validate.cholesky_matrices validate.cholesky_max_dim validate.fault

BenchConfig bench_config_from(const Config& c);
SimConfig sim_config_from(const Config& c);
ValidateConfig validate_config_from(const Config& c);

}  // namespace plkf::experiments
