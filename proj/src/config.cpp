#include <algorithm>
#include <cmath>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "plkf/errors.hpp"
#include "plkf/experiments.hpp"

namespace plkf::experiments {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open " + path);
  return parse(in, path);
}

Config Config::parse(std::istream& in, const std::string& origin) {
  Config cfg;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw InvalidArgument(origin + ":" + std::to_string(number) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::optional<std::string> Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    throw InvalidArgument("config: " + key + " = '" + *v + "' is not a number");
  }
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw InvalidArgument("config: " + key + " = '" + *v + "' is not an integer");
  }
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const std::string s = lower(*v);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw InvalidArgument("config: " + key + " = '" + *v + "' is not a boolean");
}

RuleKind parse_rule_kind(const std::string& s) {
  const std::string k = lower(trim(s));
  if (k == "sc") return RuleKind::Spherical;
  if (k == "ut") return RuleKind::Unscented;
  if (k == "gh" || k == "ghc") return RuleKind::GaussHermite;
  throw InvalidArgument("unknown rule '" + s + "' (expected sc, ut or gh)");
}

std::string rule_label(const RuleSpec& spec) {
  std::ostringstream os;
  switch (spec.kind) {
    case RuleKind::Spherical:
      return "sc";
    case RuleKind::Unscented:
      os << "ut(alpha=" << spec.alpha << ",kappa=" << spec.kappa << ")";
      return os.str();
    case RuleKind::GaussHermite:
      os << "gh(p=" << spec.order << ")";
      return os.str();
  }
  return "?";
}

std::pair<Index, Index> parse_dims(const std::string& s) {
  const std::string t = lower(trim(s));
  const auto x = t.find('x');
  auto to_index = [&](const std::string& part) {
    Index out = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc() || ptr != part.data() + part.size() || part.empty() || out < 1) {
      throw InvalidArgument("dimensions '" + s + "' must look like ZxL with Z, L >= 1");
    }
    return out;
  };
  if (x == std::string::npos) throw InvalidArgument("dimensions '" + s + "' must look like ZxL");
  return {to_index(t.substr(0, x)), to_index(t.substr(x + 1))};
}

std::vector<std::pair<Index, Index>> parse_dims_list(const std::string& s) {
  std::vector<std::pair<Index, Index>> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!trim(item).empty()) out.push_back(parse_dims(item));
  }
  if (out.empty()) throw InvalidArgument("empty dimension list");
  return out;
}

namespace {

RuleSpec rule_from(const Config& c, const std::string& prefix) {
  RuleSpec r;
  r.kind = parse_rule_kind(c.get_string(prefix + ".rule", "sc"));
  r.alpha = c.get_double(prefix + ".ut_alpha", r.alpha);
  r.kappa = c.get_double(prefix + ".ut_kappa", r.kappa);
  r.order = static_cast<int>(c.get_int(prefix + ".gh_order", r.order));
  r.point_budget = c.get_int(prefix + ".point_budget", r.point_budget);
  return r;
}

std::uint64_t seed_from(const Config& c, std::uint64_t fallback) {
  const auto v = c.get("seed");
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw InvalidArgument("config: seed = '" + *v + "' is not an unsigned integer");
  }
  return out;
}

}  // namespace

BenchConfig bench_config_from(const Config& c) {
  BenchConfig b;
  b.rule = rule_from(c, "bench");
  if (const auto dims = c.get("bench.dims")) b.dims = parse_dims_list(*dims);
  b.trials = static_cast<int>(c.get_int("bench.trials", b.trials));
  b.seed = seed_from(c, b.seed);
  const std::string modes = lower(c.get_string("bench.modes", "both"));
  if (modes == "both" || modes == "full,pl" || modes == "pl,full") {
    b.run_full = b.run_pl = true;
  } else if (modes == "full") {
    b.run_pl = false;
  } else if (modes == "pl") {
    b.run_full = false;
  } else {
    throw InvalidArgument("config: bench.modes must be full, pl or both");
  }
  b.min_timing_seconds = c.get_double("bench.timing_seconds", b.min_timing_seconds);
  b.validate();
  return b;
}

SimConfig sim_config_from(const Config& c) {
  SimConfig s;
  s.rule = rule_from(c, "sim");
  s.singer.agents = static_cast<int>(c.get_int("sim.agents", s.singer.agents));
  s.steps = static_cast<int>(c.get_int("sim.steps", s.steps));
  s.seed = seed_from(c, s.seed);
  const std::string filters = lower(c.get_string("sim.filters", "both"));
  if (filters == "both" || filters == "lrkf,pl" || filters == "pl,lrkf") {
    s.run_lrkf = s.run_pl = true;
  } else if (filters == "lrkf") {
    s.run_pl = false;
  } else if (filters == "pl" || filters == "pl-lrkf") {
    s.run_lrkf = false;
  } else {
    throw InvalidArgument("config: sim.filters must be lrkf, pl or both");
  }
  s.diagnostics = c.get_bool("sim.diagnostics", s.diagnostics);
  s.initial_sd = c.get_double("sim.initial_sd", s.initial_sd);
  s.cube = c.get_double("sim.cube", s.cube);
  s.exclusion = c.get_double("sim.exclusion", s.exclusion);
  s.singer.dt = c.get_double("singer.dt", s.singer.dt);
  s.singer.tau = c.get_double("singer.tau", s.singer.tau);
  const double sigma_m = c.get_double("singer.sigma_m", std::sqrt(s.singer.maneuver_variance));
  s.singer.maneuver_variance = sigma_m * sigma_m;
  s.sensor.sigma_alpha = c.get_double("sensor.sigma_alpha", s.sensor.sigma_alpha);
  if (c.has("sensor.reported_var")) {
    s.sensor.reported_cov = {Matrix<double>::Identity(models::kAgentStateDim,
                                                      models::kAgentStateDim) *
                             c.get_double("sensor.reported_var", 0.0)};
  }
  s.validate();
  return s;
}

ValidateConfig validate_config_from(const Config& c) {
  ValidateConfig v;
  v.max_rule_dim = c.get_int("validate.max_rule_dim", v.max_rule_dim);
  v.gh_max_dim = c.get_int("validate.gh_max_dim", v.gh_max_dim);
  if (const auto orders = c.get("validate.gh_orders")) {
    v.gh_orders.clear();
    std::stringstream ss(*orders);
    std::string item;
    while (std::getline(ss, item, ',')) {
      Config one;
      one.set("order", trim(item));
      v.gh_orders.push_back(static_cast<int>(one.get_int("order", 0)));
    }
  }
  v.cholesky_matrices = static_cast<int>(c.get_int("validate.cholesky_matrices", v.cholesky_matrices));
  v.cholesky_max_dim = c.get_int("validate.cholesky_max_dim", v.cholesky_max_dim);
  v.seed = seed_from(c, v.seed);
  v.fault = c.get_string("validate.fault", v.fault);
  return v;
}

}  // namespace plkf::experiments
