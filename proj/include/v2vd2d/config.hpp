#pragma once

// Sectioned key=value configuration files:
//
//   [traffic]
//   lambda_a = 0.25
//   # comment
//   [experiment]
//   replications = 1000
//
// Every key is listed in config_schema() with units, legal range and default;
// the parser, the validator and the --help text all read that table.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "v2vd2d/errors.hpp"
#include "v2vd2d/experiments.hpp"

namespace v2vd2d {

namespace detail {

/// Malformed value text; the parser turns it into a ParseError at the value.
struct BadValue {
  std::string message;
};

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw BadValue{"expected a number, got '" + std::string(s) + "'"};
  }
  return v;
}

inline std::uint64_t parse_u64(std::string_view s) {
  s = trim(s);
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw BadValue{"expected a non-negative integer, got '" + std::string(s) + "'"};
  }
  return v;
}

inline bool parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw BadValue{"expected true or false, got '" + std::string(s) + "'"};
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  s = trim(s);
  if (s.empty()) return out;
  for (;;) {
    const auto c = s.find(',');
    out.push_back(trim(s.substr(0, c)));
    if (c == std::string_view::npos) break;
    s.remove_prefix(c + 1);
  }
  return out;
}

inline std::vector<double> parse_double_list(std::string_view s) {
  std::vector<double> out;
  for (auto item : split_list(s)) out.push_back(parse_double(item));
  return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out;
}

inline StrategyKind parse_strategy(std::string_view s) {
  for (auto k : {StrategyKind::pure_v2v_backtrack, StrategyKind::d2d_on_demand, StrategyKind::d2d_proactive}) {
    if (s == to_string(k)) return k;
  }
  throw BadValue{"unknown strategy '" + std::string(s) + "' (expected backtrack, d2d_on_demand or d2d_proactive)"};
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

struct ConfigKey {
  std::string section;
  std::string key;
  std::string units;
  std::string legal;  ///< legal range, as shown in errors and help
  std::string description;
  std::function<std::string(const ExperimentConfig&)> get;
  /// Throws detail::BadValue for unparsable text, ValidationError for range.
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

namespace detail {

template <class Ref>
ConfigKey real_key(std::string section, std::string key, std::string units, std::string legal,
                   std::string description, Ref ref, std::function<bool(double)> ok) {
  ConfigKey k{section, key, units, legal, description, {}, {}};
  k.get = [ref](const ExperimentConfig& c) { return format_double(ref(const_cast<ExperimentConfig&>(c))); };
  k.set = [ref, ok, key, legal](ExperimentConfig& c, std::string_view text) {
    const double v = parse_double(text);
    if (!ok(v)) throw ValidationError(key, "value " + format_double(v) + " out of range; must satisfy " + legal);
    ref(c) = v;
  };
  return k;
}

template <class Ref>
ConfigKey list_key(std::string section, std::string key, std::string units, std::string legal,
                   std::string description, Ref ref, std::function<bool(double)> ok, bool allow_empty) {
  ConfigKey k{section, key, units, legal, description, {}, {}};
  k.get = [ref](const ExperimentConfig& c) { return join_doubles(ref(const_cast<ExperimentConfig&>(c))); };
  k.set = [ref, ok, key, legal, allow_empty](ExperimentConfig& c, std::string_view text) {
    auto v = parse_double_list(text);
    if (v.empty() && !allow_empty) throw ValidationError(key, "list must not be empty; entries must satisfy " + legal);
    for (double x : v) {
      if (!ok(x)) throw ValidationError(key, "entry " + format_double(x) + " out of range; must satisfy " + legal);
    }
    ref(c) = std::move(v);
  };
  return k;
}

}  // namespace detail

inline const std::vector<ConfigKey>& config_schema() {
  using detail::list_key;
  using detail::real_key;
  static const std::vector<ConfigKey> schema = [] {
    const auto positive = [](double v) { return v > 0.0; };
    const auto non_negative = [](double v) { return v >= 0.0; };
    const auto any = [](double) { return true; };
    std::vector<ConfigKey> s;

    s.push_back(real_key("traffic", "lambda_a", "1/s", "lambda_a > 0", "vehicle arrival rate at the road entrance",
                         [](ExperimentConfig& c) -> double& { return c.traffic.lambda_a; }, positive));
    s.push_back(real_key("traffic", "v_min", "m/s", "0 < v_min < v_max", "lower speed truncation bound",
                         [](ExperimentConfig& c) -> double& { return c.traffic.v_min; }, positive));
    s.push_back(real_key("traffic", "v_max", "m/s", "v_max > v_min", "upper speed truncation bound",
                         [](ExperimentConfig& c) -> double& { return c.traffic.v_max; }, positive));
    s.push_back(real_key("traffic", "mu", "m/s", "finite", "mean of the untruncated speed law",
                         [](ExperimentConfig& c) -> double& { return c.traffic.mu; }, any));
    s.push_back(real_key("traffic", "sigma", "m/s", "sigma > 0", "standard deviation of the untruncated speed law",
                         [](ExperimentConfig& c) -> double& { return c.traffic.sigma; }, positive));

    s.push_back(list_key("link", "ranges", "m", "R > 0", "V2V communication ranges R (comma-separated)",
                         [](ExperimentConfig& c) -> std::vector<double>& { return c.ranges; }, positive, false));
    s.push_back(list_key("link", "road_lengths", "m", "L > 0", "road lengths L, RSU at the far end (comma-separated)",
                         [](ExperimentConfig& c) -> std::vector<double>& { return c.road_lengths; }, positive,
                         false));
    s.push_back(list_key("link", "lambda_prime_sweep", "1", "lambda' > 0",
                         "densities lambda*R for the hop/delay table; empty uses lambda_a",
                         [](ExperimentConfig& c) -> std::vector<double>& { return c.lambda_prime_sweep; }, positive,
                         true));
    s.push_back(real_key("link", "closed_form_margin", "1", "margin >= 0",
                         "closed form is used only for lambda*R >= ln 4 + margin",
                         [](ExperimentConfig& c) -> double& { return c.closed_form_margin; }, non_negative));

    const auto delay_key = [&](const char* key, const char* desc, double DelayModel::*field, bool strict) {
      s.push_back(real_key("delay", key, "s", std::string(key) + (strict ? " > 0" : " >= 0"), desc,
                           [field](ExperimentConfig& c) -> double& { return c.delay.*field; },
                           strict ? std::function<bool(double)>(positive) : std::function<bool(double)>(non_negative)));
    };
    delay_key("t_proc", "processing time per hop", &DelayModel::t_proc, false);
    delay_key("t_access", "channel access time per neighbor of the sender", &DelayModel::t_access, false);
    delay_key("t_d2d_discovery_on_demand", "D2D discovery started at the dead end",
              &DelayModel::t_d2d_discovery_on_demand, false);
    delay_key("t_d2d_discovery_proactive", "D2D discovery cost when peers are kept discovered",
              &DelayModel::t_d2d_discovery_proactive, false);
    delay_key("t_d2d_setup", "D2D link setup", &DelayModel::t_d2d_setup, false);
    delay_key("t_d2d_tx", "D2D transmission", &DelayModel::t_d2d_tx, false);
    delay_key("t_cellular_fallback", "cellular uplink when no D2D peer is in reach",
              &DelayModel::t_cellular_fallback, false);
    delay_key("carry_step", "mobility time step while carrying a message", &DelayModel::carry_step, true);
    delay_key("carry_budget", "carrying time before backtracking gives up", &DelayModel::carry_budget, false);

    {
      ConfigKey k{"experiment", "strategies", "-", "backtrack | d2d_on_demand | d2d_proactive",
                  "recovery strategies to compare (comma-separated)", {}, {}};
      k.get = [](const ExperimentConfig& c) {
        std::string out;
        for (std::size_t i = 0; i < c.strategies.size(); ++i) out += (i ? ", " : "") + std::string(to_string(c.strategies[i]));
        return out;
      };
      k.set = [](ExperimentConfig& c, std::string_view text) {
        std::vector<StrategyKind> v;
        for (auto item : detail::split_list(text)) v.push_back(detail::parse_strategy(item));
        if (v.empty()) throw ValidationError("strategies", "list must not be empty");
        c.strategies = std::move(v);
      };
      s.push_back(std::move(k));
    }
    s.push_back(list_key("experiment", "d2d_range_factors", "1", "3 <= factor <= 5 (wider with allow_nonstandard_factor)",
                         "D2D range as a multiple of R (comma-separated)",
                         [](ExperimentConfig& c) -> std::vector<double>& { return c.d2d_range_factors; }, positive,
                         false));
    {
      ConfigKey k{"experiment", "allow_nonstandard_factor", "bool", "true | false",
                  "accept D2D range factors outside [3, 5] with a warning", {}, {}};
      k.get = [](const ExperimentConfig& c) { return std::string(c.allow_nonstandard_factor ? "true" : "false"); };
      k.set = [](ExperimentConfig& c, std::string_view text) { c.allow_nonstandard_factor = detail::parse_bool(text); };
      s.push_back(std::move(k));
    }
    {
      ConfigKey k{"experiment", "max_back_hops", "hops", "max_back_hops >= 0",
                  "backward passes allowed per dead end", {}, {}};
      k.get = [](const ExperimentConfig& c) { return std::to_string(c.max_back_hops); };
      k.set = [](ExperimentConfig& c, std::string_view text) {
        const auto v = detail::parse_u64(text);
        if (v > 1000) throw ValidationError("max_back_hops", "value " + std::to_string(v) + " out of range; must satisfy 0 <= max_back_hops <= 1000");
        c.max_back_hops = static_cast<unsigned>(v);
      };
      s.push_back(std::move(k));
    }
    {
      ConfigKey k{"experiment", "replications", "count", "replications >= 1", "Monte Carlo replications per cell", {}, {}};
      k.get = [](const ExperimentConfig& c) { return std::to_string(c.replications); };
      k.set = [](ExperimentConfig& c, std::string_view text) {
        const auto v = detail::parse_u64(text);
        if (v < 1) throw ValidationError("replications", "value 0 out of range; must satisfy replications >= 1");
        c.replications = static_cast<std::size_t>(v);
      };
      s.push_back(std::move(k));
    }
    {
      ConfigKey k{"experiment", "master_seed", "u64", "0 <= seed < 2^64", "seed from which every stream is derived", {}, {}};
      k.get = [](const ExperimentConfig& c) { return std::to_string(c.master_seed); };
      k.set = [](ExperimentConfig& c, std::string_view text) { c.master_seed = detail::parse_u64(text); };
      s.push_back(std::move(k));
    }
    s.push_back(real_key("experiment", "deadend_floor", "1", "0 <= deadend_floor <= 1",
                         "minimum dead-end rate expected of strategy-comparison roads",
                         [](ExperimentConfig& c) -> double& { return c.deadend_floor; },
                         [](double v) { return v >= 0.0 && v <= 1.0; }));
    {
      ConfigKey k{"experiment", "output_dir", "path", "non-empty", "directory for CSV, JSON and MANIFEST output", {}, {}};
      k.get = [](const ExperimentConfig& c) { return c.output_dir; };
      k.set = [](ExperimentConfig& c, std::string_view text) {
        if (text.empty()) throw ValidationError("output_dir", "must be non-empty");
        c.output_dir = std::string(text);
      };
      s.push_back(std::move(k));
    }
    return s;
  }();
  return schema;
}

inline const std::vector<std::string>& config_sections() {
  static const std::vector<std::string> sections{"traffic", "link", "delay", "experiment"};
  return sections;
}

/// Checks spanning several keys, reported against the key that must change.
inline void validate_config(const ExperimentConfig& c) {
  if (!(c.traffic.v_max > c.traffic.v_min)) {
    throw ValidationError("v_max", "value " + detail::format_double(c.traffic.v_max) +
                                       " out of range; must satisfy v_max > v_min (v_min = " +
                                       detail::format_double(c.traffic.v_min) + ")");
  }
  if (!c.allow_nonstandard_factor) {
    for (double f : c.d2d_range_factors) {
      if (f < 3.0 || f > 5.0) {
        throw ValidationError("d2d_range_factors", "entry " + detail::format_double(f) +
                                                       " out of range; must satisfy 3 <= factor <= 5 "
                                                       "(set allow_nonstandard_factor = true to override)");
      }
    }
  }
  try {
    TruncatedNormal check(c.traffic);
    (void)check;
  } catch (const DomainError& e) {
    throw ValidationError("mu", std::string(e.what()) + "; the speed bounds must carry probability mass");
  }
}

/// Nearest known key by edit distance, formatted for an error message.
inline std::string suggest_key(std::string_view unknown) {
  const ConfigKey* best = nullptr;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& k : config_schema()) {
    const auto d = detail::edit_distance(unknown, k.key);
    if (d < best_d) {
      best_d = d;
      best = &k;
    }
  }
  if (!best || best_d > std::max<std::size_t>(3, unknown.size() / 2)) return {};
  return "[" + best->section + "] " + best->key;
}

/// Parses configuration text; keys missing from the text keep their defaults.
inline ExperimentConfig parse_config_text(std::string_view text) {
  ExperimentConfig cfg;
  std::string section;
  std::vector<std::string> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const auto line = detail::trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const int indent = static_cast<int>(raw.find_first_not_of(" \t")) + 1;

    if (line[0] == '[') {
      if (line.back() != ']') throw ParseError(line_no, indent + static_cast<int>(line.size()), "expected ']'");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      const auto& secs = config_sections();
      if (std::find(secs.begin(), secs.end(), section) == secs.end()) {
        throw ParseError(line_no, indent + 1, "unknown section [" + section + "] (expected traffic, link, delay or experiment)");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, indent, "expected key = value");
    const std::string key(detail::trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError(line_no, indent, "missing key before '='");
    if (section.empty()) throw ParseError(line_no, indent, "key '" + key + "' appears before any [section]");

    const auto& schema = config_schema();
    const auto it = std::find_if(schema.begin(), schema.end(),
                                 [&](const ConfigKey& k) { return k.section == section && k.key == key; });
    if (it == schema.end()) {
      const auto other = std::find_if(schema.begin(), schema.end(), [&](const ConfigKey& k) { return k.key == key; });
      if (other != schema.end()) {
        throw ValidationError(key, "unknown key in [" + section + "]; it belongs in [" + other->section + "]");
      }
      const auto hint = suggest_key(key);
      throw ValidationError(key, "unknown key in [" + section + "]" + (hint.empty() ? "" : "; did you mean " + hint + "?"));
    }
    if (std::find(seen.begin(), seen.end(), section + "." + key) != seen.end()) {
      throw ParseError(line_no, indent, "duplicate key '" + key + "'");
    }
    seen.push_back(section + "." + key);

    const auto value = detail::trim(line.substr(eq + 1));
    const auto rest = line.substr(eq + 1);
    const auto lead = rest.find_first_not_of(" \t");
    const int value_col = indent + static_cast<int>(eq) + 1 + static_cast<int>(lead == std::string_view::npos ? 0 : lead);
    try {
      it->set(cfg, value);
    } catch (const detail::BadValue& e) {
      throw ParseError(line_no, value_col, key + ": " + e.message);
    }
  }
  validate_config(cfg);
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  return parse_config_text(read_file(path));
}

/// Configuration text reproducing `cfg` (every key, schema order).
inline std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  for (const auto& sec : config_sections()) {
    os << '[' << sec << "]\n";
    for (const auto& k : config_schema()) {
      if (k.section == sec) os << k.key << " = " << k.get(cfg) << '\n';
    }
  }
  return os.str();
}

/// Help block listing every key with units, default, legal range and meaning.
inline std::string config_help() {
  const ExperimentConfig defaults;
  std::ostringstream os;
  os << "Configuration keys (file given with --config; missing keys take the default):\n";
  for (const auto& sec : config_sections()) {
    os << "\n  [" << sec << "]\n";
    for (const auto& k : config_schema()) {
      if (k.section != sec) continue;
      os << "    " << k.key << " = " << k.get(defaults) << "  [" << k.units << "]  " << k.description << " ("
         << k.legal << ")\n";
    }
  }
  return os.str();
}

}  // namespace v2vd2d
