#pragma once

// Experiment config files: a TOML subset.
//
//   # comment
//   seed = 7
//   [simulation]
//   kappa = 0.05
//   scheme = "IF-RK2"
//   [experiment]
//   name = "theorem1"
//   alphas = [50, 100, 200]
//
// Values are numbers, booleans, double-quoted strings and arrays (which may
// span lines and nest). Unset keys keep the preset defaults of the named
// experiment. Unknown sections and keys are errors.

#include "oumix/experiments.hpp"
#include "oumix/io.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace oumix {

struct ConfigValue {
  using Array = std::vector<ConfigValue>;
  std::variant<double, bool, std::string, Array> v;
  std::string raw; // number literal as written
  int line = 0;
};

struct RunConfig {
  ExperimentPlan plan;
  std::string output_dir; // empty: not set in the file
  OutputFormats formats;
  std::string text;
};

namespace detail {

class ConfigParser {
public:
  ConfigParser(std::string text, std::string source)
      : text_(std::move(text)), source_(std::move(source)) {}

  /// "section.key" -> value; top-level keys have no prefix.
  std::map<std::string, ConfigValue> parse() {
    std::map<std::string, ConfigValue> out;
    std::string section;
    while (true) {
      skip_space_and_comments(true);
      if (pos_ >= text_.size()) {
        break;
      }
      const int line = line_;
      if (text_[pos_] == '[') {
        ++pos_;
        skip_space_and_comments(false);
        section = bare_key();
        skip_space_and_comments(false);
        expect(']');
        end_of_line();
        if (!seen_sections_.insert(section).second) {
          fail(line, "duplicate section [" + section + "]");
        }
        continue;
      }
      const std::string key = bare_key();
      skip_space_and_comments(false);
      expect('=');
      skip_space_and_comments(false);
      ConfigValue val = value();
      val.line = line;
      end_of_line();
      const std::string full = section.empty() ? key : section + "." + key;
      if (!out.emplace(full, std::move(val)).second) {
        fail(line, "duplicate key '" + full + "'");
      }
    }
    return out;
  }

  [[noreturn]] void fail(int line, const std::string &msg) const {
    throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
  }

private:
  void skip_space_and_comments(bool newlines) {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') {
          ++pos_;
        }
      } else if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
      } else if (c == '\n' && newlines) {
        ++pos_;
        ++line_;
      } else {
        return;
      }
    }
  }

  void end_of_line() {
    skip_space_and_comments(false);
    if (pos_ < text_.size() && text_[pos_] != '\n') {
      fail(line_, std::string("unexpected '") + text_[pos_] + "' after value");
    }
  }

  void expect(char c) {
    if (pos_ >= text_.size() || text_[pos_] != c) {
      fail(line_, std::string("expected '") + c + "'");
    }
    ++pos_;
  }

  std::string bare_key() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_' ||
            text_[pos_] == '-')) {
      ++pos_;
    }
    if (pos_ == start) {
      fail(line_, "expected a key");
    }
    return text_.substr(start, pos_ - start);
  }

  ConfigValue value() {
    if (pos_ >= text_.size() || text_[pos_] == '\n') {
      fail(line_, "missing value");
    }
    const char c = text_[pos_];
    ConfigValue out;
    out.line = line_;
    if (c == '"') {
      out.v = string();
    } else if (c == '[') {
      ++pos_;
      ConfigValue::Array arr;
      while (true) {
        skip_space_and_comments(true);
        if (pos_ < text_.size() && text_[pos_] == ']') {
          ++pos_;
          break;
        }
        arr.push_back(value());
        skip_space_and_comments(true);
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        skip_space_and_comments(true);
        expect(']');
        break;
      }
      out.v = std::move(arr);
    } else if (text_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      out.v = true;
    } else if (text_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      out.v = false;
    } else {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
              text_[pos_] == '+' || text_[pos_] == '-' || text_[pos_] == '_')) {
        ++pos_;
      }
      std::string lit = text_.substr(start, pos_ - start);
      std::erase(lit, '_');
      if (!lit.empty() && lit.front() == '+') {
        lit.erase(0, 1);
      }
      double x = 0.0;
      const auto [p, ec] = std::from_chars(lit.data(), lit.data() + lit.size(), x);
      if (lit.empty() || ec != std::errc() || p != lit.data() + lit.size()) {
        fail(line_, "invalid value '" + text_.substr(start, pos_ - start) + "'");
      }
      out.v = x;
      out.raw = lit;
    }
    return out;
  }

  std::string string() {
    expect('"');
    std::string s;
    while (true) {
      if (pos_ >= text_.size() || text_[pos_] == '\n') {
        fail(line_, "unterminated string");
      }
      const char c = text_[pos_++];
      if (c == '"') {
        return s;
      }
      if (c == '\\') {
        if (pos_ >= text_.size()) {
          fail(line_, "unterminated string");
        }
        const char e = text_[pos_++];
        switch (e) {
        case 'n': s += '\n'; break;
        case 't': s += '\t'; break;
        case '"': s += '"'; break;
        case '\\': s += '\\'; break;
        default: fail(line_, std::string("unknown escape \\") + e);
        }
      } else {
        s += c;
      }
    }
  }

  std::string text_;
  std::string source_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::set<std::string> seen_sections_;
};

class Binder {
public:
  Binder(std::map<std::string, ConfigValue> values, std::string source)
      : values_(std::move(values)), source_(std::move(source)) {}

  [[noreturn]] void fail(const ConfigValue &v, const std::string &key,
                         const std::string &msg) const {
    throw ConfigError(source_ + ":" + std::to_string(v.line) + ": " + key + ": " + msg);
  }

  const ConfigValue *take(const std::string &key) {
    auto it = values_.find(key);
    if (it == values_.end()) {
      return nullptr;
    }
    used_.insert(key);
    return &it->second;
  }

  double number(const ConfigValue &v, const std::string &key) const {
    if (const auto *d = std::get_if<double>(&v.v)) {
      return *d;
    }
    fail(v, key, "expected a number");
  }

  long long integer(const ConfigValue &v, const std::string &key, long long lo) const {
    const double x = number(v, key);
    if (x != std::floor(x) || std::abs(x) > 9.0e15) {
      fail(v, key, "expected an integer");
    }
    if (x < static_cast<double>(lo)) {
      fail(v, key, "must be >= " + std::to_string(lo));
    }
    return static_cast<long long>(x);
  }

  void set(const std::string &key, double &out) {
    if (const auto *v = take(key)) {
      out = number(*v, key);
    }
  }
  void set(const std::string &key, int &out, long long lo) {
    if (const auto *v = take(key)) {
      out = static_cast<int>(integer(*v, key, lo));
    }
  }
  void set(const std::string &key, std::size_t &out, long long lo) {
    if (const auto *v = take(key)) {
      out = static_cast<std::size_t>(integer(*v, key, lo));
    }
  }
  void set(const std::string &key, bool &out) {
    if (const auto *v = take(key)) {
      if (const auto *b = std::get_if<bool>(&v->v)) {
        out = *b;
      } else {
        fail(*v, key, "expected true or false");
      }
    }
  }
  const std::string *string(const std::string &key, const ConfigValue **where = nullptr) {
    if (const auto *v = take(key)) {
      if (where) {
        *where = v;
      }
      if (const auto *s = std::get_if<std::string>(&v->v)) {
        return s;
      }
      fail(*v, key, "expected a string");
    }
    return nullptr;
  }
  const ConfigValue::Array *array(const std::string &key, const ConfigValue **where) {
    if (const auto *v = take(key)) {
      *where = v;
      if (const auto *a = std::get_if<ConfigValue::Array>(&v->v)) {
        return a;
      }
      fail(*v, key, "expected an array");
    }
    return nullptr;
  }
  void set(const std::string &key, std::vector<double> &out) {
    const ConfigValue *w = nullptr;
    if (const auto *a = array(key, &w)) {
      out.clear();
      for (const auto &x : *a) {
        out.push_back(number(x, key));
      }
    }
  }
  void set(const std::string &key, std::vector<int> &out, long long lo) {
    const ConfigValue *w = nullptr;
    if (const auto *a = array(key, &w)) {
      out.clear();
      for (const auto &x : *a) {
        out.push_back(static_cast<int>(integer(x, key, lo)));
      }
    }
  }

  void reject_unused() const {
    for (const auto &[k, v] : values_) {
      if (!used_.contains(k)) {
        fail(v, k, "unknown key");
      }
    }
  }

  const std::string &source() const { return source_; }

private:
  std::map<std::string, ConfigValue> values_;
  std::set<std::string> used_;
  std::string source_;
};

} // namespace detail

/// Parses a config; ConfigError messages carry "source:line:".
inline RunConfig parse_config(const std::string &text, const std::string &source = "config") {
  detail::ConfigParser parser(text, source);
  detail::Binder b(parser.parse(), source);
  RunConfig rc;
  rc.text = text;

  const ConfigValue *where = nullptr;
  const std::string *name = b.string("experiment.name", &where);
  if (name == nullptr) {
    throw ConfigError(source + ": missing [experiment] name");
  }
  if (!is_experiment(*name)) {
    b.fail(*where, "experiment.name", "unknown experiment '" + *name + "'");
  }
  ExperimentPlan &p = rc.plan;
  p = default_plan(*name);

  if (const auto *v = b.take("seed")) {
    const std::string &r = v->raw;
    const bool digits = !r.empty() && std::all_of(r.begin(), r.end(), [](char c) {
      return std::isdigit(static_cast<unsigned char>(c)) != 0;
    });
    std::uint64_t seed = 0;
    const auto [ptr, ec] = std::from_chars(r.data(), r.data() + r.size(), seed);
    if (!digits || ec != std::errc() || ptr != r.data() + r.size()) {
      b.fail(*v, "seed", "expected an unsigned 64-bit integer");
    }
    p.seed = seed;
  }

  b.set("simulation.kappa", p.base.kappa);
  b.set("simulation.nu", p.base.nu);
  b.set("simulation.alpha", p.base.alpha);
  b.set("simulation.grid", p.base.grid, 4);
  b.set("simulation.dt", p.base.dt);
  b.set("simulation.T", p.base.horizon);
  b.set("simulation.dealias", p.base.dealias);
  b.set("simulation.courant", p.courant);
  if (const auto *s = b.string("simulation.scheme", &where)) {
    try {
      p.base.scheme = parse_scheme(*s);
    } catch (const ConfigError &e) {
      b.fail(*where, "simulation.scheme", e.what());
    }
  }

  if (const auto *s = b.string("noise.family", &where)) {
    try {
      p.noise.family = parse_theta_family(*s);
    } catch (const std::invalid_argument &e) {
      b.fail(*where, "noise.family", e.what());
    }
  }
  b.set("noise.a", p.noise.a);
  b.set("noise.N", p.noise.n, 1);
  if (const auto *modes = b.array("noise.modes", &where)) {
    p.noise.entries.clear();
    for (const auto &m : *modes) {
      const auto *t = std::get_if<ConfigValue::Array>(&m.v);
      if (t == nullptr || t->size() != 3) {
        b.fail(m, "noise.modes", "each mode is [k1, k2, theta]");
      }
      ThetaEntry e;
      e.k = {static_cast<int>(b.integer((*t)[0], "noise.modes", -1000000)),
             static_cast<int>(b.integer((*t)[1], "noise.modes", -1000000))};
      e.theta = b.number((*t)[2], "noise.modes");
      p.noise.entries.push_back(e);
    }
    if (p.noise.family != ThetaFamily::explicit_list) {
      b.fail(*where, "noise.modes", "explicit modes need family = \"explicit\"");
    }
  } else if (p.noise.family == ThetaFamily::explicit_list) {
    throw ConfigError(source + ": family \"explicit\" needs noise.modes");
  }

  b.set("experiment.alphas", p.alphas);
  b.set("experiment.nus", p.nus);
  b.set("experiment.Ns", p.ns, 1);
  b.set("experiment.a_values", p.a_values);
  b.set("experiment.replicas", p.replicas, 1);
  b.set("experiment.record_every", p.record_every, 1);
  b.set("experiment.sobolev", p.sobolev);
  if (const auto *s = b.string("experiment.initial", &where)) {
    try {
      p.initial = parse_initial_data(*s);
    } catch (const std::invalid_argument &e) {
      b.fail(*where, "experiment.initial", e.what());
    }
  }
  b.set("experiment.radius", p.radius);
  {
    const ConfigValue *fw = b.take("experiment.fit_window");
    if (fw != nullptr) {
      const auto *a = std::get_if<ConfigValue::Array>(&fw->v);
      if (a == nullptr || a->size() != 2) {
        b.fail(*fw, "experiment.fit_window", "expected [t0, t1]");
      }
      p.fit_window = std::pair{b.number((*a)[0], "experiment.fit_window"),
                               b.number((*a)[1], "experiment.fit_window")};
    }
  }
  b.set("experiment.deltas", p.deltas);
  b.set("experiment.p", p.p);
  b.set("experiment.samples", p.samples, 2);
  b.set("experiment.paths", p.paths, 2);
  b.set("experiment.moment_samples", p.moment_samples, 2);
  b.set("experiment.taus", p.taus);
  {
    std::size_t jobs = p.jobs;
    b.set("experiment.jobs", jobs, 0);
    p.jobs = static_cast<unsigned>(jobs);
  }

  if (const auto *s = b.string("io.output_dir")) {
    rc.output_dir = *s;
  }
  if (const auto *fm = b.array("io.formats", &where)) {
    rc.formats = {false, false};
    for (const auto &f : *fm) {
      const auto *s = std::get_if<std::string>(&f.v);
      if (s != nullptr && *s == "csv") {
        rc.formats.csv = true;
      } else if (s != nullptr && *s == "json") {
        rc.formats.json = true;
      } else {
        b.fail(f, "io.formats", "formats are \"csv\" and \"json\"");
      }
    }
  }
  b.reject_unused();
  return rc;
}

inline RunConfig load_config(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw ConfigError("cannot read config file '" + path + "'");
  }
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path);
}

/// Key reference for --help.
inline std::string config_reference() {
  return R"(Config keys (unset keys take the preset defaults):
  seed                         master seed (default 1)
  [simulation]
    kappa, nu, alpha           base parameters; nu/alpha are swept per preset
    grid                       M, even and 7-smooth
    dt                         configured step; must satisfy dt <= 0.1/alpha
                               (default 1e-3, 5e-4 for theorem1/theorem2)
    T                          horizon
    scheme                     "IF-RK2" (default) or "IF-Euler"
    dealias                    2/3 rule (default true)
    courant                    step clamp factor on the CFL bound (default 0.4)
  [noise]
    family                     "lowpass" (default), "shell" or "explicit"
    a, N                       family parameters (default a = 0.5)
    modes                      [[k1, k2, theta], ...] for family "explicit"
  [experiment]
    name                       ou-covariance | limit-decay | theorem1 | theorem2 | lemma31
    alphas, nus, Ns, a_values  sweep lists
    replicas                   Monte Carlo replicas (>= 8)
    record_every               record cadence in steps (default 10)
    sobolev                    s-list for H^-s distances (default [1])
    initial                    "single-mode", "random-12" or "bar"
    radius                     scale factor of the initial datum (default 1)
    fit_window                 [t0, t1] for decay fits (default [0.2 T, 0.8 T])
    deltas, p                  lemma31 increments and exponent (default p = 2)
    samples, paths             ou-covariance draws (default 1e5) and paths (1e4)
    moment_samples, taus       draws of b (default 4000) and Sobolev indices
    jobs                       worker threads (0: all cores)
  [io]
    output_dir                 results go to <output_dir>/<experiment>
    formats                    ["csv", "json"]
)";
}

} // namespace oumix
