#pragma once

// Result files: one CSV per table (17 significant digits), report.json and
// manifest.json. Everything is written under a single output directory.

#include "oumix/experiments.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#ifndef OUMIX_VERSION
#define OUMIX_VERSION "unknown"
#endif

namespace oumix {

inline constexpr std::string_view version = OUMIX_VERSION;

inline std::string format_number(double x) {
  if (std::isnan(x)) {
    return "nan";
  }
  if (std::isinf(x)) {
    return x > 0 ? "inf" : "-inf";
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos) {
    return s;
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') {
      out += '"';
    }
    out += c;
  }
  return out + "\"";
}

inline std::string cell_text(const Cell &c) {
  if (const auto *i = std::get_if<std::int64_t>(&c)) {
    return std::to_string(*i);
  }
  if (const auto *d = std::get_if<double>(&c)) {
    return format_number(*d);
  }
  return csv_field(std::get<std::string>(c));
}

inline nlohmann::json number(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(format_number(x));
}

} // namespace detail

inline std::string to_csv(const Table &t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    out += (i ? "," : "") + detail::csv_field(t.columns[i]);
  }
  out += '\n';
  for (const auto &row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += (i ? "," : "") + detail::cell_text(row[i]);
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const ThetaSpec &th) {
  nlohmann::json modes = nlohmann::json::array();
  for (const auto &e : th.support()) {
    modes.push_back({e.k.k1, e.k.k2, e.theta});
  }
  return {{"family", std::string(to_string(th.family()))},
          {"a", th.a()},
          {"N", th.n()},
          {"normalizer", th.normalizer()},
          {"linf", th.linf()},
          {"support", modes}};
}

inline nlohmann::json to_json(const SimConfig &c) {
  return {{"kappa", c.kappa},   {"nu", c.nu},
          {"alpha", c.alpha},   {"grid", c.grid},
          {"dt", c.dt},         {"T", c.horizon},
          {"seed", c.seed},     {"scheme", std::string(to_string(c.scheme))},
          {"dealias", c.dealias}, {"theta", to_json(c.theta)}};
}

inline nlohmann::json to_json(const ExperimentPlan &p) {
  nlohmann::json noise = {{"family", std::string(to_string(p.noise.family))},
                          {"a", p.noise.a},
                          {"N", p.noise.n}};
  if (!p.noise.entries.empty()) {
    nlohmann::json modes = nlohmann::json::array();
    for (const auto &e : p.noise.entries) {
      modes.push_back({e.k.k1, e.k.k2, e.theta});
    }
    noise["modes"] = modes;
  }
  nlohmann::json j = {
      {"name", p.name},
      {"seed", p.seed},
      {"simulation",
       {{"kappa", p.base.kappa},
        {"nu", p.base.nu},
        {"alpha", p.base.alpha},
        {"grid", p.base.grid},
        {"dt", p.base.dt},
        {"T", p.base.horizon},
        {"scheme", std::string(to_string(p.base.scheme))},
        {"dealias", p.base.dealias},
        {"courant", p.courant}}},
      {"noise", noise},
      {"experiment",
       {{"alphas", p.alphas},
        {"nus", p.nus},
        {"Ns", p.ns},
        {"a_values", p.a_values},
        {"replicas", p.replicas},
        {"record_every", p.record_every},
        {"sobolev", p.sobolev},
        {"initial", std::string(to_string(p.initial))},
        {"radius", p.radius},
        {"deltas", p.deltas},
        {"p", p.p},
        {"samples", p.samples},
        {"paths", p.paths},
        {"moment_samples", p.moment_samples},
        {"taus", p.taus}}}};
  if (p.fit_window) {
    j["experiment"]["fit_window"] = {p.fit_window->first, p.fit_window->second};
  }
  return j;
}

inline nlohmann::json to_json(const ExperimentReport &r) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto &c : r.checks) {
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  nlohmann::json points = nlohmann::json::array();
  for (const auto &p : r.points) {
    points.push_back({{"label", p.label},
                      {"config", to_json(p.config)},
                      {"limit_stride", p.limit_stride},
                      {"replicas", p.replicas}});
  }
  nlohmann::json tables = nlohmann::json::array();
  for (const auto &t : r.tables) {
    tables.push_back({{"name", t.name}, {"file", t.name + ".csv"}, {"rows", t.rows.size()}});
  }
  return {{"experiment", r.experiment},
          {"seed", r.seed},
          {"passed", r.passed()},
          {"checks", checks},
          {"notices", r.notices},
          {"max_step_growth", detail::number(r.max_step_growth)},
          {"points", points},
          {"tables", tables},
          {"version", std::string(version)}};
}

/// Config echo, seed and version: enough to re-run the experiment.
inline nlohmann::json manifest(const ExperimentPlan &plan, const std::string &config_text) {
  return {{"version", std::string(version)},
          {"experiment", plan.name},
          {"seed", plan.seed},
          {"plan", to_json(plan)},
          {"config_text", config_text}};
}

struct OutputFormats {
  bool csv = true;
  bool json = true;
};

/// Writes the report into `dir` (created if needed); returns the files written.
inline std::vector<std::filesystem::path> write_outputs(const ExperimentReport &rep,
                                                        const ExperimentPlan &plan,
                                                        const std::string &config_text,
                                                        const std::filesystem::path &dir,
                                                        OutputFormats formats = {}) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  auto put = [&](const std::string &name, const std::string &text) {
    const auto path = dir / name;
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) {
      throw std::runtime_error("cannot write " + path.string());
    }
    files.push_back(path);
  };
  if (formats.csv) {
    for (const auto &t : rep.tables) {
      put(t.name + ".csv", to_csv(t));
    }
  }
  if (formats.json) {
    put("report.json", to_json(rep).dump(2) + "\n");
    put("manifest.json", manifest(plan, config_text).dump(2) + "\n");
  }
  return files;
}

} // namespace oumix
