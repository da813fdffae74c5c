// oumix: run experiment presets from config files.

#include "oumix/config.hpp"
#include "oumix/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

namespace {

constexpr int exit_fail = 1;
constexpr int exit_config = 2;

struct Overrides {
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  std::size_t replicas = 0;
  std::string output;
  bool has_seed = false, has_jobs = false, has_replicas = false;
};

void apply(oumix::RunConfig &rc, const Overrides &o) {
  if (o.has_seed) {
    rc.plan.seed = o.seed;
  }
  if (o.has_jobs) {
    rc.plan.jobs = o.jobs;
  }
  if (o.has_replicas) {
    rc.plan.replicas = o.replicas;
  }
}

std::filesystem::path output_root(const oumix::RunConfig &rc, const Overrides &o) {
  if (!o.output.empty()) {
    return o.output;
  }
  if (!rc.output_dir.empty()) {
    return rc.output_dir;
  }
  if (const char *env = std::getenv("OUMIX_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "oumix-out";
}

void print_points(const std::vector<oumix::PointInfo> &points) {
  for (const auto &p : points) {
    std::printf("  %-44s dt=%-12.6g steps=%-8zu limit_stride=%zu\n", p.label.c_str(),
                p.config.dt, p.config.steps(), p.limit_stride);
  }
}

int run(const std::string &path, const Overrides &o) {
  oumix::RunConfig rc = oumix::load_config(path);
  apply(rc, o);
  const auto points = oumix::validate_plan(rc.plan);
  const auto dir = output_root(rc, o) / rc.plan.name;
  std::printf("oumix %s: %s, seed %llu", std::string(oumix::version).c_str(),
              rc.plan.name.c_str(), static_cast<unsigned long long>(rc.plan.seed));
  if (!points.empty()) {
    std::printf(", %zu sweep points", points.size());
  }
  std::printf("\n");
  std::fflush(stdout);

  const oumix::ExperimentReport rep = oumix::run_experiment(rc.plan);
  const auto files = oumix::write_outputs(rep, rc.plan, rc.text, dir, rc.formats);

  std::size_t passed = 0;
  for (const auto &c : rep.checks) {
    passed += c.passed ? 1 : 0;
    std::printf("%s  %s\n      %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                c.detail.c_str());
  }
  for (const auto &n : rep.notices) {
    std::printf("note  %s\n", n.c_str());
  }
  std::printf("%s: %zu/%zu checks passed; %zu files in %s\n", rep.passed() ? "PASS" : "FAIL",
              passed, rep.checks.size(), files.size(), dir.string().c_str());
  return rep.passed() ? 0 : exit_fail;
}

int validate(const std::string &path, const Overrides &o) {
  oumix::RunConfig rc = oumix::load_config(path);
  apply(rc, o);
  const auto points = oumix::validate_plan(rc.plan);
  std::printf("%s: valid %s config", path.c_str(), rc.plan.name.c_str());
  if (points.empty()) {
    std::printf(", no SPDE runs\n");
  } else {
    std::printf(", %zu sweep points\n", points.size());
  }
  print_points(points);
  return 0;
}

void list_experiments() {
  for (const auto &e : oumix::experiment_registry()) {
    std::printf("%-14s %s\n%-14s   %s\n", std::string(e.name).c_str(),
                std::string(e.anchor).c_str(), "", std::string(e.summary).c_str());
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Transport-noise Navier-Stokes experiments on the torus"};
  app.footer("\n" + oumix::config_reference() +
             "\nEnvironment:\n  OUMIX_OUTPUT_DIR             output root when neither --output\n"
             "                               nor io.output_dir is set (default ./oumix-out)\n"
             "\nExit codes: 0 all checks pass, 1 a check failed or a run diverged,\n"
             "            2 invalid config or arguments\n");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(oumix::version));

  Overrides o;
  std::string config;
  auto add_common = [&](CLI::App *sub) {
    sub->add_option("-c,--config", config, "config file")->required();
    sub->add_option("--seed", o.seed, "override the master seed");
    sub->add_option("--jobs", o.jobs, "worker threads (0: all cores)");
    sub->add_option("--replicas", o.replicas, "override the replica count");
  };
  auto *run_cmd = app.add_subcommand("run", "run the experiment named in a config file");
  add_common(run_cmd);
  run_cmd->add_option("-o,--output", o.output, "output root directory");
  auto *val_cmd = app.add_subcommand("validate", "check a config and print the sweep points");
  add_common(val_cmd);
  auto *list_cmd = app.add_subcommand("list-experiments", "list the experiment presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_config;
  }
  for (auto *sub : {run_cmd, val_cmd}) {
    o.has_seed = o.has_seed || sub->count("--seed") > 0;
    o.has_jobs = o.has_jobs || sub->count("--jobs") > 0;
    o.has_replicas = o.has_replicas || sub->count("--replicas") > 0;
  }

  try {
    if (*list_cmd) {
      list_experiments();
      return 0;
    }
    if (*val_cmd) {
      return validate(config, o);
    }
    return run(config, o);
  } catch (const oumix::ConfigError &e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return exit_config;
  } catch (const oumix::ExperimentFailure &e) {
    std::fprintf(stderr, "run failed: %s\n", e.what());
    return exit_fail;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_fail;
  }
}
