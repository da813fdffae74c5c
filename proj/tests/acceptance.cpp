// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [criterion numbers...]
//
// With no arguments all eleven criteria run. Experiment outputs are written
// under ./acceptance_out.

#include "oracles.hpp"

#include "oumix/config.hpp"
#include "oumix/io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <vector>

using namespace oumix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

double max_growth = -std::numeric_limits<double>::infinity();
std::size_t spde_runs = 0;

void note_growth(double g, std::size_t runs = 1) {
  max_growth = std::max(max_growth, g);
  spde_runs += runs;
}

std::size_t replica_runs(const ExperimentReport &r) {
  std::size_t n = 0;
  for (const auto &p : r.points) {
    n += p.replicas;
  }
  return n;
}

RunConfig shipped(const char *file) {
  return load_config((std::filesystem::path(OUMIX_SOURCE_DIR) / "configs" / file).string());
}

ExperimentReport run_shipped(const char *file) {
  const RunConfig rc = shipped(file);
  ExperimentReport rep = run_experiment(rc.plan);
  write_outputs(rep, rc.plan, rc.text, std::filesystem::path("acceptance_out") / rc.plan.name);
  return rep;
}

/// All named checks pass; failing ones are listed.
Outcome checks_pass(const ExperimentReport &rep, const std::function<bool(const Check &)> &pick) {
  Outcome o{true, ""};
  std::size_t n = 0;
  for (const auto &c : rep.checks) {
    if (!pick(c)) {
      continue;
    }
    ++n;
    if (!c.passed) {
      o.pass = false;
      o.detail += "[" + c.name + ": " + c.detail + "] ";
    }
  }
  if (n == 0) {
    return {false, "no checks selected"};
  }
  if (o.pass) {
    o.detail = std::to_string(n) + " checks pass";
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome c1_spectral() {
  double adv = 0.0, bs = 0.0, rt = 0.0;
  const int m = 16, r = dealias_cutoff(m);
  for (unsigned seed = 0; seed < 5; ++seed) {
    const auto xi = testing::random_field(m, r, 100 + seed);
    const VelocityField u{testing::random_field(m, r, 200 + seed),
                          testing::random_field(m, r, 300 + seed)};
    for (const VelocityField &v : {u, biot_savart(testing::random_field(m, r, 400 + seed))}) {
      auto expect = convolution_oracle(v, xi);
      expect.dealias();
      expect.zero_mean();
      adv = std::max(adv, testing::max_coeff_diff(advect(v, xi, true), expect));
    }
    bs = std::max(bs, testing::max_coeff_diff(curl(biot_savart(xi)), xi));
    PhysicalField f(m);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> g;
    for (double &x : f.values()) {
      x = g(gen);
    }
    const auto back = inverse(forward(f));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < f.values().size(); ++i) {
      num = std::max(num, std::abs(back.values()[i] - f.values()[i]));
      den = std::max(den, std::abs(f.values()[i]));
    }
    rt = std::max(rt, num / den);
  }
  return {adv <= 1e-10 && bs <= 1e-12 && rt <= 1e-13,
          "advect vs oracle " + fmt(adv) + " (1e-10), curl(biot_savart) " + fmt(bs) +
              " (1e-12), round trip " + fmt(rt) + " (1e-13)"};
}

Outcome c2_ou_laws() {
  const double alpha = 100.0;
  const auto v = ou_stationary_variance(alpha, 100000, 2024);
  const double vrel = std::abs(v.variance / (0.5 * alpha) - 1.0);
  const auto ac = ou_autocovariance(alpha, 0.25 / alpha, 12, 800, 10000, 2025);
  double worst = 0.0;
  for (std::size_t l = 0; l < ac.lags.size(); ++l) {
    const double exact = 0.5 * alpha * std::exp(-alpha * ac.lags[l]);
    worst = std::max(worst, std::abs(ac.covariance[l] / exact - 1.0));
  }
  return {vrel <= 0.02 && worst <= 0.05,
          "variance rel err " + fmt(vrel) + " (0.02, 1e5 samples), autocovariance max rel err " +
              fmt(worst) + " on alpha t in [0,3] (0.05, 1e4 paths)"};
}

Outcome c3_isotropy() {
  double worst = 0.0;
  std::size_t cases = 0;
  auto run = [&](ThetaFamily f, double a, int n) {
    const auto th = make_theta(f, a, n, 128);
    const auto s = isotropy_identity_check(th);
    worst = std::max({worst, std::abs(s[0][0] - 0.5), std::abs(s[1][1] - 0.5), std::abs(s[0][1]),
                      std::abs(s[1][0])});
    ++cases;
  };
  for (double a : {0.3, 0.5, 0.9}) {
    for (int n : {1, 4, 8, 16}) {
      run(ThetaFamily::lowpass, a, n);
    }
  }
  for (double a : {0.5, 1.0, 2.0}) {
    for (int n : {2, 4, 8}) {
      run(ThetaFamily::shell, a, n);
    }
  }
  return {worst <= 1e-12, std::to_string(cases) + " theta choices, max deviation " + fmt(worst)};
}

Outcome c4_moments() {
  struct P {
    double nu, alpha, tau;
    ThetaSpec th;
  };
  const std::vector<P> points = {
      {1.0, 100.0, 1.0, make_theta(ThetaFamily::lowpass, 0.5, 1, 16)},
      {4.0, 50.0, 0.5, make_theta(ThetaFamily::lowpass, 0.3, 4, 32)},
      {0.5, 200.0, 1.5, make_theta(ThetaFamily::shell, 1.0, 2, 32)},
  };
  Outcome o{true, ""};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto &p = points[i];
    const auto r = b_moment_check(p.th, p.alpha, p.nu, p.tau, 2.0, 10000, 500 + i);
    const double z = (r.mean - r.exact) / r.stderr_;
    o.pass = o.pass && std::abs(z) <= 3.0;
    o.detail += "(nu=" + fmt(p.nu) + ",alpha=" + fmt(p.alpha) + "," +
                std::string(to_string(p.th.family())) + " N=" + std::to_string(p.th.n()) +
                ",tau=" + fmt(p.tau) + "): z=" + fmt(z) + "  ";
  }
  o.detail += "(|z| <= 3)";
  return o;
}

Outcome c5_energy() {
  const int m = 32;
  const auto xi0 = make_initial(InitialData::random12, m);
  const std::vector<int> refine = {4, 2, 1};
  constexpr std::size_t replicas = 4;
  Outcome o{true, ""};
  for (auto [scheme, order] : {std::pair{Scheme::if_euler, 1.0}, std::pair{Scheme::if_rk2, 2.0}}) {
    std::vector<double> mean(refine.size(), 0.0);
    for (std::size_t r = 0; r < replicas; ++r) {
      for (std::size_t l = 0; l < refine.size(); ++l) {
        SimConfig cfg;
        cfg.grid = m;
        cfg.kappa = 0.05;
        cfg.nu = 1.0;
        cfg.alpha = 100.0;
        cfg.theta = make_theta(ThetaFamily::lowpass, 0.5, 2, m);
        cfg.horizon = 0.2;
        cfg.dt = 5e-5 * refine[l];
        cfg.seed = 5;
        cfg.scheme = scheme;
        RunOptions opts;
        opts.record_every = 50;
        opts.ou_refine = refine[l];
        opts.replica = r;
        const RunRecord rec = run_coupled(xi0, cfg, opts);
        note_growth(rec.max_step_growth);
        mean[l] += energy_balance_residual(rec) / replicas;
      }
    }
    o.detail += std::string(to_string(scheme)) + " residuals";
    for (double x : mean) {
      o.detail += " " + fmt(x);
    }
    o.detail += ", ratios";
    for (std::size_t l = 1; l < mean.size(); ++l) {
      const double ratio = mean[l - 1] / mean[l];
      o.pass = o.pass && std::abs(std::log2(ratio) - order) <= 0.3;
      o.detail += " " + fmt(ratio);
    }
    o.detail += " (expect " + fmt(std::exp2(order)) + ");  ";
  }
  o.detail += "dt = 2e-4, 1e-4, 5e-5, mean of 4 replicas, |log2 ratio - order| <= 0.3";
  return o;
}

Outcome c6_limit_decay() {
  const auto rep = run_shipped("limit_decay.toml");
  return checks_pass(rep, [](const Check &) { return true; });
}

Outcome c8_lemma31() {
  const auto rep = run_shipped("lemma31.toml");
  note_growth(rep.max_step_growth, replica_runs(rep));
  auto o = checks_pass(rep, [](const Check &c) { return c.name != "energy monotone"; });
  if (const auto *t = rep.table("lemma31_slopes")) {
    for (const auto &row : t->rows) {
      o.detail += "; slope " + fmt(std::get<double>(row[2]));
    }
  }
  if (const auto *t = rep.table("lemma31_scaling")) {
    for (const auto &row : t->rows) {
      o.detail += "; ratio " + fmt(std::get<double>(row[4])) + "+-" +
                  fmt(std::get<double>(row[5]));
    }
  }
  return o;
}

Outcome c9_theorem1() {
  const auto rep = run_shipped("theorem1.toml");
  note_growth(rep.max_step_growth, replica_runs(rep));
  auto o = checks_pass(rep, [](const Check &c) {
    return c.name.starts_with("alpha-sweep nu=4") || c.name.starts_with("N-sweep nu=4");
  });
  if (const auto *t = rep.table("theorem1")) {
    for (const auto &row : t->rows) {
      if (std::get<double>(row[1]) == 4.0) {
        o.detail += "; " + std::get<std::string>(row[0]) + " alpha=" +
                    fmt(std::get<double>(row[2])) + " N=" +
                    std::to_string(std::get<std::int64_t>(row[3])) + ": " +
                    fmt(std::get<double>(row[9])) + "+-" + fmt(std::get<double>(row[10]));
      }
    }
  }
  return o;
}

Outcome c10_theorem2() {
  const auto rep = run_shipped("theorem2.toml");
  note_growth(rep.max_step_growth, replica_runs(rep));
  auto o = checks_pass(rep, [](const Check &c) {
    return c.name.starts_with("rate enhancement") || c.name == "contraction ratios";
  });
  for (const auto &c : rep.checks) {
    if (c.name.starts_with("rate enhancement") || c.name == "baseline kappa-only rate") {
      o.detail += "; " + c.name + ": " + c.detail;
    }
  }
  return o;
}

Outcome c11_determinism() {
  Outcome o{true, ""};
  for (const char *name : {"ou-covariance", "limit-decay", "theorem1", "theorem2", "lemma31"}) {
    ExperimentPlan p = default_plan(name);
    if (p.name == "ou-covariance") {
      p.samples = 2000;
      p.paths = 200;
      p.moment_samples = 200;
    } else if (p.name == "limit-decay") {
      p.base.grid = 32;
      p.base.horizon = 0.2;
    } else {
      p.base.grid = 16;
      p.base.dt = 5e-4;
      p.replicas = 8;
      p.base.horizon = p.name == "theorem2" ? 2.0 : 0.1;
      p.record_every = 10;
      p.noise.n = 1;
      p.ns = {1, 2};
      if (p.name == "lemma31") {
        p.base.horizon = 0.1;
        p.record_every = 2;
        p.deltas = {0.001, 0.01};
      }
      if (p.name == "theorem2") {
        p.nus = {0.0, 1.0};
        p.alphas = {50.0};
      }
      if (p.name == "theorem1") {
        p.base.dt = 1e-4;
      }
    }
    p.seed = 7;
    p.jobs = 1;
    const auto a = run_experiment(p);
    p.jobs = 0;
    const auto b = run_experiment(p);
    if (p.name != "ou-covariance" && p.name != "limit-decay") {
      note_growth(std::max(a.max_step_growth, b.max_step_growth),
                  replica_runs(a) + replica_runs(b));
    }
    bool same = a.tables.size() == b.tables.size();
    std::size_t bytes = 0;
    for (std::size_t i = 0; same && i < a.tables.size(); ++i) {
      const auto ca = to_csv(a.tables[i]), cb = to_csv(b.tables[i]);
      same = ca == cb;
      bytes += ca.size();
    }
    o.pass = o.pass && same;
    o.detail += std::string(name) + (same ? " identical (" : " DIFFERS (") +
                std::to_string(bytes) + " bytes); ";
  }
  return o;
}

Outcome c7_monotone() {
  return {spde_runs > 0 && max_growth <= 1e-10,
          "max ||xi_{n+1}||/||xi_n|| - 1 = " + fmt(max_growth) + " over " +
              std::to_string(spde_runs) + " SPDE runs (1e-10)"};
}

} // namespace

int main(int argc, char **argv) {
  std::set<int> want;
  for (int i = 1; i < argc; ++i) {
    want.insert(std::atoi(argv[i]));
  }
  struct Criterion {
    int id;
    const char *title;
    std::function<Outcome()> run;
  };
  // 7 aggregates the SPDE runs of the others, so it runs last but one.
  const std::vector<Criterion> criteria = {
      {1, "spectral oracles", c1_spectral},
      {2, "OU laws", c2_ou_laws},
      {3, "isotropy identity", c3_isotropy},
      {4, "noise moments", c4_moments},
      {5, "energy equality convergence", c5_energy},
      {6, "limit-equation decay", c6_limit_decay},
      {8, "increment trends", c8_lemma31},
      {9, "mixing trends", c9_theorem1},
      {10, "decay enhancement", c10_theorem2},
      {11, "determinism", c11_determinism},
      {7, "pathwise energy monotonicity", c7_monotone},
  };
  std::vector<std::pair<int, std::string>> lines;
  bool all = true;
  for (const auto &c : criteria) {
    if (!want.empty() && !want.contains(c.id)) {
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char head[96];
    std::snprintf(head, sizeof head, "criterion %2d %s  %s (%.1f s): ", c.id,
                  o.pass ? "PASS" : "FAIL", c.title, secs);
    const std::string line = head + o.detail;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    lines.emplace_back(c.id, line);
    all = all && o.pass;
  }
  std::sort(lines.begin(), lines.end());
  std::printf("\nsummary\n");
  for (const auto &[id, line] : lines) {
    std::printf("%.*s\n", static_cast<int>(line.find(':')), line.c_str());
  }
  return all ? 0 : 1;
}
