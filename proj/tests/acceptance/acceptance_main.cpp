// Acceptance harness: one pass/fail line per criterion. Criteria can be
// selected by number so long runs can be split; default runs all.
//
//   acceptance [--scenarios DIR] [criterion numbers...]

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kinoplan/artifacts.hpp"
#include "kinoplan/batch.hpp"
#include "kinoplan/rollout.hpp"
#include "kinoplan/tpbvp.hpp"
#include "kinoplan/verify.hpp"

using namespace kinoplan;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_scenario_dir = "scenarios";
int g_failures = 0;

struct Criterion {
  int number;
  std::string title;
  std::function<bool(std::string&)> run;
};

void report(int number, const std::string& title, bool pass, double seconds,
            const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n", pass ? "PASS" : "FAIL",
              number, title.c_str(), seconds, detail.empty() ? "" : " -- ",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

Scenario load(const std::string& name) {
  return parse_scenario_file(g_scenario_dir + "/" + name);
}

// Runs jobs on two workers; results land in pre-sized slots, so the output
// is schedule independent.
void run_parallel(std::vector<std::function<void()>>& jobs) {
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      jobs[i]();
    }
  };
  std::thread a(worker), b(worker);
  a.join();
  b.join();
}

// ---------------------------------------------------------------------------
// 1. Affine oracle equivalence (double integrator vs direct transcription;
//    closed-form Gramian).
// ---------------------------------------------------------------------------
bool criterion1(std::string& detail) {
  std::vector<verify::CheckResult> checks = verify::suite_oracle();
  bool pass = true;
  std::string parts;
  for (const auto& c : checks) {
    pass = pass && c.pass;
    parts += (parts.empty() ? "" : "; ") + c.name + ": " + c.detail;
  }
  detail = parts;
  return pass;
}

// ---------------------------------------------------------------------------
// 2. Solver collapse on affine systems: 20 random linear instances; costs
//    within 1e-6 relative of the affine solution, SA iterate-2 change
//    < 1e-10.
// ---------------------------------------------------------------------------
bool criterion2(std::string& detail) {
  SplitMix64 rng(4242);
  SolverConfig cfg;
  cfg.dt = 1e-3;
  int collapsed = 0;
  double worst_rel = 0.0, worst_change = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 3);  // 2..4
    const int m = 1 + static_cast<int>(rng.next_u64() % 2);
    Mat A(n, n), B(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = rng.uniform(-0.8, 0.8);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) B(i, j) = rng.uniform(-1.0, 1.0);
    for (int j = 0; j < std::min(n, m); ++j) B(j, j) += 1.5;
    Vec c(n), d(m), x0(n), x1(n);
    for (int i = 0; i < n; ++i) c[i] = rng.uniform(-0.3, 0.3);
    for (int i = 0; i < m; ++i) d[i] = rng.uniform(0.5, 2.0);
    for (int i = 0; i < n; ++i) x0[i] = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < n; ++i) x1[i] = rng.uniform(-1.0, 1.0);

    const LinearSystem sys(A, B, c);
    const CostWeights R = CostWeights::diagonal(d);
    const AffineSeed seed = initial_guess(sys, x0, x1, R, cfg);

    const TpbvpSolution sa = solve_sa(sys, R, x0, x1, cfg, &seed);
    const TpbvpSolution ve = solve_ve(sys, R, x0, x1, cfg, &seed);
    if (!sa.converged || !ve.converged) continue;
    const double rel_sa =
        std::abs(sa.segment.cost - seed.segment.cost) / seed.segment.cost;
    const double rel_ve =
        std::abs(ve.segment.cost - seed.segment.cost) / seed.segment.cost;
    const double change2 = sa.history.back().iterate_change;
    worst_rel = std::max({worst_rel, rel_sa, rel_ve});
    worst_change = std::max(worst_change, change2);
    if (rel_sa <= 1e-6 && rel_ve <= 1e-6 && change2 < 1e-10) ++collapsed;
  }
  detail = std::to_string(collapsed) +
           "/20 collapsed; worst rel " + fmt(worst_rel) +
           ", worst iterate-2 change " + fmt(worst_change);
  return collapsed == 20;
}

// ---------------------------------------------------------------------------
// 3. Transversality: 50 random converged pendulum/diff-drive TPBVPs;
//    max|H| <= 1e-3 and H variation <= 1e-3 (10x solver boundary tol).
// ---------------------------------------------------------------------------
bool criterion3(std::string& detail) {
  const Pendulum pend;
  const DiffDrive dd;
  const CostWeights R1 = CostWeights::identity(1);
  const CostWeights R2 = CostWeights::identity(2, 5.0);
  SolverConfig cfg;
  cfg.dt = 1e-3;

  SplitMix64 rng(99);
  int converged = 0, attempts = 0;
  double worst_h = 0.0, worst_var = 0.0;
  while (converged < 50 && attempts < 400) {
    ++attempts;
    const bool use_dd = (attempts % 2) == 0;
    const SystemModel& model = use_dd ? static_cast<const SystemModel&>(dd)
                                      : static_cast<const SystemModel&>(pend);
    const CostWeights& R = use_dd ? R2 : R1;
    Vec x0(model.state_dim()), x1(model.state_dim());
    for (int i = 0; i < model.state_dim(); ++i) {
      x0[i] = rng.uniform(-0.8, 0.8);
      x1[i] = x0[i] + rng.uniform(-1.0, 1.0);
    }
    if ((x1 - x0).norm() < 0.3) continue;  // keep tau off its lower bound
    TpbvpSolution sol;
    try {
      sol = (attempts % 4 < 2) ? solve_sa(model, R, x0, x1, cfg)
                               : solve_ve(model, R, x0, x1, cfg);
    } catch (const std::exception&) {
      continue;
    }
    if (!sol.converged) continue;
    ++converged;
    double hmin = std::numeric_limits<double>::infinity(), hmax = -hmin;
    for (std::size_t i = 0; i < sol.segment.size(); ++i) {
      const double h = hamiltonian(model, sol.segment.states[i],
                                   sol.segment.costates[i], R);
      hmin = std::min(hmin, h);
      hmax = std::max(hmax, h);
      worst_h = std::max(worst_h, std::abs(h));
    }
    worst_var = std::max(worst_var, hmax - hmin);
  }
  detail = std::to_string(converged) + "/50 converged in " +
           std::to_string(attempts) + " draws; max |H| " + fmt(worst_h) +
           ", max variation " + fmt(worst_var);
  return converged == 50 && worst_h <= 1e-3 && worst_var <= 1e-3;
}

// ---------------------------------------------------------------------------
// 4. Derivative suites: influence matrices vs finite differences of the
//    shooting map (pendulum + diff-drive), final-time gradient vs dC/dtau.
// ---------------------------------------------------------------------------
bool criterion4(std::string& detail) {
  std::vector<verify::CheckResult> checks = verify::suite_gradients();

  {
    const DiffDrive dd;
    const CostWeights R = CostWeights::identity(2, 5.0);
    SplitMix64 rng(7);
    double worst = 0.0;
    int tested = 0;
    while (tested < 5) {
      Vec x0(5), x1(5);
      for (int i = 0; i < 5; ++i) {
        x0[i] = rng.uniform(-0.5, 0.5);
        x1[i] = x0[i] + rng.uniform(-0.8, 0.8);
      }
      SolverConfig cfg;
      cfg.dt = 1e-3;
      AffineSeed seed;
      try {
        seed = initial_guess(dd, x0, x1, R, cfg);
      } catch (const std::exception&) {
        continue;
      }
      ++tested;
      const Vec lambda0 = seed.segment.costates.front();
      const double tau = seed.segment.duration;
      const InfluenceTable table =
          integrate_influence(dd, R, x0, lambda0, tau, cfg.dt);
      const Mat& Px = table.P_x.back();

      auto shoot = [&](const Vec& l0) {
        auto rhs = [&](double, const Vec& y, Vec& dy) {
          const Vec x = y.head(5);
          const Vec l = y.tail(5);
          dy.resize(10);
          const Vec u = optimal_control(dd, x, l, R);
          dy.head(5) = eval_f(dd, x, u);
          dy.tail(5) = -f_jacobian_x(dd, x, u).transpose() * l;
        };
        Vec y0(10);
        y0.head(5) = x0;
        y0.tail(5) = l0;
        return integrate(rhs, y0, 0.0, tau, IntegratorConfig{1e-3})
            .back()
            .head(5)
            .eval();
      };
      const double delta = 1e-6;
      for (int j = 0; j < 5; ++j) {
        Vec lp = lambda0, lm = lambda0;
        lp[j] += delta;
        lm[j] -= delta;
        const Vec col = (shoot(lp) - shoot(lm)) / (2.0 * delta);
        worst = std::max(worst, (col - Px.col(j)).norm() /
                                    std::max(1.0, Px.col(j).norm()));
      }
    }
    verify::CheckResult extra;
    extra.name = "influence_matrix_fd_diffdrive";
    extra.pass = worst <= 1e-3;
    extra.detail = "max rel err " + fmt(worst);
    checks.push_back(extra);
  }

  bool pass = true;
  std::string parts;
  for (const auto& c : checks) {
    pass = pass && c.pass;
    parts += (parts.empty() ? "" : "; ") + c.name + ": " + c.detail;
  }
  detail = parts;
  return pass;
}

// ---------------------------------------------------------------------------
// 5. Metric equivalence on 50 random 20-node trees, early-exit on/off.
// ---------------------------------------------------------------------------
bool criterion5(std::string& detail) {
  std::vector<verify::CheckResult> checks = verify::suite_metric(50, true);
  bool pass = true;
  std::string parts;
  for (const auto& c : checks) {
    pass = pass && c.pass;
    parts += (parts.empty() ? "" : "; ") + c.name +
             (c.detail.empty() ? "" : " (" + c.detail + ")");
  }
  detail = parts;
  return pass;
}

// ---------------------------------------------------------------------------
// 6. Open-loop feasibility comparison on the pendulum swing-up: 10 seeds;
//    sa and ve rollout endpoint errors <= 1e-2 (1 + |x_goal|), and smaller
//    than the linearized baseline's on >= 9 of 10 paired seeds.
// ---------------------------------------------------------------------------
struct RolloutOutcome {
  bool feasible = false;
  double error = std::numeric_limits<double>::infinity();
};

RolloutOutcome plan_and_rollout(Scenario sc, EdgeSolver solver, std::uint64_t seed) {
  sc.planner.solver = solver;
  sc.planner.seed = seed;
  sc.world.sampler.seed = seed;
  RolloutOutcome out;
  const PlanResult res = plan(*sc.model, sc.world, sc.R, sc.x_init, sc.planner);
  if (!res.best_trajectory) return out;
  TrajectoryData data;
  data.times = res.best_trajectory->times;
  data.states = res.best_trajectory->states;
  for (const Vec& u : res.best_trajectory->controls)
    data.controls.push_back(u.size() == sc.model->control_dim()
                                ? u
                                : Vec::Zero(sc.model->control_dim()));
  const RolloutReport rep = rollout_trajectory(*sc.model, sc.R, sc.x_init, data);
  out.feasible = true;
  out.error = rep.endpoint_error;
  return out;
}

bool criterion6(std::string& detail) {
  const Scenario base = load("pendulum_swingup.scn");
  Vec goal(2);
  goal << M_PI, 0.0;
  const double tol = 1e-2 * (1.0 + goal.norm());

  const int seeds = 10;
  std::vector<RolloutOutcome> sa(seeds), ve(seeds), lin(seeds);
  std::vector<std::function<void()>> jobs;
  for (int s = 0; s < seeds; ++s) {
    jobs.push_back([&, s] { sa[s] = plan_and_rollout(base, EdgeSolver::Sa, 100 + s); });
    jobs.push_back([&, s] { ve[s] = plan_and_rollout(base, EdgeSolver::Ve, 100 + s); });
    jobs.push_back([&, s] {
      lin[s] = plan_and_rollout(base, EdgeSolver::LinearizedBaseline, 100 + s);
    });
  }
  run_parallel(jobs);

  int sa_ok = 0, ve_ok = 0, sa_beats = 0, ve_beats = 0, feasible_triples = 0;
  double worst_sa = 0.0, worst_ve = 0.0;
  for (int s = 0; s < seeds; ++s) {
    if (sa[s].feasible && ve[s].feasible && lin[s].feasible) ++feasible_triples;
    if (sa[s].feasible && sa[s].error <= tol) ++sa_ok;
    if (ve[s].feasible && ve[s].error <= tol) ++ve_ok;
    if (sa[s].feasible && lin[s].feasible && sa[s].error < lin[s].error) ++sa_beats;
    if (ve[s].feasible && lin[s].feasible && ve[s].error < lin[s].error) ++ve_beats;
    worst_sa = std::max(worst_sa, sa[s].error);
    worst_ve = std::max(worst_ve, ve[s].error);
  }
  detail = "feasible triples " + std::to_string(feasible_triples) +
           "/10; sa<=tol " + std::to_string(sa_ok) + "/10 (worst " + fmt(worst_sa) +
           "), ve<=tol " + std::to_string(ve_ok) + "/10 (worst " + fmt(worst_ve) +
           "), sa beats baseline " + std::to_string(sa_beats) + "/10, ve beats " +
           std::to_string(ve_beats) + "/10, tol " + fmt(tol);
  return sa_ok == 10 && ve_ok == 10 && sa_beats >= 9 && ve_beats >= 9;
}

// ---------------------------------------------------------------------------
// 7. Convergence trend on the cluttered diff-drive field: 20 trials,
//    checkpoints {500, 1000, 3000, 5000}.
// ---------------------------------------------------------------------------
bool criterion7(std::string& detail) {
  Scenario sc = load("diffdrive_cluttered25.scn");
  const std::vector<int> checkpoints{500, 1000, 3000, 5000};
  const BatchReport report = run_batch(sc, 20, checkpoints, 2);

  std::string parts;
  bool feas_nondecreasing = true, mean_decreasing = true;
  for (std::size_t c = 0; c < report.summary.size(); ++c) {
    const auto& s = report.summary[c];
    parts += (c ? " | " : "") + std::to_string(s.nodes) + ": " +
             std::to_string(s.feasible) + "/20, mean " + fmt(s.mean) + ", var " +
             fmt(s.variance);
    if (c > 0) {
      if (s.feasible < report.summary[c - 1].feasible) feas_nondecreasing = false;
      if (!(s.mean < report.summary[c - 1].mean)) mean_decreasing = false;
    }
  }
  const bool full_at_end = report.summary.back().feasible == 20;
  bool var_decreasing = true;  // from the 1000-node checkpoint on
  for (std::size_t c = 2; c < report.summary.size(); ++c)
    if (!(report.summary[c].variance < report.summary[c - 1].variance))
      var_decreasing = false;

  detail = parts + (feas_nondecreasing ? "" : " [feasibility not monotone]") +
           (mean_decreasing ? "" : " [mean not decreasing]") +
           (var_decreasing ? "" : " [variance not decreasing]");
  return feas_nondecreasing && full_at_end && mean_decreasing && var_decreasing;
}

// ---------------------------------------------------------------------------
// 8. SCARA homotopy switch: cheap joint-3 control goes over the wall,
//    expensive joint-3 control detours around it; the detour arrives
//    sooner. 3 seeds each, majority behavior.
// ---------------------------------------------------------------------------
struct ScaraOutcome {
  bool feasible = false;
  bool crosses_footprint = false;
  double arrival = std::numeric_limits<double>::infinity();
};

ScaraOutcome run_scara(Scenario sc, const Vec& r_diag, std::uint64_t seed) {
  sc.R = CostWeights::diagonal(r_diag);
  sc.planner.seed = seed;
  sc.world.sampler.seed = seed;
  ScaraOutcome out;
  const PlanResult res = plan(*sc.model, sc.world, sc.R, sc.x_init, sc.planner);
  if (!res.best_trajectory) return out;
  out.feasible = true;
  out.arrival = res.best_trajectory->duration;
  const auto& p = static_cast<const Scara*>(sc.model.get())->params();
  const auto& wall = sc.world.obstacles.boxes.front();
  for (const Vec& x : res.best_trajectory->states) {
    const double ex = p.l1 * std::cos(x[0]) + p.l2 * std::cos(x[0] + x[1]);
    const double ey = p.l1 * std::sin(x[0]) + p.l2 * std::sin(x[0] + x[1]);
    if (ex >= wall.x0 && ex <= wall.x1 && ey >= wall.y0 && ey <= wall.y1) {
      out.crosses_footprint = true;
      break;
    }
  }
  return out;
}

bool criterion8(std::string& detail) {
  const Scenario base = load("scara_wall.scn");
  Vec r_over(3), r_detour(3);
  r_over << 0.05, 0.05, 0.025;    // 0.05 diag(1, 1, 0.5)
  r_detour << 0.025, 0.025, 0.5;  // 0.05 diag(0.5, 0.5, 10)

  const int seeds = 3;
  std::vector<ScaraOutcome> over(seeds), detour(seeds);
  std::vector<std::function<void()>> jobs;
  for (int s = 0; s < seeds; ++s) {
    jobs.push_back([&, s] { over[s] = run_scara(base, r_over, 300 + s); });
    jobs.push_back([&, s] { detour[s] = run_scara(base, r_detour, 300 + s); });
  }
  run_parallel(jobs);

  int over_cross = 0, detour_around = 0, feasible_pairs = 0, arrival_wins = 0;
  std::string parts;
  for (int s = 0; s < seeds; ++s) {
    parts += " [seed " + std::to_string(300 + s) + ": over-case " +
             (over[s].feasible ? (over[s].crosses_footprint ? "crosses" : "detours")
                               : "infeasible") +
             " t=" + fmt(over[s].arrival) + ", detour-case " +
             (detour[s].feasible
                  ? (detour[s].crosses_footprint ? "crosses" : "detours")
                  : "infeasible") +
             " t=" + fmt(detour[s].arrival) + "]";
    if (over[s].feasible && over[s].crosses_footprint) ++over_cross;
    if (detour[s].feasible && !detour[s].crosses_footprint) ++detour_around;
    if (over[s].feasible && detour[s].feasible) {
      ++feasible_pairs;
      if (detour[s].arrival < over[s].arrival) ++arrival_wins;
    }
  }
  detail = "over-crosses " + std::to_string(over_cross) + "/3, detours " +
           std::to_string(detour_around) + "/3, detour-arrives-sooner " +
           std::to_string(arrival_wins) + "/" + std::to_string(feasible_pairs) +
           parts;
  return over_cross >= 2 && detour_around >= 2 && feasible_pairs >= 2 &&
         2 * arrival_wins > feasible_pairs;
}

// ---------------------------------------------------------------------------
// 9. Determinism: repeated plan invocations byte-identical; batch output
//    independent of thread count.
// ---------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool criterion9(std::string& detail) {
  Scenario sc = load("double_integrator.scn");
  sc.planner.max_nodes = 150;

  const fs::path dir = fs::temp_directory_path() / "kinoplan_acceptance9";
  fs::create_directories(dir);

  std::array<std::string, 2> tree_bytes, traj_bytes, summary_bytes;
  for (int run = 0; run < 2; ++run) {
    const PlanResult res = plan(*sc.model, sc.world, sc.R, sc.x_init, sc.planner);
    const ArtifactMeta meta{sc.planner.seed, solver_name(sc.planner.solver),
                            sc.digest};
    const fs::path tree = dir / ("tree" + std::to_string(run) + ".csv");
    const fs::path traj = dir / ("traj" + std::to_string(run) + ".csv");
    const fs::path summ = dir / ("summary" + std::to_string(run) + ".txt");
    write_tree_csv(tree.string(), res.tree, meta);
    if (res.best_trajectory)
      write_trajectory_csv(traj.string(), *res.best_trajectory, 2, 1, meta);
    SummaryData data;
    data.best_cost = res.best_cost;
    data.node_count = res.tree.size();
    data.stats = res.stats;
    write_summary(summ.string(), data, meta);
    tree_bytes[run] = slurp(tree);
    traj_bytes[run] = slurp(traj);
    summary_bytes[run] = slurp(summ);
  }
  const bool plan_identical = tree_bytes[0] == tree_bytes[1] &&
                              traj_bytes[0] == traj_bytes[1] &&
                              summary_bytes[0] == summary_bytes[1];

  sc.planner.max_nodes = 100;
  const std::vector<int> cps{50, 100};
  const BatchReport serial = run_batch(sc, 4, cps, 1);
  const BatchReport threaded = run_batch(sc, 4, cps, 2);
  const fs::path b1 = dir / "batch1.csv", b2 = dir / "batch2.csv";
  write_batch_csv(b1.string(), serial, sc.digest, sc.planner.seed, "sa");
  write_batch_csv(b2.string(), threaded, sc.digest, sc.planner.seed, "sa");
  const bool batch_identical = slurp(b1) == slurp(b2);

  detail = std::string("plan artifacts ") +
           (plan_identical ? "byte-identical" : "DIFFER") +
           "; batch (1 vs 2 threads) " +
           (batch_identical ? "byte-identical" : "DIFFERS");
  return plan_identical && batch_identical;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--scenarios") == 0 && i + 1 < argc) {
      g_scenario_dir = argv[++i];
    } else {
      selected.push_back(std::atoi(argv[i]));
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "affine oracle equivalence", criterion1},
      {2, "solver collapse on affine systems", criterion2},
      {3, "transversality suite", criterion3},
      {4, "derivative suites", criterion4},
      {5, "metric equivalence", criterion5},
      {6, "open-loop feasibility comparison", criterion6},
      {7, "convergence trend (cluttered diff-drive)", criterion7},
      {8, "scara homotopy switch", criterion8},
      {9, "determinism", criterion9},
  };

  for (const Criterion& c : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), c.number) == selected.end())
      continue;
    const auto t0 = Clock::now();
    std::string detail;
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    report(c.number, c.title, pass, secs, detail);
  }
  return g_failures == 0 ? 0 : 1;
}
