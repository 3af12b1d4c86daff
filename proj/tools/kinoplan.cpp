#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "kinoplan/artifacts.hpp"
#include "kinoplan/batch.hpp"
#include "kinoplan/rollout.hpp"
#include "kinoplan/verify.hpp"

namespace fs = std::filesystem;
using namespace kinoplan;

namespace {

struct CommonOpts {
  std::string scenario_path;
  std::string out_dir = "out";
  int nodes = 0;             // 0: keep scenario value
  long long seed = -1;       // <0: keep scenario value
  std::string solver;        // empty: keep scenario value
};

Scenario load_scenario(const CommonOpts& opts) {
  Scenario sc = parse_scenario_file(opts.scenario_path);
  if (opts.nodes > 0) sc.planner.max_nodes = opts.nodes;
  if (opts.seed >= 0) {
    sc.planner.seed = static_cast<std::uint64_t>(opts.seed);
    sc.world.sampler.seed = sc.planner.seed;
  }
  if (!opts.solver.empty()) {
    if (opts.solver == "sa") sc.planner.solver = EdgeSolver::Sa;
    else if (opts.solver == "ve") sc.planner.solver = EdgeSolver::Ve;
    else if (opts.solver == "linearized")
      sc.planner.solver = EdgeSolver::LinearizedBaseline;
    else throw ScenarioError(0, "--solver must be sa|ve|linearized");
  }
  return sc;
}

ArtifactMeta meta_of(const Scenario& sc) {
  return {sc.planner.seed, solver_name(sc.planner.solver), sc.digest};
}

int cmd_plan(const CommonOpts& opts) {
  const Scenario sc = load_scenario(opts);
  fs::create_directories(opts.out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  const PlanResult result =
      plan(*sc.model, sc.world, sc.R, sc.x_init, sc.planner);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const ArtifactMeta meta = meta_of(sc);
  write_tree_csv(opts.out_dir + "/tree.csv", result.tree, meta);
  SummaryData summary;
  summary.best_cost = result.best_cost;
  summary.node_count = result.tree.size();
  summary.stats = result.stats;
  write_summary(opts.out_dir + "/summary.txt", summary, meta);

  if (result.best_trajectory) {
    write_trajectory_csv(opts.out_dir + "/trajectory.csv", *result.best_trajectory,
                         sc.model->state_dim(), sc.model->control_dim(), meta);
    std::printf("feasible: best cost %s over %zu nodes (%.1f s wall)\n",
                format_g17(result.best_cost).c_str(), result.tree.size(), wall);
    return 0;
  }
  std::printf("no feasible solution in %zu nodes (%.1f s wall)\n",
              result.tree.size(), wall);
  return 2;
}

int cmd_batch(const CommonOpts& opts, int trials, const std::string& checkpoints_arg) {
  Scenario sc = load_scenario(opts);
  fs::create_directories(opts.out_dir);

  std::vector<int> checkpoints;
  {
    std::string tok;
    std::istringstream in(checkpoints_arg);
    while (std::getline(in, tok, ',')) {
      if (tok.empty()) continue;
      checkpoints.push_back(std::stoi(tok));
    }
  }
  if (checkpoints.empty()) checkpoints.push_back(sc.planner.max_nodes);

  const BatchReport report =
      run_batch(sc, trials, checkpoints, batch_thread_count());
  write_batch_csv(opts.out_dir + "/batch.csv", report, sc.digest, sc.planner.seed,
                  solver_name(sc.planner.solver));
  for (const CheckpointSummary& s : report.summary)
    std::printf("nodes %d: feasible %d/%d, mean %g, variance %g\n", s.nodes,
                s.feasible, trials, s.mean, s.variance);
  return 0;
}

int cmd_rollout(const CommonOpts& opts, const std::string& trajectory_path) {
  const Scenario sc = load_scenario(opts);
  fs::create_directories(opts.out_dir);
  const TrajectoryData traj = read_trajectory_csv(
      trajectory_path, sc.model->state_dim(), sc.model->control_dim());
  const RolloutReport report =
      rollout_trajectory(*sc.model, sc.R, sc.x_init, traj);
  write_rollout_csv(opts.out_dir + "/rollout.csv", report, meta_of(sc));
  std::printf("endpoint_error %s\nmax_deviation %s\nrecomputed_cost %s\n",
              format_g17(report.endpoint_error).c_str(),
              format_g17(report.max_deviation).c_str(),
              format_g17(report.recomputed_cost).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinodynamic RRT* planning toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;
  int trials = 20;
  std::string checkpoints;
  std::string trajectory_path;
  std::string suite;

  auto add_common = [&](CLI::App* cmd, bool scenario_required = true) {
    auto* s = cmd->add_option("--scenario", opts.scenario_path, "scenario file");
    if (scenario_required) s->required();
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--nodes", opts.nodes, "override planner node budget");
    cmd->add_option("--seed", opts.seed, "override planner seed");
    cmd->add_option("--solver", opts.solver, "override edge solver (sa|ve|linearized)");
  };

  CLI::App* plan_cmd = app.add_subcommand("plan", "run one planning instance");
  add_common(plan_cmd);

  CLI::App* batch_cmd = app.add_subcommand("batch", "Monte-Carlo planning study");
  add_common(batch_cmd);
  batch_cmd->add_option("--trials", trials, "number of seeded trials");
  batch_cmd->add_option("--checkpoints", checkpoints,
                        "comma-separated node-count checkpoints");

  CLI::App* rollout_cmd =
      app.add_subcommand("rollout", "open-loop replay of a trajectory artifact");
  add_common(rollout_cmd);
  rollout_cmd->add_option("--trajectory", trajectory_path, "trajectory.csv path")
      ->required();

  CLI::App* verify_cmd = app.add_subcommand("verify", "run an invariant suite");
  verify_cmd->add_option("suite", suite, "gradients|oracle|hamiltonian|metric")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (plan_cmd->parsed()) return cmd_plan(opts);
    if (batch_cmd->parsed()) return cmd_batch(opts, trials, checkpoints);
    if (rollout_cmd->parsed()) return cmd_rollout(opts, trajectory_path);
    if (verify_cmd->parsed()) return verify::run_suite(suite);
  } catch (const ScenarioError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
