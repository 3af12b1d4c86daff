#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "kinoplan/metric.hpp"
#include "kinoplan/tpbvp.hpp"
#include "kinoplan/world.hpp"

namespace kinoplan {

struct PlanNode {
  int id = 0;
  Vec state;
  int parent = -1;  // -1: root
  double cost_to_come = 0.0;
  TrajectorySegment edge;  // from parent to this node (empty for root)
  bool goal = false;
};

struct PlanTree {
  std::vector<PlanNode> nodes;
  std::vector<std::vector<int>> children;

  int add_node(PlanNode node);
  void set_parent(int node, int parent);
  std::size_t size() const { return nodes.size(); }
};

enum class EdgeSolver { Sa, Ve, LinearizedBaseline };

struct PlannerConfig {
  int max_nodes = 1000;       // tree-size target; iterations stop once reached
  long max_iterations = 0;    // 0: 50 * max_nodes safety cap
  double eta = 5.0;           // steering ball (max edge cost)
  double gamma_rrt = 100.0;   // connection-radius constant
  EdgeSolver solver = EdgeSolver::Sa;
  std::uint64_t seed = 0;
  AffineOcpConfig metric;     // metric sweeps / steering
  SolverConfig tpbvp;         // edge solver
  std::optional<Vec> control_limit;  // post-hoc |u| report only
  /// Re-solve the winning chain sequentially from the exact running state
  /// (tight tolerance, forward shooting) so the emitted trajectory is
  /// continuous across joints. Edge solves leave tolerance-sized seams that
  /// open-loop replay amplifies; the polish removes them without touching
  /// the tree.
  bool polish_chain = true;
};

struct PlanStats {
  long iterations = 0;
  long steer_failures = 0;
  long edge_attempts = 0;
  long edge_converged = 0;
  long collisions = 0;
  long rewires = 0;
  long control_limit_violations = 0;
};

struct PlanResult {
  PlanTree tree;
  int best_goal_node = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  std::optional<TrajectorySegment> best_trajectory;  // concatenated chain
  bool chain_polished = false;
  PlanStats stats;
};

/// r(|V|) = min((gamma * log(|V|+1)/(|V|+1))^(1/n), eta).
double connection_radius(std::size_t num_nodes, int state_dim,
                         const PlannerConfig& cfg);

/// Called after every accepted node with (node count, incumbent best goal
/// cost); the batch harness records checkpoints through this.
using ProgressCallback = std::function<void(std::size_t, double)>;

PlanResult plan(const SystemModel& model, const World& world,
                const CostWeights& R, const Vec& x_init,
                const PlannerConfig& cfg,
                const ProgressCallback& on_progress = nullptr);

/// Minimum-cost root-to-goal chain, timestamps re-based to start at 0;
/// empty when no tree node lies in the goal region.
std::optional<TrajectorySegment> best_solution(const PlanTree& tree,
                                               const GoalRegion& goal,
                                               const std::vector<int>& angles);

}  // namespace kinoplan
