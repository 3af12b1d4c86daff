#include "kinoplan/planner.hpp"

#include <algorithm>
#include <cmath>

namespace kinoplan {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

int PlanTree::add_node(PlanNode node) {
  const int id = static_cast<int>(nodes.size());
  node.id = id;
  nodes.push_back(std::move(node));
  children.emplace_back();
  if (nodes[id].parent >= 0) children[nodes[id].parent].push_back(id);
  return id;
}

void PlanTree::set_parent(int node, int parent) {
  const int old = nodes[node].parent;
  if (old >= 0) {
    auto& sib = children[old];
    sib.erase(std::remove(sib.begin(), sib.end(), node), sib.end());
  }
  nodes[node].parent = parent;
  children[parent].push_back(node);
}

double connection_radius(std::size_t num_nodes, int state_dim,
                         const PlannerConfig& cfg) {
  const double v = static_cast<double>(num_nodes) + 1.0;
  const double vol = cfg.gamma_rrt * std::log(v) / v;
  return std::min(std::pow(vol, 1.0 / static_cast<double>(state_dim)), cfg.eta);
}

namespace {

/// Optimal edge from -> to under the configured solver. The affine problem
/// is always scanned at the (coarser) metric grid; trajectories are sampled
/// at the solver grid. Empty on unreachable/unconverged edges.
std::optional<TrajectorySegment> solve_edge(const SystemModel& model,
                                            const CostWeights& R, const Vec& from,
                                            const Vec& to, const PlannerConfig& cfg,
                                            PlanStats& stats) {
  ++stats.edge_attempts;
  try {
    const AffineModel affine = linearize(model, from, Vec::Zero(model.control_dim()), R);
    const DistanceResult res = optimal_final_time(affine, from, to, cfg.metric);
    if (!res.valid || !std::isfinite(res.cost)) return std::nullopt;
    if (cfg.solver == EdgeSolver::LinearizedBaseline) {
      // The artifact trajectory for the baseline is sampled at the solver
      // grid; iterative seeds below get by with the coarser metric grid.
      AffineOcpConfig fine = cfg.metric;
      fine.dt = cfg.tpbvp.dt;
      TrajectorySegment edge = solve_affine(affine, from, to, fine, res.tau_star);
      edge.cost = res.cost;
      ++stats.edge_converged;
      return edge;
    }
    TrajectorySegment guess = solve_affine(affine, from, to, cfg.metric, res.tau_star);
    guess.cost = res.cost;
    AffineSeed seed{affine, std::move(guess)};
    // Edges that fail the plain iteration are simply discarded, so the
    // continuation fallback is disabled inside the planner.
    SolverConfig edge_cfg = cfg.tpbvp;
    edge_cfg.continuation_levels = 0;
    const TpbvpSolution sol =
        cfg.solver == EdgeSolver::Sa
            ? solve_sa(model, R, from, to, edge_cfg, &seed)
            : solve_ve(model, R, from, to, edge_cfg, &seed);
    if (!sol.converged) return std::nullopt;
    ++stats.edge_converged;
    return sol.segment;
  } catch (const UnreachableStateError&) {
    return std::nullopt;
  } catch (const IntegrationDivergedError&) {
    return std::nullopt;
  } catch (const SingularMatrixError&) {
    return std::nullopt;
  }
}

bool exceeds_control_limit(const TrajectorySegment& seg, const Vec& limit) {
  for (const Vec& u : seg.controls)
    for (int j = 0; j < u.size(); ++j)
      if (std::abs(u[j]) > limit[j]) return true;
  return false;
}

/// Sequential re-solve of the winning chain: each edge is shot forward from
/// the exact state the previous edge reached, seeded with the tree edge and
/// converged to a tight boundary tolerance. Joints then carry no seams and
/// the emitted trajectory is a single consistent orbit. Falls back to the
/// tree edges if any re-solve fails.
std::optional<TrajectorySegment> polish_chain(
    const SystemModel& model, const CostWeights& R, const PlanTree& tree,
    int goal_node, const PlannerConfig& cfg) {
  std::vector<int> chain;
  for (int id = goal_node; id >= 0; id = tree.nodes[id].parent) chain.push_back(id);
  std::reverse(chain.begin(), chain.end());
  if (chain.size() < 2) return std::nullopt;

  SolverConfig tight = cfg.tpbvp;
  tight.boundary_tol = std::min(cfg.tpbvp.boundary_tol, 1e-6);
  tight.max_iters = std::max(cfg.tpbvp.max_iters, 20);
  tight.continuation_levels = 0;
  tight.dt = std::min(cfg.tpbvp.dt, 1e-3);  // replay fidelity of the artifact

  TrajectorySegment out;
  out.cost = 0.0;
  Vec x = tree.nodes[chain[0]].state;
  for (std::size_t k = 1; k < chain.size(); ++k) {
    const PlanNode& node = tree.nodes[chain[k]];
    AffineSeed seed;
    seed.affine = linearize(model, x, Vec::Zero(model.control_dim()), R);
    seed.segment = node.edge;
    TpbvpSolution sol;
    try {
      sol = solve_ve(model, R, x, node.state, tight, &seed);
    } catch (const std::exception&) {
      return std::nullopt;
    }
    if (!sol.converged) return std::nullopt;
    const TrajectorySegment& seg = sol.segment;
    const double t_base = out.duration;
    for (std::size_t i = 0; i < seg.size(); ++i) {
      out.times.push_back(t_base + seg.times[i]);
      out.states.push_back(seg.states[i]);
      out.controls.push_back(seg.controls[i]);
      out.costates.push_back(seg.costates[i]);
    }
    out.duration += seg.duration;
    out.cost += seg.cost;
    x = seg.states.back();
  }
  return out;
}

}  // namespace

PlanResult plan(const SystemModel& model, const World& world,
                const CostWeights& R, const Vec& x_init,
                const PlannerConfig& cfg, const ProgressCallback& on_progress) {
  if (!state_collision_free(x_init, world.obstacles))
    throw std::invalid_argument("plan: x_init is in collision");
  const std::vector<int>& angles = model.angle_coordinates();

  PlanResult result;
  PlanTree& tree = result.tree;
  std::vector<Vec> states;  // parallel array for the metric sweeps
  std::vector<int> goal_nodes;

  PlanNode root;
  root.state = x_init;
  root.cost_to_come = 0.0;
  root.goal = in_goal(x_init, world.goal, angles);
  tree.add_node(root);
  states.push_back(x_init);
  if (tree.nodes[0].goal) goal_nodes.push_back(0);

  SplitMix64 rng(cfg.seed);
  const long iter_cap =
      cfg.max_iterations > 0 ? cfg.max_iterations : 50L * cfg.max_nodes;

  auto refresh_best = [&]() {
    result.best_goal_node = -1;
    result.best_cost = kInf;
    for (int id : goal_nodes) {
      if (tree.nodes[id].cost_to_come < result.best_cost) {
        result.best_cost = tree.nodes[id].cost_to_come;
        result.best_goal_node = id;
      }
    }
  };
  refresh_best();

  // Recompute a subtree's cost-to-come after a rewire (child cost = parent
  // cost + edge cost, depth first).
  auto propagate_costs = [&](int start) {
    std::vector<int> stack{start};
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      for (int child : tree.children[id]) {
        tree.nodes[child].cost_to_come =
            tree.nodes[id].cost_to_come + tree.nodes[child].edge.cost;
        stack.push_back(child);
      }
    }
  };

  for (long iter = 0; iter < iter_cap &&
                      tree.size() < static_cast<std::size_t>(cfg.max_nodes);
       ++iter) {
    ++result.stats.iterations;
    const Vec x_rand = sample_free(world, rng);

    const int i_nearest = nearest(states, x_rand, model, R, cfg.metric);
    const auto steered =
        steer(model, states[i_nearest], x_rand, cfg.eta, R, cfg.metric);
    if (!steered) {
      ++result.stats.steer_failures;
      continue;
    }
    const Vec& x_new = steered->x_new;

    std::optional<TrajectorySegment> edge =
        solve_edge(model, R, states[i_nearest], x_new, cfg, result.stats);
    if (!edge) continue;
    if (!obstacle_free(*edge, world.obstacles)) {
      ++result.stats.collisions;
      continue;
    }

    const double radius = connection_radius(tree.size(), model.state_dim(), cfg);
    const std::vector<int> near_b =
        near_backward(states, x_new, radius, model, R, cfg.metric);
    const std::vector<int> near_f =
        near_forward(states, x_new, radius, model, R, cfg.metric);

    // Choose-parent pass over the backward near set.
    int best_parent = i_nearest;
    double c_min = tree.nodes[i_nearest].cost_to_come + edge->cost;
    TrajectorySegment best_edge = std::move(*edge);
    for (int cand : near_b) {
      if (cand == i_nearest) continue;
      std::optional<TrajectorySegment> seg =
          solve_edge(model, R, states[cand], x_new, cfg, result.stats);
      if (!seg) continue;
      const double c = tree.nodes[cand].cost_to_come + seg->cost;
      if (c >= c_min) continue;
      if (!obstacle_free(*seg, world.obstacles)) {
        ++result.stats.collisions;
        continue;
      }
      best_parent = cand;
      c_min = c;
      best_edge = std::move(*seg);
    }

    PlanNode node;
    node.state = x_new;
    node.parent = best_parent;
    node.cost_to_come = c_min;
    node.edge = std::move(best_edge);
    node.goal = in_goal(x_new, world.goal, angles);
    if (cfg.control_limit && exceeds_control_limit(node.edge, *cfg.control_limit))
      ++result.stats.control_limit_violations;
    const int new_id = tree.add_node(std::move(node));
    states.push_back(x_new);
    if (tree.nodes[new_id].goal) goal_nodes.push_back(new_id);

    // Rewire pass over the forward near set.
    for (int cand : near_f) {
      if (cand == best_parent || cand == 0) continue;
      std::optional<TrajectorySegment> seg =
          solve_edge(model, R, x_new, states[cand], cfg, result.stats);
      if (!seg) continue;
      const double c = tree.nodes[new_id].cost_to_come + seg->cost;
      if (c >= tree.nodes[cand].cost_to_come - 1e-12) continue;
      if (!obstacle_free(*seg, world.obstacles)) {
        ++result.stats.collisions;
        continue;
      }
      if (cfg.control_limit && exceeds_control_limit(*seg, *cfg.control_limit))
        ++result.stats.control_limit_violations;
      tree.set_parent(cand, new_id);
      tree.nodes[cand].edge = std::move(*seg);
      tree.nodes[cand].cost_to_come = c;
      propagate_costs(cand);
      ++result.stats.rewires;
    }

    refresh_best();
    if (on_progress) on_progress(tree.size(), result.best_cost);
  }

  refresh_best();
  result.best_trajectory = best_solution(tree, world.goal, angles);
  if (cfg.polish_chain && result.best_goal_node > 0) {
    auto polished = polish_chain(model, R, tree, result.best_goal_node, cfg);
    if (polished && in_goal(polished->states.back(), world.goal, angles)) {
      result.best_trajectory = std::move(polished);
      result.chain_polished = true;
    }
  }
  return result;
}

std::optional<TrajectorySegment> best_solution(const PlanTree& tree,
                                               const GoalRegion& goal,
                                               const std::vector<int>& angles) {
  int best = -1;
  double best_cost = kInf;
  for (const PlanNode& node : tree.nodes) {
    if (!in_goal(node.state, goal, angles)) continue;
    if (node.cost_to_come < best_cost) {
      best_cost = node.cost_to_come;
      best = node.id;
    }
  }
  if (best < 0) return std::nullopt;

  std::vector<int> chain;
  for (int id = best; id >= 0; id = tree.nodes[id].parent) chain.push_back(id);
  std::reverse(chain.begin(), chain.end());

  TrajectorySegment out;
  out.cost = 0.0;
  out.duration = 0.0;
  if (chain.size() == 1) {
    // Root already satisfies the goal: zero-length trajectory.
    const PlanNode& root = tree.nodes[chain[0]];
    out.times = {0.0};
    out.states = {root.state};
    out.controls = {Vec::Zero(0)};
    out.costates = {Vec::Zero(root.state.size())};
    return out;
  }

  double t_base = 0.0;
  for (std::size_t k = 1; k < chain.size(); ++k) {
    const TrajectorySegment& seg = tree.nodes[chain[k]].edge;
    // Joints keep both rows (same timestamp, the two segments' controls):
    // quadrature over the chain then reproduces the per-segment costs
    // exactly, and zero-order-hold replay picks up the incoming control.
    for (std::size_t i = 0; i < seg.size(); ++i) {
      out.times.push_back(t_base + seg.times[i]);
      out.states.push_back(seg.states[i]);
      out.controls.push_back(seg.controls[i]);
      out.costates.push_back(seg.costates[i]);
    }
    t_base += seg.duration;
    out.cost += seg.cost;
  }
  out.duration = t_base;
  // Header contract: the first row is exactly the initial state.
  out.states.front() = tree.nodes[chain[0]].state;
  return out;
}

}  // namespace kinoplan
