#pragma once

#include <string>
#include <vector>

#include "kinoplan/planner.hpp"
#include "kinoplan/scenario.hpp"

namespace kinoplan {

/// 17-significant-digit decimal (round-trip exact for doubles).
std::string format_g17(double v);

struct ArtifactMeta {
  std::uint64_t seed = 0;
  std::string solver;
  std::string scenario_digest;
};

/// Reads the `# cost = ...` header of a trajectory artifact (NaN when the
/// header is absent).
double read_trajectory_cost_header(const std::string& path);

void write_trajectory_csv(const std::string& path, const TrajectorySegment& traj,
                          int state_dim, int control_dim, const ArtifactMeta& meta);

void write_tree_csv(const std::string& path, const PlanTree& tree,
                    const ArtifactMeta& meta);

struct SummaryData {
  double best_cost = std::numeric_limits<double>::infinity();
  std::size_t node_count = 0;
  PlanStats stats;
};

void write_summary(const std::string& path, const SummaryData& data,
                   const ArtifactMeta& meta);

struct TrajectoryData {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> controls;
};

/// Parses a trajectory artifact back; throws std::runtime_error with a
/// line-anchored message on malformed input.
TrajectoryData read_trajectory_csv(const std::string& path, int state_dim,
                                   int control_dim);

std::string solver_name(EdgeSolver solver);

}  // namespace kinoplan
