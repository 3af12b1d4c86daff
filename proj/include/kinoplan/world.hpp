#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "kinoplan/affine_ocp.hpp"
#include "kinoplan/dynamics.hpp"

namespace kinoplan {

class SamplingStarvedError : public std::runtime_error {
 public:
  SamplingStarvedError()
      : std::runtime_error(
            "free-space sampling rejected 10000 consecutive draws (world "
            "misconfigured?)") {}
};

/// SplitMix64: counter-based 64-bit generator, bit-identical across
/// platforms. The planner's determinism contract rests on this.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

 private:
  std::uint64_t state_;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

struct BoxObstacle {
  double x0, x1, y0, y1;
  // Optional height interval (prism); unbounded when unset.
  std::optional<double> z0, z1;
};

struct CircleObstacle {
  double cx, cy, r;
};

enum class WorkspaceProjection {
  None,     // no collision geometry (pendulum, double integrator)
  PlanarXY, // state coordinates (proj_x, proj_y) are the workspace point
  ScaraFk,  // forward kinematics: link segments + end effector
};

struct ObstacleSet {
  std::vector<BoxObstacle> boxes;
  std::vector<CircleObstacle> circles;
  WorkspaceProjection projection = WorkspaceProjection::None;
  int proj_x = 0, proj_y = 1;
  // SCARA link geometry (projection == ScaraFk).
  double l1 = 1.0, l2 = 1.0;
  double arm_height = 3.2;
  double ds = 0.05;  // workspace-space collision resolution

  bool empty() const { return boxes.empty() && circles.empty(); }
};

/// Per-coordinate closed intervals; angle coordinates are tested on the
/// wrapped representative.
struct GoalRegion {
  Vec lower;
  Vec upper;
};

struct SamplerConfig {
  Vec lower;  // per-coordinate sampling intervals
  Vec upper;
  double goal_bias = 0.05;
  std::uint64_t seed = 0;
};

struct World {
  ObstacleSet obstacles;
  GoalRegion goal;
  SamplerConfig sampler;
};

bool in_goal(const Vec& x, const GoalRegion& goal, const std::vector<int>& angles);

/// Collision test of a single state's workspace geometry.
bool state_collision_free(const Vec& x, const ObstacleSet& obs);

/// True iff every grid sample of the segment (plus sub-samples so that
/// consecutive checked workspace points are at most ds apart) is outside
/// all obstacle primitives.
bool obstacle_free(const TrajectorySegment& segment, const ObstacleSet& obs);

/// Uniform draw over the sampling box, rejecting samples in collision; with
/// probability goal_bias draws from the goal region instead. Throws
/// SamplingStarvedError after 10000 consecutive rejections.
Vec sample_free(const World& world, SplitMix64& rng);

}  // namespace kinoplan
