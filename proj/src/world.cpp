#include "kinoplan/world.hpp"

#include <algorithm>
#include <cmath>

namespace kinoplan {

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  if (a > M_PI) a -= 2.0 * M_PI;
  return a;
}

bool in_goal(const Vec& x, const GoalRegion& goal, const std::vector<int>& angles) {
  if (x.size() != goal.lower.size())
    throw std::invalid_argument("in_goal: dimension mismatch");
  for (int i = 0; i < x.size(); ++i) {
    const bool is_angle =
        std::find(angles.begin(), angles.end(), i) != angles.end();
    if (is_angle) {
      const double mid = 0.5 * (goal.lower[i] + goal.upper[i]);
      const double half = 0.5 * (goal.upper[i] - goal.lower[i]);
      if (std::abs(wrap_angle(x[i] - mid)) > half) return false;
    } else {
      if (x[i] < goal.lower[i] || x[i] > goal.upper[i]) return false;
    }
  }
  return true;
}

namespace {

struct WorkPoint {
  double x, y, z;
  bool has_z;
};

bool point_hits(const WorkPoint& p, const ObstacleSet& obs) {
  for (const auto& b : obs.boxes) {
    if (p.x < b.x0 || p.x > b.x1 || p.y < b.y0 || p.y > b.y1) continue;
    if (b.z0 && b.z1 && p.has_z && (p.z < *b.z0 || p.z > *b.z1)) continue;
    return true;
  }
  for (const auto& c : obs.circles) {
    const double dx = p.x - c.cx, dy = p.y - c.cy;
    if (dx * dx + dy * dy <= c.r * c.r) return true;
  }
  return false;
}

/// Collision bodies of one state: a single planar point, or the SCARA link
/// segments (at the fixed arm plane) plus the end-effector point at height
/// th3. Returns false on the first hit.
bool bodies_free(const Vec& x, const ObstacleSet& obs) {
  switch (obs.projection) {
    case WorkspaceProjection::None:
      return true;
    case WorkspaceProjection::PlanarXY:
      return !point_hits({x[obs.proj_x], x[obs.proj_y], 0.0, false}, obs);
    case WorkspaceProjection::ScaraFk: {
      const double th1 = x[0], th2 = x[1], z_ee = x[2];
      const double jx = obs.l1 * std::cos(th1), jy = obs.l1 * std::sin(th1);
      const double ex = jx + obs.l2 * std::cos(th1 + th2);
      const double ey = jy + obs.l2 * std::sin(th1 + th2);
      if (point_hits({ex, ey, z_ee, true}, obs)) return false;
      // Link segments at the arm plane, sampled at ds resolution.
      const auto check_link = [&](double ax, double ay, double bx, double by) {
        const double len = std::hypot(bx - ax, by - ay);
        const int pieces = std::max(1, static_cast<int>(std::ceil(len / obs.ds)));
        for (int i = 0; i <= pieces; ++i) {
          const double s = static_cast<double>(i) / pieces;
          if (point_hits({ax + s * (bx - ax), ay + s * (by - ay),
                          obs.arm_height, true},
                         obs))
            return false;
        }
        return true;
      };
      if (!check_link(0.0, 0.0, jx, jy)) return false;
      if (!check_link(jx, jy, ex, ey)) return false;
      return true;
    }
  }
  return true;
}

/// Workspace displacement between consecutive states, used to pick the
/// sub-sampling count.
double workspace_gap(const Vec& a, const Vec& b, const ObstacleSet& obs) {
  switch (obs.projection) {
    case WorkspaceProjection::None:
      return 0.0;
    case WorkspaceProjection::PlanarXY:
      return std::hypot(b[obs.proj_x] - a[obs.proj_x], b[obs.proj_y] - a[obs.proj_y]);
    case WorkspaceProjection::ScaraFk: {
      // End-effector motion bounds the workspace motion of every body up to
      // the link-length factor; scale conservatively.
      const double reach = obs.l1 + obs.l2;
      double ang = std::abs(b[0] - a[0]) + std::abs(b[1] - a[1]);
      return reach * ang + std::abs(b[2] - a[2]);
    }
  }
  return 0.0;
}

}  // namespace

bool state_collision_free(const Vec& x, const ObstacleSet& obs) {
  return bodies_free(x, obs);
}

bool obstacle_free(const TrajectorySegment& segment, const ObstacleSet& obs) {
  if (obs.projection == WorkspaceProjection::None || obs.empty()) return true;
  if (segment.empty()) return true;
  if (!bodies_free(segment.states.front(), obs)) return false;
  for (std::size_t i = 0; i + 1 < segment.states.size(); ++i) {
    const Vec& a = segment.states[i];
    const Vec& b = segment.states[i + 1];
    const double gap = workspace_gap(a, b, obs);
    const int pieces = std::max(1, static_cast<int>(std::ceil(gap / obs.ds)));
    for (int k = 1; k <= pieces; ++k) {
      const double s = static_cast<double>(k) / pieces;
      const Vec mid = (1.0 - s) * a + s * b;
      if (!bodies_free(mid, obs)) return false;
    }
  }
  return true;
}

Vec sample_free(const World& world, SplitMix64& rng) {
  const auto& s = world.sampler;
  const int n = static_cast<int>(s.lower.size());
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Vec x(n);
    const bool from_goal = s.goal_bias > 0.0 && rng.next_double() < s.goal_bias;
    if (from_goal) {
      for (int i = 0; i < n; ++i)
        x[i] = rng.uniform(world.goal.lower[i], world.goal.upper[i]);
    } else {
      for (int i = 0; i < n; ++i) x[i] = rng.uniform(s.lower[i], s.upper[i]);
    }
    if (state_collision_free(x, world.obstacles)) return x;
  }
  throw SamplingStarvedError();
}

}  // namespace kinoplan
