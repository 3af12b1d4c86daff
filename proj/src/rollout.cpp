#include "kinoplan/rollout.hpp"

#include <fstream>

namespace kinoplan {

RolloutReport rollout_trajectory(const SystemModel& model, const CostWeights& R,
                                 const Vec& x_init, const TrajectoryData& traj) {
  RolloutReport report;
  report.times = traj.times;
  report.plan_states = traj.states;
  report.rollout_states.resize(traj.times.size());

  Vec x = x_init;
  report.rollout_states[0] = x;
  detail::Rk4Work work;
  Vec xnext(x.size());
  for (std::size_t i = 0; i + 1 < traj.times.size(); ++i) {
    const double h = traj.times[i + 1] - traj.times[i];
    const Vec& u = traj.controls[i];  // zero-order hold over [t_i, t_{i+1})
    if (h > 0.0) {
      auto rhs = [&](double, const Vec& y, Vec& dy) { dy = eval_f(model, y, u); };
      rk4_step(rhs, traj.times[i], h, x, xnext, work);
      x.swap(xnext);
    }
    report.rollout_states[i + 1] = x;
  }

  report.endpoint_error = (x - traj.states.back()).norm();
  for (std::size_t i = 0; i < traj.times.size(); ++i)
    report.max_deviation =
        std::max(report.max_deviation,
                 (report.rollout_states[i] - traj.states[i]).norm());

  std::vector<double> integrand(traj.times.size());
  for (std::size_t i = 0; i < traj.times.size(); ++i)
    integrand[i] = 1.0 + R.control_cost(traj.controls[i]);
  report.recomputed_cost = integrate_samples(traj.times, integrand);
  return report;
}

void write_rollout_csv(const std::string& path, const RolloutReport& report,
                       const ArtifactMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write artifact: " + path);
  out << "# seed = " << meta.seed << "\n";
  out << "# solver = " << meta.solver << "\n";
  out << "# scenario_digest = " << meta.scenario_digest << "\n";
  out << "# endpoint_error = " << format_g17(report.endpoint_error) << "\n";
  out << "# max_deviation = " << format_g17(report.max_deviation) << "\n";
  out << "# recomputed_cost = " << format_g17(report.recomputed_cost) << "\n";
  const int n = static_cast<int>(report.plan_states.front().size());
  out << "# columns = t";
  for (int i = 1; i <= n; ++i) out << ",x_plan" << i;
  for (int i = 1; i <= n; ++i) out << ",x_rollout" << i;
  out << "\n";
  for (std::size_t k = 0; k < report.times.size(); ++k) {
    out << format_g17(report.times[k]);
    for (int i = 0; i < n; ++i) out << "," << format_g17(report.plan_states[k][i]);
    for (int i = 0; i < n; ++i)
      out << "," << format_g17(report.rollout_states[k][i]);
    out << "\n";
  }
}

}  // namespace kinoplan
