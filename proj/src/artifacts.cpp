#include "kinoplan/artifacts.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace kinoplan {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string solver_name(EdgeSolver solver) {
  switch (solver) {
    case EdgeSolver::Sa: return "sa";
    case EdgeSolver::Ve: return "ve";
    case EdgeSolver::LinearizedBaseline: return "linearized";
  }
  return "?";
}

namespace {

void write_meta(std::ostream& out, const ArtifactMeta& meta) {
  out << "# seed = " << meta.seed << "\n";
  out << "# solver = " << meta.solver << "\n";
  out << "# scenario_digest = " << meta.scenario_digest << "\n";
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write artifact: " + path);
  return out;
}

}  // namespace

void write_trajectory_csv(const std::string& path, const TrajectorySegment& traj,
                          int state_dim, int control_dim, const ArtifactMeta& meta) {
  std::ofstream out = open_out(path);
  write_meta(out, meta);
  out << "# cost = " << format_g17(traj.cost) << "\n";
  out << "# duration = " << format_g17(traj.duration) << "\n";
  out << "# columns = t";
  for (int i = 1; i <= state_dim; ++i) out << ",x" << i;
  for (int i = 1; i <= control_dim; ++i) out << ",u" << i;
  out << "\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out << format_g17(traj.times[k]);
    for (int i = 0; i < state_dim; ++i) out << "," << format_g17(traj.states[k][i]);
    for (int i = 0; i < control_dim; ++i) {
      const double u =
          traj.controls[k].size() == control_dim ? traj.controls[k][i] : 0.0;
      out << "," << format_g17(u);
    }
    out << "\n";
  }
}

void write_tree_csv(const std::string& path, const PlanTree& tree,
                    const ArtifactMeta& meta) {
  std::ofstream out = open_out(path);
  write_meta(out, meta);
  const int n = tree.nodes.empty() ? 0 : static_cast<int>(tree.nodes[0].state.size());
  out << "# columns = node_id,parent_id,cost";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  out << "\n";
  for (const PlanNode& node : tree.nodes) {
    out << node.id << "," << node.parent << "," << format_g17(node.cost_to_come);
    for (int i = 0; i < n; ++i) out << "," << format_g17(node.state[i]);
    out << "\n";
  }
}

void write_summary(const std::string& path, const SummaryData& data,
                   const ArtifactMeta& meta) {
  std::ofstream out = open_out(path);
  write_meta(out, meta);
  out << "best_cost = " << format_g17(data.best_cost) << "\n";
  out << "nodes = " << data.node_count << "\n";
  out << "iterations = " << data.stats.iterations << "\n";
  out << "steer_failures = " << data.stats.steer_failures << "\n";
  out << "edge_attempts = " << data.stats.edge_attempts << "\n";
  out << "edge_converged = " << data.stats.edge_converged << "\n";
  out << "collisions = " << data.stats.collisions << "\n";
  out << "rewires = " << data.stats.rewires << "\n";
  out << "control_limit_violations = " << data.stats.control_limit_violations
      << "\n";
}

double read_trajectory_cost_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory artifact: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("# cost = ", 0) == 0) return std::stod(line.substr(9));
    if (!line.empty() && line[0] != '#') break;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

TrajectoryData read_trajectory_csv(const std::string& path, int state_dim,
                                   int control_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory artifact: " + path);
  TrajectoryData data;
  std::string line;
  int number = 0;
  const int want = 1 + state_dim + control_dim;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (...) {
        throw std::runtime_error(path + ":" + std::to_string(number) +
                                 ": bad number '" + cell + "'");
      }
    }
    if (static_cast<int>(vals.size()) != want)
      throw std::runtime_error(path + ":" + std::to_string(number) + ": expected " +
                               std::to_string(want) + " columns, got " +
                               std::to_string(vals.size()));
    data.times.push_back(vals[0]);
    Vec x(state_dim), u(control_dim);
    for (int i = 0; i < state_dim; ++i) x[i] = vals[1 + i];
    for (int i = 0; i < control_dim; ++i) u[i] = vals[1 + state_dim + i];
    data.states.push_back(std::move(x));
    data.controls.push_back(std::move(u));
  }
  if (data.times.empty())
    throw std::runtime_error(path + ": no trajectory rows");
  return data;
}

}  // namespace kinoplan
