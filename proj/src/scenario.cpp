#include "kinoplan/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace kinoplan {

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

double parse_num(const std::string& s, int line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ScenarioError(line, "expected a number, got '" + s + "'");
  }
}

Vec parse_vec(const std::string& s, int line) {
  const auto toks = tokens(s);
  Vec v(static_cast<int>(toks.size()));
  for (std::size_t i = 0; i < toks.size(); ++i)
    v[static_cast<int>(i)] = parse_num(toks[i], line);
  return v;
}

struct RawLine {
  int number;
  std::string key;    // empty for obstacle primitive lines
  std::string value;  // full text for primitives
};

}  // namespace

Scenario parse_scenario_text(const std::string& text, const std::string& name) {
  std::map<std::string, std::vector<RawLine>> sections;
  {
    std::istringstream in(text);
    std::string line;
    std::string section;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ScenarioError(number, "malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        sections[section];
        continue;
      }
      if (section.empty())
        throw ScenarioError(number, "content before any [section]");
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        sections[section].push_back({number, "", line});
      } else {
        sections[section].push_back(
            {number, trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
      }
    }
  }

  auto section = [&](const std::string& s) -> const std::vector<RawLine>& {
    auto it = sections.find(s);
    if (it == sections.end()) throw ScenarioError(0, "missing section [" + s + "]");
    return it->second;
  };
  auto find_key = [&](const std::string& sec,
                      const std::string& key) -> const RawLine* {
    auto it = sections.find(sec);
    if (it == sections.end()) return nullptr;
    for (const auto& l : it->second)
      if (l.key == key) return &l;
    return nullptr;
  };

  Scenario sc;
  sc.name = name;
  sc.digest = [&] {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text)));
    return std::string(buf);
  }();

  // [system]
  std::optional<Vec> control_limit;
  for (const auto& l : section("system")) {
    if (l.key == "name") {
      sc.system_name = l.value;
    } else if (l.key == "control_limit") {
      control_limit = parse_vec(l.value, l.number);
    } else if (!l.key.empty()) {
      sc.system_params[l.key] = parse_num(l.value, l.number);
    } else {
      throw ScenarioError(l.number, "expected key = value");
    }
  }
  if (sc.system_name.empty())
    throw ScenarioError(0, "[system] must set name");
  try {
    sc.model = make_system(sc.system_name, sc.system_params);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(0, e.what());
  }
  const int n = sc.model->state_dim();
  const int m = sc.model->control_dim();

  // [cost]
  {
    const RawLine* r = find_key("cost", "R");
    if (!r) throw ScenarioError(0, "[cost] must set R");
    const auto toks = tokens(r->value);
    if (toks.empty() || toks[0] != "diag")
      throw ScenarioError(r->number, "R must be 'diag v1 ... vm'");
    if (static_cast<int>(toks.size()) - 1 != m)
      throw ScenarioError(r->number, "R diag needs " + std::to_string(m) +
                                          " entries for this system");
    Vec d(m);
    for (int i = 0; i < m; ++i) d[i] = parse_num(toks[i + 1], r->number);
    try {
      sc.R = CostWeights::diagonal(d);
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(r->number, e.what());
    }
  }

  // [init]
  {
    const RawLine* r = find_key("init", "x");
    if (!r) throw ScenarioError(0, "[init] must set x");
    sc.x_init = parse_vec(r->value, r->number);
    if (sc.x_init.size() != n)
      throw ScenarioError(r->number, "init state needs " + std::to_string(n) +
                                         " coordinates");
  }

  // [goal]
  {
    const RawLine* lo = find_key("goal", "lo");
    const RawLine* hi = find_key("goal", "hi");
    if (!lo || !hi) throw ScenarioError(0, "[goal] must set lo and hi");
    sc.world.goal.lower = parse_vec(lo->value, lo->number);
    sc.world.goal.upper = parse_vec(hi->value, hi->number);
    if (sc.world.goal.lower.size() != n || sc.world.goal.upper.size() != n)
      throw ScenarioError(lo->number, "goal bounds need " + std::to_string(n) +
                                          " coordinates");
    for (int i = 0; i < n; ++i)
      if (sc.world.goal.lower[i] > sc.world.goal.upper[i])
        throw ScenarioError(lo->number, "goal lower > upper at coordinate " +
                                            std::to_string(i));
  }

  // [sampling]
  {
    const RawLine* lo = find_key("sampling", "lo");
    const RawLine* hi = find_key("sampling", "hi");
    Vec dlo, dhi;
    sc.model->default_bounds(dlo, dhi);
    sc.world.sampler.lower = lo ? parse_vec(lo->value, lo->number) : dlo;
    sc.world.sampler.upper = hi ? parse_vec(hi->value, hi->number) : dhi;
    if (sc.world.sampler.lower.size() != n || sc.world.sampler.upper.size() != n)
      throw ScenarioError(lo ? lo->number : 0,
                          "sampling bounds need " + std::to_string(n) +
                              " coordinates");
    for (int i = 0; i < n; ++i)
      if (!(sc.world.sampler.lower[i] < sc.world.sampler.upper[i]))
        throw ScenarioError(lo ? lo->number : 0,
                            "empty sampling box at coordinate " + std::to_string(i));
    // Reject a goal with no overlap with the sampling box (angle
    // coordinates excepted: their chart is periodic).
    const auto& angles = sc.model->angle_coordinates();
    for (int i = 0; i < n; ++i) {
      if (std::find(angles.begin(), angles.end(), i) != angles.end()) continue;
      if (sc.world.goal.upper[i] < sc.world.sampler.lower[i] ||
          sc.world.goal.lower[i] > sc.world.sampler.upper[i])
        throw ScenarioError(0, "goal region lies outside the sampling box at "
                               "coordinate " +
                                   std::to_string(i));
    }
    if (const RawLine* gb = find_key("sampling", "goal_bias")) {
      const double v = parse_num(gb->value, gb->number);
      if (v < 0.0 || v >= 1.0)
        throw ScenarioError(gb->number, "goal_bias must be in [0, 1)");
      sc.world.sampler.goal_bias = v;
    }
  }

  // [obstacles] (optional)
  {
    ObstacleSet& obs = sc.world.obstacles;
    if (sc.system_name == "diffdrive") {
      obs.projection = WorkspaceProjection::PlanarXY;
      obs.proj_x = 0;
      obs.proj_y = 1;
    } else if (sc.system_name == "scara") {
      obs.projection = WorkspaceProjection::ScaraFk;
      const auto& p = static_cast<const Scara*>(sc.model.get())->params();
      obs.l1 = p.l1;
      obs.l2 = p.l2;
      obs.arm_height = p.arm_height;
    }
    if (sections.count("obstacles")) {
      for (const auto& l : section("obstacles")) {
        if (l.key == "ds") {
          obs.ds = parse_num(l.value, l.number);
          if (!(obs.ds > 0.0)) throw ScenarioError(l.number, "ds must be > 0");
          continue;
        }
        if (l.key == "projection") {
          if (l.value == "none") obs.projection = WorkspaceProjection::None;
          else if (l.value == "xy") obs.projection = WorkspaceProjection::PlanarXY;
          else if (l.value == "scara") obs.projection = WorkspaceProjection::ScaraFk;
          else throw ScenarioError(l.number, "projection must be none|xy|scara");
          continue;
        }
        if (!l.key.empty())
          throw ScenarioError(l.number, "unknown key '" + l.key + "' in [obstacles]");
        const auto toks = tokens(l.value);
        if (toks.empty()) continue;
        if (toks[0] == "box") {
          if (toks.size() != 5 && toks.size() != 7)
            throw ScenarioError(l.number, "box needs x0 x1 y0 y1 [z0 z1]");
          BoxObstacle b{};
          b.x0 = parse_num(toks[1], l.number);
          b.x1 = parse_num(toks[2], l.number);
          b.y0 = parse_num(toks[3], l.number);
          b.y1 = parse_num(toks[4], l.number);
          if (toks.size() == 7) {
            b.z0 = parse_num(toks[5], l.number);
            b.z1 = parse_num(toks[6], l.number);
          }
          if (b.x0 >= b.x1 || b.y0 >= b.y1 || (b.z0 && *b.z0 >= *b.z1))
            throw ScenarioError(l.number, "box extents must be positive");
          obs.boxes.push_back(b);
        } else if (toks[0] == "circle") {
          if (toks.size() != 4)
            throw ScenarioError(l.number, "circle needs cx cy r");
          CircleObstacle c{};
          c.cx = parse_num(toks[1], l.number);
          c.cy = parse_num(toks[2], l.number);
          c.r = parse_num(toks[3], l.number);
          if (!(c.r > 0.0)) throw ScenarioError(l.number, "circle radius must be > 0");
          obs.circles.push_back(c);
        } else {
          throw ScenarioError(l.number, "unknown primitive '" + toks[0] + "'");
        }
      }
    }
  }

  // [planner]
  {
    PlannerConfig& p = sc.planner;
    p.control_limit = control_limit;
    if (control_limit && control_limit->size() != m)
      throw ScenarioError(0, "control_limit needs " + std::to_string(m) + " entries");
    if (sections.count("planner")) {
      for (const auto& l : section("planner")) {
        if (l.key == "nodes") p.max_nodes = static_cast<int>(parse_num(l.value, l.number));
        else if (l.key == "max_iterations")
          p.max_iterations = static_cast<long>(parse_num(l.value, l.number));
        else if (l.key == "eta") p.eta = parse_num(l.value, l.number);
        else if (l.key == "gamma") p.gamma_rrt = parse_num(l.value, l.number);
        else if (l.key == "seed")
          p.seed = static_cast<std::uint64_t>(parse_num(l.value, l.number));
        else if (l.key == "metric_dt") p.metric.dt = parse_num(l.value, l.number);
        else if (l.key == "tau_max") p.metric.tau_max = parse_num(l.value, l.number);
        else if (l.key == "solver") {
          if (l.value == "sa") p.solver = EdgeSolver::Sa;
          else if (l.value == "ve") p.solver = EdgeSolver::Ve;
          else if (l.value == "linearized") p.solver = EdgeSolver::LinearizedBaseline;
          else throw ScenarioError(l.number, "solver must be sa|ve|linearized");
        } else {
          throw ScenarioError(l.number, "unknown key '" + l.key + "' in [planner]");
        }
      }
    }
    if (p.max_nodes < 1) throw ScenarioError(0, "planner nodes must be >= 1");
    if (!(p.eta > 0.0)) throw ScenarioError(0, "planner eta must be > 0");
    if (!(p.gamma_rrt > 0.0)) throw ScenarioError(0, "planner gamma must be > 0");
    if (!(p.metric.dt > 0.0)) throw ScenarioError(0, "metric_dt must be > 0");
  }

  // [solver]
  {
    SolverConfig& s = sc.planner.tpbvp;
    if (sections.count("solver")) {
      for (const auto& l : section("solver")) {
        if (l.key == "max_iters") s.max_iters = static_cast<int>(parse_num(l.value, l.number));
        else if (l.key == "boundary_tol") s.boundary_tol = parse_num(l.value, l.number);
        else if (l.key == "hamiltonian_tol") s.hamiltonian_tol = parse_num(l.value, l.number);
        else if (l.key == "step_size") s.step_size = parse_num(l.value, l.number);
        else if (l.key == "newton_damping") s.newton_damping = parse_num(l.value, l.number);
        else if (l.key == "dt") s.dt = parse_num(l.value, l.number);
        else if (l.key == "tau_min") s.tau_min = parse_num(l.value, l.number);
        else if (l.key == "tau_max") s.tau_max = parse_num(l.value, l.number);
        else throw ScenarioError(l.number, "unknown key '" + l.key + "' in [solver]");
      }
    }
    if (s.max_iters < 1) throw ScenarioError(0, "solver max_iters must be >= 1");
    if (!(s.boundary_tol > 0.0 && s.hamiltonian_tol > 0.0 && s.dt > 0.0))
      throw ScenarioError(0, "solver tolerances and dt must be > 0");
    s.tau_min = std::max(s.tau_min, s.dt);
    sc.planner.tpbvp = s;
  }

  sc.world.sampler.seed = sc.planner.seed;
  return sc;
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(0, "cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario_text(buf.str(), path);
}

}  // namespace kinoplan
