#pragma once

#include <map>
#include <memory>
#include <string>

#include "kinoplan/planner.hpp"

namespace kinoplan {

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(int line, const std::string& msg)
      : std::runtime_error("scenario line " + std::to_string(line) + ": " + msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Everything one planning run needs, parsed from a scenario file.
struct Scenario {
  std::string name;
  std::string system_name;
  std::map<std::string, double> system_params;
  std::shared_ptr<const SystemModel> model;
  CostWeights R;
  Vec x_init;
  World world;
  PlannerConfig planner;
  std::string digest;  // FNV-1a of the file bytes, 16 hex digits
};

Scenario parse_scenario_file(const std::string& path);
Scenario parse_scenario_text(const std::string& text, const std::string& name);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace kinoplan
