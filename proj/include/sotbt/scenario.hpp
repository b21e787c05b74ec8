#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sotbt/bt.hpp"
#include "sotbt/kinematics.hpp"
#include "sotbt/tasks.hpp"

namespace sotbt {

struct Box3 {
  Eigen::Vector3d lower = Eigen::Vector3d::Zero();
  Eigen::Vector3d upper = Eigen::Vector3d::Zero();
};

/// A fixed point, or a uniform draw from a box.
struct Placement {
  std::optional<Eigen::Vector3d> fixed;
  std::optional<Box3> box;
};

struct World {
  std::map<std::string, Plane> planes;
  std::map<std::string, Eigen::Vector3d> points;
  std::map<std::string, Line> lines;
  std::map<std::string, Eigen::Vector3d> objects;  // positions only
  Blackboard blackboard;                            // seeds

  bool has_label(const std::string& label) const;
  /// Point or object position.
  std::optional<Eigen::Vector3d> locate(const std::string& label) const;
};

/// World labels a task is bound to; resolved every time the task is set.
struct TaskBinding {
  std::string goal;   // point or object (PointReach, PoseReach)
  std::string plane;  // PlaneAvoid
  std::string line;   // LineFollow
};

struct DisturbanceAction {
  enum class Kind { MoveGoal, MoveObject, SetFlag };
  Kind kind = Kind::SetFlag;
  std::string target;
  Placement to;
  bool value = false;
};

struct DisturbanceEvent {
  std::optional<double> at;    // simulation time trigger
  std::optional<std::string> when_flag;  // fires once this blackboard bool is true
  bool when_value = true;
  double delay = 0.0;
  std::vector<DisturbanceAction> actions;
};

struct StartRegion {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct Randomization {
  std::vector<StartRegion> regions;  // trial i starts in regions[i % size]
  std::map<std::string, Box3> points;
  std::map<std::string, Box3> objects;

  bool empty() const { return regions.empty() && points.empty() && objects.empty(); }
};

struct Rates {
  double control_dt = 1e-3;
  int ticks_ratio = 20;  // control steps per BT tick
};

struct Scenario {
  std::string name;
  std::string description;
  std::filesystem::path source;
  std::shared_ptr<const ManipulatorModel> model;
  Eigen::VectorXd initial_q;
  World world;
  std::vector<TaskSpec> tasks;  // declaration order
  std::map<std::string, TaskBinding> bindings;
  std::string tree_yaml;
  std::vector<DisturbanceEvent> disturbances;
  Rates rates;
  double max_time = 30.0;
  std::uint64_t seed = 1;
  Randomization randomize;

  std::map<std::string, TaskSpec> task_map() const;
  /// Fresh node state every call.
  std::unique_ptr<Node> build_tree() const;
  /// Throws ValidationError.
  void validate() const;
};

/// Throws ParseError (document shape) or ValidationError (semantic invariants).
Scenario parse_scenario(std::string_view text, const std::filesystem::path& source = {});
Scenario load_scenario(const std::filesystem::path& path);

/// Shipped scenario files (name, description, path), sorted by name.
struct ScenarioInfo {
  std::string name;
  std::string description;
  std::filesystem::path path;
};
std::vector<ScenarioInfo> list_scenarios(const std::filesystem::path& dir);

/// Portable uniform draw in [0, 1) from a 64-bit Mersenne twister.
double unit_draw(std::uint64_t bits);

}  // namespace sotbt
