#include "sotbt/scenario.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "bt_parse.hpp"
#include "sotbt/errors.hpp"
#include "yaml_util.hpp"

namespace sotbt {

double unit_draw(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

bool World::has_label(const std::string& l) const {
  return planes.count(l) || points.count(l) || lines.count(l) || objects.count(l);
}

std::optional<Eigen::Vector3d> World::locate(const std::string& label) const {
  if (auto it = points.find(label); it != points.end()) return it->second;
  if (auto it = objects.find(label); it != objects.end()) return it->second;
  return std::nullopt;
}

std::map<std::string, TaskSpec> Scenario::task_map() const {
  std::map<std::string, TaskSpec> out;
  for (const auto& t : tasks) out.emplace(t.id, t);
  return out;
}

std::unique_ptr<Node> Scenario::build_tree() const { return parse_tree(tree_yaml, task_map()); }

void Scenario::validate() const {
  if (!model) throw ValidationError("scenario has no model");
  if (initial_q.size() != model->dof()) {
    throw ValidationError("initial_q has " + std::to_string(initial_q.size()) + " entries, model has " +
                          std::to_string(model->dof()));
  }
  if (!(rates.control_dt > 0.0)) throw ValidationError("control_dt must be > 0");
  if (rates.ticks_ratio < 1) throw ValidationError("ticks_ratio must be >= 1");
  if (!(max_time > 0.0)) throw ValidationError("max_time must be > 0");
  std::set<std::string> ids;
  for (const auto& t : tasks) {
    t.validate();
    if (!ids.insert(t.id).second) throw ValidationError("duplicate task id '" + t.id + "'");
  }
  for (const auto& [id, b] : bindings) {
    if (!b.goal.empty() && !world.locate(b.goal)) throw ValidationError("task '" + id + "' goal '" + b.goal + "' is not a point or object");
    if (!b.plane.empty() && !world.planes.count(b.plane)) throw ValidationError("task '" + id + "' plane '" + b.plane + "' not in world");
    if (!b.line.empty() && !world.lines.count(b.line)) throw ValidationError("task '" + id + "' line '" + b.line + "' not in world");
  }
  for (const auto& [label, p] : world.planes) {
    if (std::abs(p.normal.norm() - 1.0) > 1e-9) throw ValidationError("plane '" + label + "' normal is not unit length");
  }
  for (const auto& [label, l] : world.lines) {
    if (std::abs(l.direction.norm() - 1.0) > 1e-9) throw ValidationError("line '" + label + "' direction is not unit length");
  }
  for (const auto& d : disturbances) {
    if (!d.at && !d.when_flag) throw ValidationError("disturbance needs 'at' or 'when'");
    if (d.delay < 0.0) throw ValidationError("disturbance delay must be >= 0");
    for (const auto& a : d.actions) {
      if (a.kind == DisturbanceAction::Kind::MoveGoal && !world.points.count(a.target)) {
        throw ValidationError("move_goal target '" + a.target + "' is not a world point");
      }
      if (a.kind == DisturbanceAction::Kind::MoveObject && !world.objects.count(a.target)) {
        throw ValidationError("move_object target '" + a.target + "' is not a world object");
      }
    }
  }
  for (const auto& r : randomize.regions) {
    if (r.lower.size() != model->dof() || r.upper.size() != model->dof()) {
      throw ValidationError("start region size does not match the model");
    }
  }
  for (const auto& [label, b] : randomize.points)
    if (!world.points.count(label)) throw ValidationError("randomized point '" + label + "' not in world");
  for (const auto& [label, b] : randomize.objects)
    if (!world.objects.count(label)) throw ValidationError("randomized object '" + label + "' not in world");
  build_tree();
}

namespace {

Box3 box_from(const YAML::Node& n, std::string_view what) {
  yaml::only_keys(n, {"lower", "upper"}, what);
  Box3 b{yaml::as_vec3(yaml::required(n, "lower", what), "lower"), yaml::as_vec3(yaml::required(n, "upper", what), "upper")};
  for (int i = 0; i < 3; ++i)
    if (b.lower(i) > b.upper(i)) yaml::fail(n, std::string(what) + " needs lower <= upper");
  return b;
}

Placement placement_from(const YAML::Node& n) {
  Placement p;
  if (n.IsSequence()) p.fixed = yaml::as_vec3(n, "position");
  else p.box = box_from(n, "placement box");
  return p;
}

Plane plane_from(const YAML::Node& n) {
  yaml::only_keys(n, {"normal", "offset", "margin"}, "plane");
  Plane p;
  p.normal = yaml::as_vec3(yaml::required(n, "normal", "plane"), "normal");
  p.offset = yaml::as_double(yaml::required(n, "offset", "plane"), "offset");
  if (n["margin"]) p.margin = yaml::as_double(n["margin"], "margin");
  return p;
}

Line line_from(const YAML::Node& n) {
  yaml::only_keys(n, {"p0", "direction"}, "line");
  return Line{yaml::as_vec3(yaml::required(n, "p0", "line"), "p0"),
              yaml::as_vec3(yaml::required(n, "direction", "line"), "direction")};
}

BlackboardValue bb_value(const YAML::Node& n) {
  if (n.IsSequence()) return Eigen::Vector3d(yaml::as_vec3(n, "blackboard value"));
  const std::string s = n.Scalar();
  if (s == "true" || s == "false") return s == "true";
  return yaml::as_double(n, "blackboard value");
}

World world_from(const YAML::Node& n) {
  yaml::only_keys(n, {"planes", "points", "lines", "objects", "blackboard"}, "world");
  World w;
  std::set<std::string> labels;
  auto claim = [&](const YAML::Node& key) {
    const std::string l = key.as<std::string>();
    if (!labels.insert(l).second) yaml::fail(key, "duplicate world label '" + l + "'");
    return l;
  };
  if (n["planes"]) {
    yaml::expect_map(n["planes"], "planes");
    for (const auto& kv : n["planes"]) w.planes[claim(kv.first)] = plane_from(kv.second);
  }
  if (n["points"]) {
    yaml::expect_map(n["points"], "points");
    for (const auto& kv : n["points"]) w.points[claim(kv.first)] = yaml::as_vec3(kv.second, "point");
  }
  if (n["lines"]) {
    yaml::expect_map(n["lines"], "lines");
    for (const auto& kv : n["lines"]) w.lines[claim(kv.first)] = line_from(kv.second);
  }
  if (n["objects"]) {
    yaml::expect_map(n["objects"], "objects");
    for (const auto& kv : n["objects"]) w.objects[claim(kv.first)] = yaml::as_vec3(kv.second, "object");
  }
  if (n["blackboard"]) {
    yaml::expect_map(n["blackboard"], "blackboard");
    for (const auto& kv : n["blackboard"]) w.blackboard.set(kv.first.as<std::string>(), bb_value(kv.second));
  }
  return w;
}

std::pair<TaskSpec, TaskBinding> task_from(const std::string& id, const YAML::Node& n, const World& world) {
  yaml::expect_map(n, "task");
  TaskSpec t;
  TaskBinding b;
  t.id = id;
  const std::string kind = yaml::as<std::string>(yaml::required(n, "kind", "task"), "kind");
  try {
    t.kind = task_kind_from_string(kind);
  } catch (const UnknownKind& e) {
    yaml::fail(n["kind"], e.what());
  }
  auto label_or = [&](const YAML::Node& v, std::string& label) -> bool {
    if (!v.IsScalar()) return false;
    label = v.as<std::string>();
    if (!world.has_label(label)) yaml::fail(v, "unknown world label '" + label + "'");
    return true;
  };

  switch (t.kind) {
    case TaskKind::PointReach: {
      yaml::only_keys(n, {"kind", "goal", "priority", "gain", "blocking"}, "PointReach task");
      const YAML::Node g = yaml::required(n, "goal", "task");
      PointGoal p;
      if (label_or(g, b.goal)) {
        if (!world.locate(b.goal)) yaml::fail(g, "goal '" + b.goal + "' must be a point or object");
        p.position = *world.locate(b.goal);
      } else {
        p.position = yaml::as_vec3(g, "goal");
      }
      t.params = p;
      break;
    }
    case TaskKind::PoseReach: {
      yaml::only_keys(n, {"kind", "goal", "rpy", "priority", "gain", "blocking"}, "PoseReach task");
      const YAML::Node g = yaml::required(n, "goal", "task");
      Pose p;
      if (label_or(g, b.goal)) {
        if (!world.locate(b.goal)) yaml::fail(g, "goal '" + b.goal + "' must be a point or object");
        p.position = *world.locate(b.goal);
      } else {
        p.position = yaml::as_vec3(g, "goal");
      }
      const Eigen::Vector3d rpy = n["rpy"] ? yaml::as_vec3(n["rpy"], "rpy") : Eigen::Vector3d::Zero();
      p.orientation = Eigen::Quaterniond(rpy_to_matrix(rpy));
      t.params = p;
      break;
    }
    case TaskKind::PlaneAvoid: {
      yaml::only_keys(n, {"kind", "plane", "priority", "gain", "blocking"}, "PlaneAvoid task");
      const YAML::Node g = yaml::required(n, "plane", "task");
      if (label_or(g, b.plane)) {
        if (!world.planes.count(b.plane)) yaml::fail(g, "'" + b.plane + "' is not a plane");
        t.params = world.planes.at(b.plane);
      } else {
        t.params = plane_from(g);
      }
      break;
    }
    case TaskKind::LineFollow: {
      yaml::only_keys(n, {"kind", "line", "priority", "gain", "blocking"}, "LineFollow task");
      const YAML::Node g = yaml::required(n, "line", "task");
      if (label_or(g, b.line)) {
        if (!world.lines.count(b.line)) yaml::fail(g, "'" + b.line + "' is not a line");
        t.params = world.lines.at(b.line);
      } else {
        t.params = line_from(g);
      }
      break;
    }
    case TaskKind::JointVelocityBox: {
      yaml::only_keys(n, {"kind", "lower", "upper", "position_limits", "priority", "gain"}, "JointVelocityBox task");
      VelocityBox box;
      if (n["lower"]) box.lower = yaml::as_vector(n["lower"], "lower");
      if (n["upper"]) box.upper = yaml::as_vector(n["upper"], "upper");
      if (n["position_limits"]) box.position_limits = yaml::as<bool>(n["position_limits"], "position_limits");
      t.params = box;
      break;
    }
  }
  if (n["priority"]) t.priority = yaml::as<int>(n["priority"], "priority");
  if (n["gain"]) {
    t.gain = n["gain"].IsSequence() ? yaml::as_vector(n["gain"], "gain")
                                    : Eigen::VectorXd::Constant(1, yaml::as_double(n["gain"], "gain"));
  }
  if (n["blocking"]) {
    const YAML::Node bn = n["blocking"];
    yaml::only_keys(bn, {"error", "time"}, "blocking");
    t.blocking = BlockingParams{yaml::as_double(yaml::required(bn, "error", "blocking"), "error"),
                                yaml::as_double(yaml::required(bn, "time", "blocking"), "time")};
  }
  try {
    t.validate();
  } catch (const ValidationError& e) {
    yaml::fail(n, e.what());
  }
  return {t, b};
}

DisturbanceEvent disturbance_from(const YAML::Node& n) {
  yaml::only_keys(n, {"at", "when", "delay", "actions"}, "disturbance");
  DisturbanceEvent d;
  if (n["at"]) d.at = yaml::as_double(n["at"], "at");
  if (n["when"]) {
    const YAML::Node w = n["when"];
    yaml::only_keys(w, {"flag", "equals"}, "when");
    d.when_flag = yaml::as<std::string>(yaml::required(w, "flag", "when"), "flag");
    if (w["equals"]) d.when_value = yaml::as<bool>(w["equals"], "equals");
  }
  if (d.at.has_value() == d.when_flag.has_value()) yaml::fail(n, "disturbance needs exactly one of 'at' or 'when'");
  if (n["delay"]) d.delay = yaml::as_double(n["delay"], "delay");
  const YAML::Node acts = yaml::required(n, "actions", "disturbance");
  yaml::expect_seq(acts, "actions");
  for (const auto& a : acts) {
    DisturbanceAction x;
    if (a["move_goal"] || a["move_object"]) {
      yaml::only_keys(a, {"move_goal", "move_object", "to"}, "action");
      x.kind = a["move_goal"] ? DisturbanceAction::Kind::MoveGoal : DisturbanceAction::Kind::MoveObject;
      x.target = yaml::as<std::string>(a["move_goal"] ? a["move_goal"] : a["move_object"], "target");
      x.to = placement_from(yaml::required(a, "to", "action"));
    } else if (a["set_flag"]) {
      yaml::only_keys(a, {"set_flag", "value"}, "action");
      x.kind = DisturbanceAction::Kind::SetFlag;
      x.target = yaml::as<std::string>(a["set_flag"], "flag");
      x.value = yaml::as<bool>(yaml::required(a, "value", "action"), "value");
    } else {
      yaml::fail(a, "action needs one of move_goal, move_object, set_flag");
    }
    d.actions.push_back(x);
  }
  return d;
}

std::shared_ptr<const ManipulatorModel> model_from(const YAML::Node& n, const std::filesystem::path& source) {
  if (n.IsMap()) {
    YAML::Emitter out;
    out << n;
    return std::make_shared<const ManipulatorModel>(parse_model(out.c_str()));
  }
  const std::string ref = yaml::as<std::string>(n, "model");
  std::vector<std::filesystem::path> candidates;
  if (!source.empty()) candidates.push_back(source.parent_path() / ref);
  candidates.emplace_back(ref);
  const char* env = std::getenv("SOTBT_DATA_DIR");
  const std::filesystem::path data = env ? env : SOTBT_DATA_DIR;
  candidates.push_back(data / "models" / (ref + ".yaml"));
  for (const auto& c : candidates) {
    std::error_code ec;
    if (std::filesystem::is_regular_file(c, ec)) return std::make_shared<const ManipulatorModel>(load_model(c));
  }
  yaml::fail(n, "model '" + ref + "' not found");
}

}  // namespace

Scenario parse_scenario(std::string_view text, const std::filesystem::path& source) {
  const YAML::Node root = yaml::load(text);
  yaml::only_keys(root, {"name", "description", "model", "world", "tasks", "tree", "disturbances", "run"}, "scenario");
  Scenario sc;
  sc.source = source;
  sc.name = root["name"] ? yaml::as<std::string>(root["name"], "name") : source.stem().string();
  if (root["description"]) sc.description = yaml::as<std::string>(root["description"], "description");
  sc.model = model_from(yaml::required(root, "model", "scenario"), source);
  if (root["world"]) sc.world = world_from(root["world"]);

  const YAML::Node tasks = yaml::required(root, "tasks", "scenario");
  yaml::expect_map(tasks, "tasks");
  for (const auto& kv : tasks) {
    const std::string id = kv.first.as<std::string>();
    if (sc.task_map().count(id)) yaml::fail(kv.first, "duplicate task id '" + id + "'");
    auto [t, b] = task_from(id, kv.second, sc.world);
    sc.tasks.push_back(t);
    sc.bindings[id] = b;
  }

  const YAML::Node tree = yaml::required(root, "tree", "scenario");
  {
    YAML::Emitter out;
    out << tree;
    sc.tree_yaml = out.c_str();
  }
  // Parse errors must point into this document, so build from the node itself.
  (void)tree_from_node(tree, sc.task_map());

  if (root["disturbances"]) {
    yaml::expect_seq(root["disturbances"], "disturbances");
    for (const auto& d : root["disturbances"]) sc.disturbances.push_back(disturbance_from(d));
  }

  const YAML::Node run = yaml::required(root, "run", "scenario");
  yaml::only_keys(run, {"initial_q", "control_dt", "ticks_ratio", "max_time", "seed", "randomize"}, "run");
  sc.initial_q = yaml::as_vector(yaml::required(run, "initial_q", "run"), "initial_q");
  if (run["control_dt"]) sc.rates.control_dt = yaml::as_double(run["control_dt"], "control_dt");
  if (run["ticks_ratio"]) sc.rates.ticks_ratio = yaml::as<int>(run["ticks_ratio"], "ticks_ratio");
  if (run["max_time"]) sc.max_time = yaml::as_double(run["max_time"], "max_time");
  if (run["seed"]) sc.seed = yaml::as<std::uint64_t>(run["seed"], "seed");
  if (run["randomize"]) {
    const YAML::Node r = run["randomize"];
    yaml::only_keys(r, {"regions", "points", "objects"}, "randomize");
    if (r["regions"]) {
      yaml::expect_seq(r["regions"], "regions");
      for (const auto& g : r["regions"]) {
        yaml::only_keys(g, {"lower", "upper"}, "region");
        sc.randomize.regions.push_back(StartRegion{yaml::as_vector(yaml::required(g, "lower", "region"), "lower"),
                                                   yaml::as_vector(yaml::required(g, "upper", "region"), "upper")});
      }
    }
    if (r["points"]) {
      yaml::expect_map(r["points"], "points");
      for (const auto& kv : r["points"]) sc.randomize.points[kv.first.as<std::string>()] = box_from(kv.second, "point box");
    }
    if (r["objects"]) {
      yaml::expect_map(r["objects"], "objects");
      for (const auto& kv : r["objects"]) sc.randomize.objects[kv.first.as<std::string>()] = box_from(kv.second, "object box");
    }
  }
  sc.validate();
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file '" + path.string() + "'", 0, 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path);
}

std::vector<ScenarioInfo> list_scenarios(const std::filesystem::path& dir) {
  std::vector<ScenarioInfo> out;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.path().extension() != ".yaml") continue;
    ScenarioInfo info{entry.path().stem().string(), "", entry.path()};
    try {
      const YAML::Node root = YAML::LoadFile(entry.path().string());
      if (root["name"]) info.name = root["name"].as<std::string>();
      if (root["description"]) info.description = root["description"].as<std::string>();
    } catch (const YAML::Exception&) {
      info.description = "(unreadable)";
    }
    out.push_back(info);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

}  // namespace sotbt
