#include "bt_parse.hpp"

#include "sotbt/errors.hpp"
#include "yaml_util.hpp"

namespace sotbt {

namespace {

const std::map<std::string, NodeKind> kControl{
    {"Sequence", NodeKind::Sequence},       {"Fallback", NodeKind::Fallback},
    {"Parallel", NodeKind::Parallel},       {"SoTSequence", NodeKind::SoTSequence},
    {"SoTFallback", NodeKind::SoTFallback}, {"SoTParallel", NodeKind::SoTParallel},
};

const std::map<std::string, DecoratorPolicy> kDecorators{
    {"Inverter", DecoratorPolicy::Inverter},
    {"ForceSuccess", DecoratorPolicy::ForceSuccess},
    {"RepeatUntilFailure", DecoratorPolicy::RepeatUntilFailure},
    {"Retry", DecoratorPolicy::Retry},
};

struct Builder {
  const std::map<std::string, TaskSpec>& tasks;
  int counter = 0;

  std::string id_for(const YAML::Node& n, const std::string& fallback) {
    ++counter;
    if (n["id"]) return yaml::as<std::string>(n["id"], "node id");
    return fallback;
  }

  std::unique_ptr<Node> build(const YAML::Node& n) {
    yaml::expect_map(n, "tree node");
    const std::string type = yaml::as<std::string>(yaml::required(n, "type", "tree node"), "node type");

    if (auto it = kControl.find(type); it != kControl.end()) {
      const bool parallel = it->second == NodeKind::Parallel || it->second == NodeKind::SoTParallel;
      if (parallel) yaml::only_keys(n, {"type", "id", "threshold", "children"}, type);
      else yaml::only_keys(n, {"type", "id", "children"}, type);
      const int m = parallel && n["threshold"] ? yaml::as<int>(n["threshold"], "threshold") : 0;
      if (parallel && n["threshold"] && m == 0) yaml::fail(n["threshold"], "parallel threshold must be >= 1");
      auto node = std::make_unique<ControlNode>(id_for(n, type + std::to_string(counter + 1)), it->second, m);
      const YAML::Node kids = yaml::required(n, "children", type);
      yaml::expect_seq(kids, "children");
      for (const auto& k : kids) node->add(build(k));
      return node;
    }
    if (auto it = kDecorators.find(type); it != kDecorators.end()) {
      if (it->second == DecoratorPolicy::Retry) yaml::only_keys(n, {"type", "id", "attempts", "child"}, type);
      else yaml::only_keys(n, {"type", "id", "child"}, type);
      const int attempts = n["attempts"] ? yaml::as<int>(n["attempts"], "attempts") : 2;
      auto node = std::make_unique<DecoratorNode>(id_for(n, type + std::to_string(counter + 1)), it->second, attempts);
      node->add(build(yaml::required(n, "child", type)));
      return node;
    }
    if (type == "Condition") {
      yaml::only_keys(n, {"type", "id", "key"}, type);
      const std::string key = yaml::as<std::string>(yaml::required(n, "key", type), "condition key");
      return std::make_unique<ConditionNode>(id_for(n, key + "?"), key);
    }
    if (type == "BlockingAction" || type == "NonBlockingAction") {
      yaml::only_keys(n, {"type", "id", "task", "on_set", "on_success"}, type);
      const YAML::Node tn = yaml::required(n, "task", type);
      const std::string tid = yaml::as<std::string>(tn, "task id");
      auto t = tasks.find(tid);
      if (t == tasks.end()) yaml::fail(tn, "unknown task '" + tid + "'");
      const std::vector<Effect> on_set = n["on_set"] ? effects_from_node(n["on_set"]) : std::vector<Effect>{};
      const std::vector<Effect> on_success =
          n["on_success"] ? effects_from_node(n["on_success"]) : std::vector<Effect>{};
      if (type == "NonBlockingAction" && !on_success.empty()) {
        yaml::fail(n["on_success"], "non-blocking actions have no on_success effects");
      }
      return std::make_unique<ActionNode>(id_for(n, tid), t->second, type == "BlockingAction", on_set, on_success);
    }
    yaml::fail(n["type"], "unknown node type '" + type + "'");
  }
};

}  // namespace

std::vector<Effect> effects_from_node(const YAML::Node& node) {
  yaml::expect_seq(node, "effects");
  std::vector<Effect> out;
  for (const auto& e : node) {
    yaml::expect_map(e, "effect");
    Effect fx;
    if (e["set"]) {
      yaml::only_keys(e, {"set", "value"}, "effect");
      fx.kind = Effect::Kind::SetFlag;
      fx.target = yaml::as<std::string>(e["set"], "flag");
      fx.value = e["value"] ? yaml::as<bool>(e["value"], "flag value") : true;
    } else if (e["attach"]) {
      yaml::only_keys(e, {"attach"}, "effect");
      fx.kind = Effect::Kind::Attach;
      fx.target = yaml::as<std::string>(e["attach"], "object");
    } else if (e["detach"]) {
      yaml::only_keys(e, {"detach"}, "effect");
      fx.kind = Effect::Kind::Detach;
      fx.target = yaml::as<std::string>(e["detach"], "object");
    } else {
      yaml::fail(e, "effect needs one of set, attach, detach");
    }
    out.push_back(fx);
  }
  return out;
}

std::unique_ptr<Node> tree_from_node(const YAML::Node& node, const std::map<std::string, TaskSpec>& tasks) {
  Builder b{tasks};
  auto root = b.build(node);
  validate_tree(*root);
  return root;
}

std::unique_ptr<Node> parse_tree(std::string_view yaml_text, const std::map<std::string, TaskSpec>& tasks) {
  return tree_from_node(yaml::load(yaml_text), tasks);
}

}  // namespace sotbt
