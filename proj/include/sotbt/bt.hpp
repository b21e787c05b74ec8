#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "sotbt/sot_runtime.hpp"
#include "sotbt/tasks.hpp"

namespace sotbt {

enum class TickStatus { Success, Failure, Running };
std::string_view to_string(TickStatus s);

using BlackboardValue = std::variant<bool, double, Eigen::Vector3d>;

class Blackboard {
public:
  void set(const std::string& key, BlackboardValue value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  /// Throws UnsetBlackboardKey, or ValidationError on a type mismatch.
  bool get_bool(const std::string& key) const;
  double get_number(const std::string& key) const;
  Eigen::Vector3d get_vector(const std::string& key) const;
  const std::map<std::string, BlackboardValue>& values() const { return values_; }

  bool operator==(const Blackboard& o) const { return values_ == o.values_; }

private:
  const BlackboardValue& at(const std::string& key) const;
  std::map<std::string, BlackboardValue> values_;
};

/// Side effect attached to an action: on first set, or on Success.
struct Effect {
  enum class Kind { SetFlag, Attach, Detach };
  Kind kind = Kind::SetFlag;
  std::string target;  // blackboard key or object label
  bool value = true;   // SetFlag only
};

/// What the tree needs from the world while ticking. The default resolves
/// nothing and has no objects.
class Environment {
public:
  virtual ~Environment() = default;
  /// Task as it should be set now (e.g. goals bound to moving world points).
  virtual TaskSpec resolve(const TaskSpec& spec) const { return spec; }
  /// ||e|| at the current robot state.
  virtual double error_norm(const TaskSpec& spec) const = 0;
  /// Returns false when the object cannot be grabbed.
  virtual bool attach(const std::string&) { return false; }
  virtual void detach(const std::string&) {}
};

/// Per-tick node statuses; 'H' marks a halt.
struct TickTrace {
  struct Event {
    std::string node;
    char status;
  };
  std::vector<Event> events;
  std::vector<std::string> notes;
};

struct TickContext {
  TaskStack& stack;
  Blackboard& blackboard;
  double now = 0.0;
  Environment* env = nullptr;
  TickTrace* trace = nullptr;
};

enum class NodeKind {
  Sequence,
  Fallback,
  Parallel,
  Decorator,
  Condition,
  NonBlockingAction,
  BlockingAction,
  SoTSequence,
  SoTFallback,
  SoTParallel,
  Custom,  // test leaves and other extensions
};
std::string_view to_string(NodeKind k);
bool is_sot(NodeKind k);

class Node {
public:
  Node(std::string id, NodeKind kind) : id_(std::move(id)), kind_(kind) {}
  virtual ~Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  const std::string& id() const { return id_; }
  NodeKind kind() const { return kind_; }
  const std::vector<std::unique_ptr<Node>>& children() const { return children_; }
  Node& add(std::unique_ptr<Node> child);

  TickStatus tick(TickContext& ctx);
  /// Stops a Running node and its Running descendants. No-op otherwise.
  void halt(TickContext& ctx);
  bool running() const { return last_ == TickStatus::Running; }
  std::optional<TickStatus> last_status() const { return last_; }

protected:
  virtual TickStatus do_tick(TickContext& ctx) = 0;
  virtual void do_halt(TickContext& ctx);
  /// Halt every Running child from index `from` on.
  void halt_children(TickContext& ctx, std::size_t from = 0);

  std::vector<std::unique_ptr<Node>> children_;

private:
  std::string id_;
  NodeKind kind_;
  std::optional<TickStatus> last_;
};

class ActionNode;

/// Shared removal bookkeeping for the SoT-Control variants.
class ControlNode : public Node {
public:
  ControlNode(std::string id, NodeKind kind, int threshold = 0) : Node(std::move(id), kind), threshold_(threshold) {}
  /// Parallel success threshold M (0 = all children).
  int threshold() const { return threshold_ != 0 ? threshold_ : static_cast<int>(children_.size()); }
  const std::vector<std::string>& owned_tasks() const { return owned_; }

protected:
  TickStatus do_tick(TickContext& ctx) override;
  void do_halt(TickContext& ctx) override;

private:
  TickStatus tick_children(TickContext& ctx);
  void remove_owned(TickContext& ctx);
  int threshold_;
  std::vector<std::string> owned_;  // X_C
};

enum class DecoratorPolicy { Inverter, ForceSuccess, RepeatUntilFailure, Retry };
std::string_view to_string(DecoratorPolicy p);

class DecoratorNode : public Node {
public:
  DecoratorNode(std::string id, DecoratorPolicy policy, int attempts = 2)
      : Node(std::move(id), NodeKind::Decorator), policy_(policy), attempts_(attempts) {}
  DecoratorPolicy policy() const { return policy_; }
  int attempts() const { return attempts_; }
  /// Retry: child failures absorbed so far in the current activation.
  int failures() const { return failures_; }

protected:
  TickStatus do_tick(TickContext& ctx) override;
  void do_halt(TickContext& ctx) override;

private:
  DecoratorPolicy policy_;
  int attempts_;
  int failures_ = 0;
};

class ConditionNode : public Node {
public:
  ConditionNode(std::string id, std::string key) : Node(std::move(id), NodeKind::Condition), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

protected:
  TickStatus do_tick(TickContext& ctx) override;

private:
  std::string key_;
};

class ActionNode : public Node {
public:
  ActionNode(std::string id, TaskSpec task, bool blocking, std::vector<Effect> on_set = {},
             std::vector<Effect> on_success = {});
  const TaskSpec& task() const { return task_; }
  bool blocking() const { return kind() == NodeKind::BlockingAction; }
  /// True when the most recent tick left the task in the stack.
  bool task_set_this_tick() const { return set_now_; }

protected:
  TickStatus do_tick(TickContext& ctx) override;
  void do_halt(TickContext& ctx) override;

private:
  bool apply(const std::vector<Effect>& effects, TickContext& ctx);
  TaskSpec task_;
  std::vector<Effect> on_set_;
  std::vector<Effect> on_success_;
  bool set_now_ = false;
};

/// Checks the structural invariants; throws ValidationError naming the violated one.
void validate_tree(const Node& root);

/// Every node, depth first.
std::vector<const Node*> flatten(const Node& root);

/// Tree section of a scenario document. Action nodes refer to `tasks` by id.
std::unique_ptr<Node> parse_tree(std::string_view yaml_text, const std::map<std::string, TaskSpec>& tasks);

}  // namespace sotbt
