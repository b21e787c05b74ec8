#include "sotbt/bt.hpp"

#include <algorithm>
#include <set>

#include "sotbt/errors.hpp"

namespace sotbt {

std::string_view to_string(TickStatus s) {
  switch (s) {
    case TickStatus::Success: return "Success";
    case TickStatus::Failure: return "Failure";
    case TickStatus::Running: return "Running";
  }
  return "?";
}

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Sequence: return "Sequence";
    case NodeKind::Fallback: return "Fallback";
    case NodeKind::Parallel: return "Parallel";
    case NodeKind::Decorator: return "Decorator";
    case NodeKind::Condition: return "Condition";
    case NodeKind::NonBlockingAction: return "NonBlockingAction";
    case NodeKind::BlockingAction: return "BlockingAction";
    case NodeKind::SoTSequence: return "SoTSequence";
    case NodeKind::SoTFallback: return "SoTFallback";
    case NodeKind::SoTParallel: return "SoTParallel";
    case NodeKind::Custom: return "Custom";
  }
  return "?";
}

std::string_view to_string(DecoratorPolicy p) {
  switch (p) {
    case DecoratorPolicy::Inverter: return "Inverter";
    case DecoratorPolicy::ForceSuccess: return "ForceSuccess";
    case DecoratorPolicy::RepeatUntilFailure: return "RepeatUntilFailure";
    case DecoratorPolicy::Retry: return "Retry";
  }
  return "?";
}

bool is_sot(NodeKind k) {
  return k == NodeKind::SoTSequence || k == NodeKind::SoTFallback || k == NodeKind::SoTParallel;
}

// ---- blackboard

const BlackboardValue& Blackboard::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UnsetBlackboardKey(key);
  return it->second;
}

bool Blackboard::get_bool(const std::string& key) const {
  const auto* v = std::get_if<bool>(&at(key));
  if (!v) throw ValidationError("blackboard key '" + key + "' is not a boolean");
  return *v;
}

double Blackboard::get_number(const std::string& key) const {
  const auto* v = std::get_if<double>(&at(key));
  if (!v) throw ValidationError("blackboard key '" + key + "' is not a number");
  return *v;
}

Eigen::Vector3d Blackboard::get_vector(const std::string& key) const {
  const auto* v = std::get_if<Eigen::Vector3d>(&at(key));
  if (!v) throw ValidationError("blackboard key '" + key + "' is not a 3-vector");
  return *v;
}

// ---- node base

Node& Node::add(std::unique_ptr<Node> child) {
  children_.push_back(std::move(child));
  return *children_.back();
}

TickStatus Node::tick(TickContext& ctx) {
  const TickStatus s = do_tick(ctx);
  last_ = s;
  if (ctx.trace) ctx.trace->events.push_back({id_, to_string(s)[0]});
  return s;
}

void Node::halt(TickContext& ctx) {
  if (!running()) return;
  do_halt(ctx);
  last_.reset();
  if (ctx.trace) ctx.trace->events.push_back({id_, 'H'});
}

void Node::do_halt(TickContext& ctx) { halt_children(ctx); }

void Node::halt_children(TickContext& ctx, std::size_t from) {
  for (std::size_t i = from; i < children_.size(); ++i) children_[i]->halt(ctx);
}

// ---- control nodes

TickStatus ControlNode::tick_children(TickContext& ctx) {
  const bool sot = is_sot(kind());
  auto run = [&](std::size_t i) {
    const TickStatus s = children_[i]->tick(ctx);
    if (sot) {
      if (auto* a = dynamic_cast<ActionNode*>(children_[i].get()); a && a->task_set_this_tick()) {
        const std::string& tid = a->task().id;
        if (std::find(owned_.begin(), owned_.end(), tid) == owned_.end()) owned_.push_back(tid);
      }
    }
    return s;
  };

  switch (kind()) {
    case NodeKind::Sequence:
    case NodeKind::SoTSequence:
      for (std::size_t i = 0; i < children_.size(); ++i) {
        const TickStatus s = run(i);
        if (s != TickStatus::Success) {
          halt_children(ctx, i + 1);
          return s;
        }
      }
      return TickStatus::Success;
    case NodeKind::Fallback:
    case NodeKind::SoTFallback:
      for (std::size_t i = 0; i < children_.size(); ++i) {
        const TickStatus s = run(i);
        if (s != TickStatus::Failure) {
          halt_children(ctx, i + 1);
          return s;
        }
      }
      return TickStatus::Failure;
    case NodeKind::Parallel:
    case NodeKind::SoTParallel: {
      const int n = static_cast<int>(children_.size());
      const int m = threshold();
      int ok = 0, failed = 0;
      for (std::size_t i = 0; i < children_.size(); ++i) {
        const TickStatus s = run(i);
        ok += s == TickStatus::Success;
        failed += s == TickStatus::Failure;
      }
      TickStatus out = TickStatus::Running;
      if (ok >= m) out = TickStatus::Success;
      else if (failed > n - m) out = TickStatus::Failure;
      if (out != TickStatus::Running) halt_children(ctx);
      return out;
    }
    default:
      throw ValidationError("node '" + id() + "' is not a control node");
  }
}

void ControlNode::remove_owned(TickContext& ctx) {
  if (owned_.empty()) return;
  ctx.stack.remove_tasks(owned_);
  owned_.clear();
}

TickStatus ControlNode::do_tick(TickContext& ctx) {
  const TickStatus s = tick_children(ctx);
  if (s != TickStatus::Running) remove_owned(ctx);
  return s;
}

void ControlNode::do_halt(TickContext& ctx) {
  halt_children(ctx);
  remove_owned(ctx);
}

// ---- decorator

TickStatus DecoratorNode::do_tick(TickContext& ctx) {
  if (children_.size() != 1) throw ValidationError("decorator '" + id() + "' needs exactly one child");
  if (!running()) failures_ = 0;
  const TickStatus s = children_[0]->tick(ctx);
  switch (policy_) {
    case DecoratorPolicy::Inverter:
      if (s == TickStatus::Success) return TickStatus::Failure;
      if (s == TickStatus::Failure) return TickStatus::Success;
      return s;
    case DecoratorPolicy::ForceSuccess:
      return s == TickStatus::Failure ? TickStatus::Success : s;
    case DecoratorPolicy::RepeatUntilFailure:
      return s == TickStatus::Failure ? TickStatus::Success : TickStatus::Running;
    case DecoratorPolicy::Retry:
      if (s != TickStatus::Failure) return s;
      ++failures_;
      if (ctx.trace) ctx.trace->notes.push_back(id() + ": child failed (" + std::to_string(failures_) + "/" +
                                                std::to_string(attempts_) + ")");
      return failures_ < attempts_ ? TickStatus::Running : TickStatus::Failure;
  }
  return s;
}

void DecoratorNode::do_halt(TickContext& ctx) { halt_children(ctx); }

// ---- leaves

TickStatus ConditionNode::do_tick(TickContext& ctx) {
  return ctx.blackboard.get_bool(key_) ? TickStatus::Success : TickStatus::Failure;
}

ActionNode::ActionNode(std::string id, TaskSpec task, bool blocking, std::vector<Effect> on_set,
                       std::vector<Effect> on_success)
    : Node(std::move(id), blocking ? NodeKind::BlockingAction : NodeKind::NonBlockingAction),
      task_(std::move(task)),
      on_set_(std::move(on_set)),
      on_success_(std::move(on_success)) {}

bool ActionNode::apply(const std::vector<Effect>& effects, TickContext& ctx) {
  for (const auto& e : effects) {
    switch (e.kind) {
      case Effect::Kind::SetFlag:
        ctx.blackboard.set(e.target, e.value);
        break;
      case Effect::Kind::Attach:
        if (!ctx.env || !ctx.env->attach(e.target)) {
          if (ctx.trace) ctx.trace->notes.push_back(id() + ": cannot attach '" + e.target + "'");
          return false;
        }
        break;
      case Effect::Kind::Detach:
        if (ctx.env) ctx.env->detach(e.target);
        break;
    }
  }
  return true;
}

TickStatus ActionNode::do_tick(TickContext& ctx) {
  set_now_ = false;
  const TaskSpec spec = ctx.env ? ctx.env->resolve(task_) : task_;
  if (!ctx.stack.contains(spec.id) && !apply(on_set_, ctx)) return TickStatus::Failure;
  ctx.stack.set_task(spec, ctx.now);
  set_now_ = true;
  if (!blocking()) return TickStatus::Success;

  if (!ctx.env) throw ValidationError("blocking action '" + id() + "' ticked without an environment");
  const BlockingParams& bp = *spec.blocking;
  const double t_x = ctx.stack.find(spec.id)->execution_time(ctx.now);
  if (t_x > bp.time_threshold) {
    if (ctx.trace) ctx.trace->notes.push_back(id() + ": timed out after " + std::to_string(t_x) + " s");
    return TickStatus::Failure;
  }
  double err = 0.0;
  try {
    err = ctx.env->error_norm(spec);
  } catch (const Error& e) {
    if (ctx.trace) ctx.trace->notes.push_back(id() + ": " + e.what());
    return TickStatus::Failure;
  }
  if (err <= bp.error_threshold) {
    apply(on_success_, ctx);
    return TickStatus::Success;
  }
  return TickStatus::Running;
}

void ActionNode::do_halt(TickContext&) { set_now_ = false; }

// ---- structure

namespace {

void collect(const Node& n, std::vector<const Node*>& out) {
  out.push_back(&n);
  for (const auto& c : n.children()) collect(*c, out);
}

}  // namespace

std::vector<const Node*> flatten(const Node& root) {
  std::vector<const Node*> out;
  collect(root, out);
  return out;
}

void validate_tree(const Node& root) {
  std::set<std::string> node_ids, task_ids;
  for (const Node* n : flatten(root)) {
    const std::string where = "node '" + n->id() + "'";
    if (n->id().empty()) throw ValidationError("node ids must not be empty");
    if (!node_ids.insert(n->id()).second) throw ValidationError("duplicate node id '" + n->id() + "'");
    const auto count = n->children().size();
    switch (n->kind()) {
      case NodeKind::Condition:
        if (count) throw ValidationError(where + ": leaves have no children");
        break;
      case NodeKind::NonBlockingAction:
      case NodeKind::BlockingAction: {
        if (count) throw ValidationError(where + ": leaves have no children");
        const auto& a = static_cast<const ActionNode&>(*n);
        a.task().validate();
        if (a.blocking() && !a.task().blocking) {
          throw ValidationError(where + ": blocking action needs a task with error and time thresholds");
        }
        if (!a.blocking() && a.task().blocking) {
          throw ValidationError(where + ": non-blocking action's task must not have blocking thresholds");
        }
        if (!task_ids.insert(a.task().id).second) {
          throw ValidationError(where + ": task '" + a.task().id + "' is used by more than one action");
        }
        break;
      }
      case NodeKind::Decorator: {
        if (count != 1) throw ValidationError(where + ": decorators take exactly one child");
        const auto& d = static_cast<const DecoratorNode&>(*n);
        if (d.policy() == DecoratorPolicy::Retry && d.attempts() < 1) {
          throw ValidationError(where + ": retry attempts must be >= 1");
        }
        break;
      }
      case NodeKind::Parallel:
      case NodeKind::SoTParallel: {
        if (count == 0) throw ValidationError(where + ": control nodes need children");
        const int m = static_cast<const ControlNode&>(*n).threshold();
        if (m < 1 || m > static_cast<int>(count)) {
          throw ValidationError(where + ": parallel threshold must satisfy 1 <= M <= " + std::to_string(count));
        }
        break;
      }
      case NodeKind::Sequence:
      case NodeKind::Fallback:
      case NodeKind::SoTSequence:
      case NodeKind::SoTFallback:
        if (count == 0) throw ValidationError(where + ": control nodes need children");
        break;
      case NodeKind::Custom:
        break;
    }
  }
}

}  // namespace sotbt
