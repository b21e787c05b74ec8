#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "sotbt/hqp.hpp"
#include "sotbt/kinematics.hpp"
#include "sotbt/tasks.hpp"

namespace sotbt {

struct ActiveTask {
  TaskSpec spec;
  double t_set = 0.0;
  std::uint64_t order = 0;  // insertion sequence number

  double execution_time(double now) const { return now - t_set; }
};

struct TaskSnapshot {
  std::vector<ActiveTask> tasks;  // by (priority, insertion order)
  std::uint64_t revision = 0;

  std::vector<std::string> ids() const;
  const ActiveTask* find(const std::string& id) const;
};

/// Plain value; SharedTaskStack adds the locking for the two-loop setting.
class TaskStack {
public:
  /// Upsert: a new id gets t_set = now, an existing one keeps its t_set and order.
  void set_task(const TaskSpec& spec, double now);
  template <typename Ids>
  void remove_tasks(const Ids& ids) {
    bool changed = false;
    for (const auto& id : ids) changed = entries_.erase(id) > 0 || changed;
    if (changed) ++revision_;
  }

  bool contains(const std::string& id) const { return entries_.count(id) > 0; }
  const ActiveTask* find(const std::string& id) const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::uint64_t revision() const { return revision_; }

  TaskSnapshot snapshot() const;

private:
  std::map<std::string, ActiveTask> entries_;
  std::uint64_t revision_ = 0;
  std::uint64_t next_order_ = 0;
};

/// One writer (BT loop) edits a working copy and commits it as one batch;
/// readers only ever see committed states.
class SharedTaskStack {
public:
  TaskStack working_copy() const;
  void commit(TaskStack next);
  TaskSnapshot snapshot() const;
  std::uint64_t revision() const;

private:
  mutable std::mutex mutex_;
  TaskStack stack_;
};

struct StepResult {
  JointState state;
  std::vector<TaskEvaluation> evaluations;  // snapshot order
  CascadeSolution solution;
  std::uint64_t revision = 0;
  /// Some equality task Jacobian is near rank loss (non-fatal).
  bool singular = false;
};

struct StepOptions {
  CascadeOptions cascade;
  double singular_ratio = 1e-4;  // sigma_min / sigma_max below this flags a singularity
};

/// Evaluate, solve the cascade, then Euler-integrate and clamp to joint limits.
StepResult control_step(const ManipulatorModel& model, const JointState& state, const TaskSnapshot& snap, double dt,
                        const StepOptions& options = {});

/// The cascade the step would solve (exposed for inspection and tests).
CascadeProblem assemble(const ManipulatorModel& model, const JointState& state, const TaskSnapshot& snap,
                        std::vector<TaskEvaluation>* evaluations = nullptr);

}  // namespace sotbt
