#include "sotbt/sot_runtime.hpp"

#include <algorithm>
#include <cmath>

#include "sotbt/errors.hpp"

namespace sotbt {

std::vector<std::string> TaskSnapshot::ids() const {
  std::vector<std::string> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) out.push_back(t.spec.id);
  return out;
}

const ActiveTask* TaskSnapshot::find(const std::string& id) const {
  for (const auto& t : tasks)
    if (t.spec.id == id) return &t;
  return nullptr;
}

void TaskStack::set_task(const TaskSpec& spec, double now) {
  auto it = entries_.find(spec.id);
  if (it == entries_.end()) {
    entries_.emplace(spec.id, ActiveTask{spec, now, next_order_++});
  } else {
    it->second.spec = spec;
  }
  ++revision_;
}

const ActiveTask* TaskStack::find(const std::string& id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

TaskSnapshot TaskStack::snapshot() const {
  TaskSnapshot snap;
  snap.revision = revision_;
  snap.tasks.reserve(entries_.size());
  for (const auto& [id, t] : entries_) snap.tasks.push_back(t);
  std::sort(snap.tasks.begin(), snap.tasks.end(), [](const ActiveTask& a, const ActiveTask& b) {
    if (a.spec.priority != b.spec.priority) return a.spec.priority < b.spec.priority;
    return a.order < b.order;
  });
  return snap;
}

TaskStack SharedTaskStack::working_copy() const {
  std::lock_guard lock(mutex_);
  return stack_;
}

void SharedTaskStack::commit(TaskStack next) {
  std::lock_guard lock(mutex_);
  stack_ = std::move(next);
}

TaskSnapshot SharedTaskStack::snapshot() const {
  std::lock_guard lock(mutex_);
  return stack_.snapshot();
}

std::uint64_t SharedTaskStack::revision() const {
  std::lock_guard lock(mutex_);
  return stack_.revision();
}

CascadeProblem assemble(const ManipulatorModel& model, const JointState& state, const TaskSnapshot& snap,
                        std::vector<TaskEvaluation>* evaluations) {
  const int n = model.dof();
  std::map<int, std::vector<RawRows>> by_level;
  for (const auto& t : snap.tasks) {
    TaskEvaluation ev = evaluate(t.spec, model, state);
    by_level[t.spec.priority].push_back(to_constraint_rows(ev, t.spec.gain));
    if (evaluations) evaluations->push_back(std::move(ev));
  }
  CascadeProblem problem;
  problem.n = n;
  for (const auto& [level, rows] : by_level) {
    UpperRows u = transcribe_bounds(rows, n);
    if (u.A.rows() == 0) continue;
    problem.levels.push_back(LevelConstraint{level, std::move(u.A), std::move(u.b)});
  }
  return problem;
}

namespace {

bool near_singular(const TaskEvaluation& ev, double ratio) {
  if (ev.bound_kind != BoundKind::Equality || ev.J.rows() == 0) return false;
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(ev.J).singularValues();
  const double top = s(0);
  if (top <= 0.0) return true;
  // Exact zeros are structural (projected or planar rows); small nonzero ones mean rank loss is close.
  for (Eigen::Index i = 1; i < s.size(); ++i) {
    if (s(i) > 1e-12 * top && s(i) < ratio * top) return true;
  }
  return false;
}

}  // namespace

StepResult control_step(const ManipulatorModel& model, const JointState& state, const TaskSnapshot& snap, double dt,
                        const StepOptions& options) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("control dt must be positive");
  check_state(model, state);
  StepResult out;
  out.revision = snap.revision;
  const CascadeProblem problem = assemble(model, state, snap, &out.evaluations);
  out.solution = solve_cascade(problem, options.cascade);
  for (const auto& ev : out.evaluations) out.singular = out.singular || near_singular(ev, options.singular_ratio);

  out.state.q = (state.q + out.solution.qdot * dt).cwiseMax(model.lower_limits()).cwiseMin(model.upper_limits());
  out.state.qdot = out.solution.qdot;
  out.state.t = state.t + dt;
  return out;
}

}  // namespace sotbt
