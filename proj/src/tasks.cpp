#include "sotbt/tasks.hpp"

#include <cmath>
#include <limits>

#include "sotbt/errors.hpp"

namespace sotbt {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::PointReach: return "PointReach";
    case TaskKind::PlaneAvoid: return "PlaneAvoid";
    case TaskKind::LineFollow: return "LineFollow";
    case TaskKind::JointVelocityBox: return "JointVelocityBox";
    case TaskKind::PoseReach: return "PoseReach";
  }
  return "Unknown";
}

TaskKind task_kind_from_string(std::string_view name) {
  for (auto k : {TaskKind::PointReach, TaskKind::PlaneAvoid, TaskKind::LineFollow, TaskKind::JointVelocityBox,
                 TaskKind::PoseReach}) {
    if (to_string(k) == name) return k;
  }
  throw UnknownKind("unknown task kind '" + std::string(name) + "'");
}

namespace {

bool unit(const Eigen::Vector3d& v) { return v.allFinite() && std::abs(v.norm() - 1.0) <= 1e-9; }

template <typename T>
const T& params_as(const TaskSpec& task) {
  const T* p = std::get_if<T>(&task.params);
  if (!p) throw ValidationError("task '" + task.id + "' parameters do not match kind " + std::string(to_string(task.kind)));
  return *p;
}

}  // namespace

int TaskSpec::error_dimension() const {
  switch (kind) {
    case TaskKind::PointReach:
    case TaskKind::LineFollow: return 3;
    case TaskKind::PlaneAvoid: return 1;
    case TaskKind::PoseReach: return 6;
    case TaskKind::JointVelocityBox: return 0;
  }
  throw UnknownKind("unknown task kind");
}

void TaskSpec::validate() const {
  if (id.empty()) throw ValidationError("task id must not be empty");
  if (priority < 1) throw ValidationError("task '" + id + "' priority must be >= 1");
  if (gain.size() < 1 || !gain.allFinite() || gain.minCoeff() <= 0.0) {
    throw ValidationError("task '" + id + "' gains must be positive");
  }
  const int dim = error_dimension();
  if (gain.size() != 1 && gain.size() != dim) {
    throw ValidationError("task '" + id + "' gain needs 1 or " + std::to_string(dim) + " entries");
  }
  if (blocking && !(blocking->error_threshold > 0.0 && blocking->time_threshold > 0.0)) {
    throw ValidationError("task '" + id + "' blocking thresholds must be positive");
  }
  switch (kind) {
    case TaskKind::PointReach:
      if (!params_as<PointGoal>(*this).position.allFinite()) throw ValidationError("task '" + id + "' goal is not finite");
      break;
    case TaskKind::PlaneAvoid: {
      const Plane& p = params_as<Plane>(*this);
      if (!unit(p.normal)) throw ValidationError("task '" + id + "' plane normal is not unit length");
      if (!std::isfinite(p.offset) || !std::isfinite(p.margin) || p.margin < 0.0) {
        throw ValidationError("task '" + id + "' plane offset/margin invalid");
      }
      break;
    }
    case TaskKind::LineFollow: {
      const Line& l = params_as<Line>(*this);
      if (!unit(l.direction)) throw ValidationError("task '" + id + "' line direction is not unit length");
      if (!l.p0.allFinite()) throw ValidationError("task '" + id + "' line point is not finite");
      break;
    }
    case TaskKind::JointVelocityBox: {
      const VelocityBox& b = params_as<VelocityBox>(*this);
      if (b.lower.size() != b.upper.size()) throw ValidationError("task '" + id + "' box bounds differ in length");
      for (Eigen::Index i = 0; i < b.lower.size(); ++i) {
        if (!(b.lower(i) <= b.upper(i))) throw ValidationError("task '" + id + "' box needs lower <= upper");
      }
      break;
    }
    case TaskKind::PoseReach: {
      const Pose& p = params_as<Pose>(*this);
      if (!p.position.allFinite() || std::abs(p.orientation.norm() - 1.0) > 1e-9) {
        throw ValidationError("task '" + id + "' pose goal invalid");
      }
      break;
    }
  }
}

TaskEvaluation evaluate(const TaskSpec& task, const ManipulatorModel& model, const JointState& state) {
  check_state(model, state);
  const int n = model.dof();
  TaskEvaluation ev;
  ev.task_id = task.id;

  switch (task.kind) {
    case TaskKind::PointReach: {
      const auto& goal = params_as<PointGoal>(task);
      const ChainFrames f = chain_frames(model, state.q);
      ev.e = f.ee.translation() - goal.position;
      ev.J = position_jacobian(model, state.q);
      ev.bound_kind = BoundKind::Equality;
      break;
    }
    case TaskKind::PlaneAvoid: {
      const auto& plane = params_as<Plane>(task);
      const Eigen::Vector3d x = forward_kinematics(model, state.q).position;
      ev.e = Eigen::VectorXd::Constant(1, plane.offset + plane.margin - plane.normal.dot(x));
      ev.J = -plane.normal.transpose() * position_jacobian(model, state.q);
      ev.bound_kind = BoundKind::Upper;
      break;
    }
    case TaskKind::LineFollow: {
      const auto& line = params_as<Line>(task);
      const Eigen::Matrix3d P = line.projector();
      const Eigen::Vector3d x = forward_kinematics(model, state.q).position;
      ev.e = P * (x - line.p0);
      ev.J = P * position_jacobian(model, state.q);
      ev.bound_kind = BoundKind::Equality;
      break;
    }
    case TaskKind::JointVelocityBox: {
      const auto& box = params_as<VelocityBox>(task);
      Eigen::VectorXd lo = box.lower.size() ? box.lower : Eigen::VectorXd(-model.velocity_limits());
      Eigen::VectorXd hi = box.upper.size() ? box.upper : model.velocity_limits();
      if (lo.size() != n || hi.size() != n) {
        throw DimensionMismatch("task '" + task.id + "' box has " + std::to_string(lo.size()) + " joints, model has " +
                                std::to_string(n));
      }
      if (box.position_limits) {
        const double k = task.gain(0);
        lo = lo.cwiseMax(k * (model.lower_limits() - state.q));
        hi = hi.cwiseMin(k * (model.upper_limits() - state.q));
        lo = lo.cwiseMin(hi);
      }
      std::vector<int> bounded;
      for (int j = 0; j < n; ++j) {
        if (std::isfinite(lo(j)) || std::isfinite(hi(j))) bounded.push_back(j);
      }
      const auto m = static_cast<Eigen::Index>(bounded.size());
      ev.J = Eigen::MatrixXd::Zero(m, n);
      ev.box_lower.resize(m);
      ev.box_upper.resize(m);
      for (Eigen::Index r = 0; r < m; ++r) {
        const int j = bounded[static_cast<std::size_t>(r)];
        ev.J(r, j) = 1.0;
        ev.box_lower(r) = std::isfinite(lo(j)) ? lo(j) : -1e6;
        ev.box_upper(r) = std::isfinite(hi(j)) ? hi(j) : 1e6;
      }
      ev.e = Eigen::VectorXd(0);
      ev.bound_kind = BoundKind::Double;
      break;
    }
    case TaskKind::PoseReach: {
      const auto& goal = params_as<Pose>(task);
      const Pose pose = forward_kinematics(model, state.q);
      const Eigen::MatrixXd G = geometric_jacobian(model, state.q);
      const Eigen::Vector3d phi = orientation_log_error(pose.orientation, goal.orientation);
      ev.e.resize(6);
      ev.e << pose.position - goal.position, phi;
      ev.J.resize(6, n);
      ev.J.topRows(3) = G.topRows(3);
      ev.J.bottomRows(3) = so3_left_jacobian_inverse(phi) * G.bottomRows(3);
      ev.bound_kind = BoundKind::Equality;
      break;
    }
    default:
      throw UnknownKind("unknown task kind for '" + task.id + "'");
  }
  ev.error_norm = ev.e.norm();
  return ev;
}

RawRows to_constraint_rows(const TaskEvaluation& ev, const Eigen::VectorXd& gain) {
  if (ev.J.rows() != ev.e.size() && ev.bound_kind != BoundKind::Double) {
    throw DimensionMismatch("task '" + ev.task_id + "' error and Jacobian row counts differ");
  }
  RawRows rows;
  rows.J = ev.J;
  if (ev.bound_kind == BoundKind::Double) {
    if (ev.box_lower.size() != ev.J.rows() || ev.box_upper.size() != ev.J.rows()) {
      throw DimensionMismatch("task '" + ev.task_id + "' box bounds do not match its rows");
    }
    rows.kind = BoundKind::Double;
    rows.target = ev.box_upper;
    rows.lower_target = ev.box_lower;
    return rows;
  }
  if (gain.size() != 1 && gain.size() != ev.e.size()) {
    throw DimensionMismatch("task '" + ev.task_id + "' gain size does not match its error");
  }
  rows.kind = ev.bound_kind;
  rows.target = gain.size() == 1 ? Eigen::VectorXd(-gain(0) * ev.e) : Eigen::VectorXd(-gain.cwiseProduct(ev.e));
  return rows;
}

Eigen::VectorXd task_error(const TaskSpec& task, const ManipulatorModel& model, const Eigen::VectorXd& q) {
  return evaluate(task, model, JointState::at_rest(q)).e;
}

}  // namespace sotbt
