#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <Eigen/Dense>

#include "sotbt/hqp.hpp"
#include "sotbt/kinematics.hpp"

namespace sotbt {

enum class TaskKind { PointReach, PlaneAvoid, LineFollow, JointVelocityBox, PoseReach };

std::string_view to_string(TaskKind kind);
/// Throws UnknownKind.
TaskKind task_kind_from_string(std::string_view name);

struct PointGoal {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

/// Safe side is normal . x >= offset + margin.
struct Plane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;
  double margin = 0.02;

  double clearance(const Eigen::Vector3d& x) const { return normal.dot(x) - offset; }
};

struct Line {
  Eigen::Vector3d p0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::UnitX();

  Eigen::Matrix3d projector() const {
    return Eigen::Matrix3d::Identity() - direction * direction.transpose();
  }
  double deviation(const Eigen::Vector3d& x) const { return (projector() * (x - p0)).norm(); }
};

/// Joint velocity bounds; empty vectors fall back to the model's velocity limits.
/// With `position_limits`, bounds also keep q inside the model's position limits
/// via gain * (limit - q).
struct VelocityBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  bool position_limits = false;
};

using TaskParams = std::variant<PointGoal, Plane, Line, VelocityBox, Pose>;

struct BlockingParams {
  double error_threshold = 1e-3;  // s_x
  double time_threshold = 10.0;   // f_x, seconds
};

struct TaskSpec {
  std::string id;
  TaskKind kind = TaskKind::PointReach;
  TaskParams params;
  int priority = 1;
  /// One entry (scalar gain) or one entry per error dimension.
  Eigen::VectorXd gain = Eigen::VectorXd::Ones(1);
  std::optional<BlockingParams> blocking;

  /// Throws ValidationError.
  void validate() const;
  int error_dimension() const;
};

struct TaskEvaluation {
  std::string task_id;
  Eigen::VectorXd e;
  Eigen::MatrixXd J;
  BoundKind bound_kind = BoundKind::Equality;
  double error_norm = 0.0;
  /// JointVelocityBox only: direct velocity bounds for the rows of J.
  Eigen::VectorXd box_lower;
  Eigen::VectorXd box_upper;
};

/// Task error and its Jacobian at the given state.
TaskEvaluation evaluate(const TaskSpec& task, const ManipulatorModel& model, const JointState& state);

/// P law: desired task velocity = -gain * e, emitted as rows for transcribe_bounds.
RawRows to_constraint_rows(const TaskEvaluation& ev, const Eigen::VectorXd& gain);

/// Error vector alone (used by the finite-difference checks).
Eigen::VectorXd task_error(const TaskSpec& task, const ManipulatorModel& model, const Eigen::VectorXd& q);

}  // namespace sotbt
