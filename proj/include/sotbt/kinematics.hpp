#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace sotbt {

/// Revolute joint: rotation about `axis` (unit, joint frame) after the fixed origin transform.
struct JointDescriptor {
  std::string name;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d origin_xyz = Eigen::Vector3d::Zero();
  Eigen::Vector3d origin_rpy = Eigen::Vector3d::Zero();
  double lower = -M_PI;      // rad
  double upper = M_PI;       // rad
  double max_velocity = 2.0; // rad/s
};

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

/// Fixed-axis roll/pitch/yaw: R = Rz(yaw) * Ry(pitch) * Rx(roll).
Eigen::Matrix3d rpy_to_matrix(const Eigen::Vector3d& rpy);

/// Serial chain of revolute joints; immutable once constructed.
class ManipulatorModel {
public:
  ManipulatorModel(std::string name, std::vector<JointDescriptor> joints, Eigen::Vector3d ee_xyz,
                   Eigen::Vector3d ee_rpy = Eigen::Vector3d::Zero());

  const std::string& name() const { return name_; }
  int dof() const { return static_cast<int>(joints_.size()); }
  const std::vector<JointDescriptor>& joints() const { return joints_; }
  const Eigen::Vector3d& ee_xyz() const { return ee_xyz_; }
  const Eigen::Vector3d& ee_rpy() const { return ee_rpy_; }

  Eigen::VectorXd lower_limits() const;
  Eigen::VectorXd upper_limits() const;
  Eigen::VectorXd velocity_limits() const;

  const Eigen::Isometry3d& origin(int joint) const { return origins_[static_cast<std::size_t>(joint)]; }
  const Eigen::Isometry3d& ee_offset() const { return ee_offset_; }

private:
  std::string name_;
  std::vector<JointDescriptor> joints_;
  Eigen::Vector3d ee_xyz_;
  Eigen::Vector3d ee_rpy_;
  std::vector<Eigen::Isometry3d> origins_;
  Eigen::Isometry3d ee_offset_;
};

struct JointState {
  Eigen::VectorXd q;
  Eigen::VectorXd qdot;
  double t = 0.0;

  static JointState at_rest(const Eigen::VectorXd& q, double t = 0.0) {
    return JointState{q, Eigen::VectorXd::Zero(q.size()), t};
  }
};

/// Throws DimensionMismatch or ValidationError.
void check_state(const ManipulatorModel& model, const JointState& state);

/// World-frame joint axes and origins plus the end-effector pose at q.
struct ChainFrames {
  std::vector<Eigen::Vector3d> axes;
  std::vector<Eigen::Vector3d> origins;
  Eigen::Isometry3d ee = Eigen::Isometry3d::Identity();
};

ChainFrames chain_frames(const ManipulatorModel& model, const Eigen::VectorXd& q);
Pose forward_kinematics(const ManipulatorModel& model, const Eigen::VectorXd& q);
Eigen::MatrixXd position_jacobian(const ManipulatorModel& model, const Eigen::VectorXd& q);
/// 6 x n: linear rows on top, angular rows below.
Eigen::MatrixXd geometric_jacobian(const ManipulatorModel& model, const Eigen::VectorXd& q);

/// Central differences; throws NonFiniteEvaluation if f produces NaN/inf.
Eigen::MatrixXd finite_difference_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& q, double h = 1e-6);

/// Rotation vector of R_current * R_goal^T (shortest arc).
Eigen::Vector3d orientation_log_error(const Eigen::Quaterniond& current, const Eigen::Quaterniond& goal);
/// Inverse of the SO(3) left Jacobian at rotation vector phi.
Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& phi);

// Model documents (YAML). Schema in docs/model_format.md.
ManipulatorModel parse_model(std::string_view text);
ManipulatorModel load_model(const std::filesystem::path& path);
std::string serialize_model(const ManipulatorModel& model);

}  // namespace sotbt
