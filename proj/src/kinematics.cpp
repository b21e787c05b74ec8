#include "sotbt/kinematics.hpp"

#include <cmath>

#include "sotbt/errors.hpp"

namespace sotbt {

Eigen::Matrix3d rpy_to_matrix(const Eigen::Vector3d& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

namespace {

Eigen::Isometry3d make_transform(const Eigen::Vector3d& xyz, const Eigen::Vector3d& rpy) {
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  T.linear() = rpy_to_matrix(rpy);
  T.translation() = xyz;
  return T;
}

}  // namespace

ManipulatorModel::ManipulatorModel(std::string name, std::vector<JointDescriptor> joints, Eigen::Vector3d ee_xyz,
                                   Eigen::Vector3d ee_rpy)
    : name_(std::move(name)), joints_(std::move(joints)), ee_xyz_(ee_xyz), ee_rpy_(ee_rpy) {
  if (joints_.empty()) throw ValidationError("model '" + name_ + "' needs at least one joint");
  for (const auto& j : joints_) {
    if (!j.axis.allFinite() || std::abs(j.axis.norm() - 1.0) > 1e-9) {
      throw ValidationError("joint '" + j.name + "' axis is not unit length");
    }
    if (!j.origin_xyz.allFinite() || !j.origin_rpy.allFinite()) {
      throw ValidationError("joint '" + j.name + "' origin is not finite");
    }
    if (!(j.lower < j.upper)) throw ValidationError("joint '" + j.name + "' needs lower < upper");
    if (!(j.max_velocity > 0.0)) throw ValidationError("joint '" + j.name + "' needs a positive velocity limit");
    origins_.push_back(make_transform(j.origin_xyz, j.origin_rpy));
  }
  if (!ee_xyz_.allFinite() || !ee_rpy_.allFinite()) throw ValidationError("ee_offset is not finite");
  ee_offset_ = make_transform(ee_xyz_, ee_rpy_);
}

Eigen::VectorXd ManipulatorModel::lower_limits() const {
  Eigen::VectorXd v(dof());
  for (int i = 0; i < dof(); ++i) v(i) = joints_[static_cast<std::size_t>(i)].lower;
  return v;
}

Eigen::VectorXd ManipulatorModel::upper_limits() const {
  Eigen::VectorXd v(dof());
  for (int i = 0; i < dof(); ++i) v(i) = joints_[static_cast<std::size_t>(i)].upper;
  return v;
}

Eigen::VectorXd ManipulatorModel::velocity_limits() const {
  Eigen::VectorXd v(dof());
  for (int i = 0; i < dof(); ++i) v(i) = joints_[static_cast<std::size_t>(i)].max_velocity;
  return v;
}

void check_state(const ManipulatorModel& model, const JointState& state) {
  if (state.q.size() != model.dof()) {
    throw DimensionMismatch("state has " + std::to_string(state.q.size()) + " joints, model '" + model.name() +
                            "' has " + std::to_string(model.dof()));
  }
  if (state.qdot.size() != 0 && state.qdot.size() != model.dof()) {
    throw DimensionMismatch("joint velocity has wrong length");
  }
  if (!state.q.allFinite() || !state.qdot.allFinite() || !std::isfinite(state.t)) {
    throw ValidationError("joint state has non-finite entries");
  }
}

ChainFrames chain_frames(const ManipulatorModel& model, const Eigen::VectorXd& q) {
  if (q.size() != model.dof()) {
    throw DimensionMismatch("q has " + std::to_string(q.size()) + " entries, model has " + std::to_string(model.dof()));
  }
  ChainFrames frames;
  frames.axes.reserve(static_cast<std::size_t>(model.dof()));
  frames.origins.reserve(static_cast<std::size_t>(model.dof()));
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  for (int i = 0; i < model.dof(); ++i) {
    const auto& joint = model.joints()[static_cast<std::size_t>(i)];
    T = T * model.origin(i);
    frames.axes.push_back(T.linear() * joint.axis);
    frames.origins.push_back(T.translation());
    T = T * Eigen::AngleAxisd(q(i), joint.axis);
  }
  frames.ee = T * model.ee_offset();
  return frames;
}

Pose forward_kinematics(const ManipulatorModel& model, const Eigen::VectorXd& q) {
  const ChainFrames f = chain_frames(model, q);
  Pose pose;
  pose.position = f.ee.translation();
  pose.orientation = Eigen::Quaterniond(f.ee.linear()).normalized();
  return pose;
}

Eigen::MatrixXd position_jacobian(const ManipulatorModel& model, const Eigen::VectorXd& q) {
  return geometric_jacobian(model, q).topRows(3);
}

Eigen::MatrixXd geometric_jacobian(const ManipulatorModel& model, const Eigen::VectorXd& q) {
  const ChainFrames f = chain_frames(model, q);
  const Eigen::Vector3d x = f.ee.translation();
  Eigen::MatrixXd J(6, model.dof());
  for (int j = 0; j < model.dof(); ++j) {
    const auto& a = f.axes[static_cast<std::size_t>(j)];
    J.block<3, 1>(0, j) = a.cross(x - f.origins[static_cast<std::size_t>(j)]);
    J.block<3, 1>(3, j) = a;
  }
  return J;
}

Eigen::MatrixXd finite_difference_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& q, double h) {
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be positive");
  Eigen::MatrixXd J;
  for (Eigen::Index j = 0; j < q.size(); ++j) {
    Eigen::VectorXd plus = q;
    Eigen::VectorXd minus = q;
    plus(j) += h;
    minus(j) -= h;
    const Eigen::VectorXd fp = f(plus);
    const Eigen::VectorXd fm = f(minus);
    if (!fp.allFinite() || !fm.allFinite()) {
      throw NonFiniteEvaluation("function is not finite near q along coordinate " + std::to_string(j));
    }
    if (fp.size() != fm.size()) throw DimensionMismatch("function output size changed between evaluations");
    if (j == 0) J.resize(fp.size(), q.size());
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

Eigen::Vector3d orientation_log_error(const Eigen::Quaterniond& current, const Eigen::Quaterniond& goal) {
  Eigen::Quaterniond e = (current * goal.conjugate()).normalized();
  if (e.w() < 0.0) e.coeffs() = -e.coeffs();
  const Eigen::Vector3d v = e.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  return (2.0 * std::atan2(s, e.w()) / s) * v;
}

Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  Eigen::Matrix3d W;
  W << 0, -phi.z(), phi.y(), phi.z(), 0, -phi.x(), -phi.y(), phi.x(), 0;
  double c2 = 1.0 / 12.0;
  if (theta > 1e-6) c2 = 1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Eigen::Matrix3d::Identity() - 0.5 * W + c2 * W * W;
}

}  // namespace sotbt
