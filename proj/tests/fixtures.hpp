#pragma once

// Shared helpers for tests that need models, configurations and tasks.

#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sotbt/hqp.hpp"
#include "sotbt/kinematics.hpp"
#include "sotbt/tasks.hpp"

namespace fixture {

inline const std::vector<std::string> kModels{"planar1", "planar2", "planar3", "arm7"};

inline sotbt::ManipulatorModel model(const std::string& name) {
  return sotbt::load_model(std::string(SOTBT_DATA_DIR) + "/models/" + name + ".yaml");
}

inline Eigen::VectorXd random_q(const sotbt::ManipulatorModel& m, std::mt19937_64& rng) {
  Eigen::VectorXd q(m.dof());
  for (int i = 0; i < m.dof(); ++i) {
    const auto& j = m.joints()[static_cast<std::size_t>(i)];
    q(i) = oracle::uniform(rng, std::max(j.lower, -3.0), std::min(j.upper, 3.0));
  }
  return q;
}

inline Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(oracle::uniform(rng, -1, 1), oracle::uniform(rng, -1, 1), oracle::uniform(rng, -1, 1));
  } while (v.norm() < 0.1 || v.norm() > 1.0);
  return v.normalized();
}

// One task of every kind with a nontrivial error, with geometry drawn around
// the end-effector at q. The pose goal is the pose at a nearby configuration so
// the rotation error stays well away from pi.
inline std::vector<sotbt::TaskSpec> random_tasks(const sotbt::ManipulatorModel& m, const Eigen::VectorXd& q,
                                                 std::mt19937_64& rng) {
  using namespace sotbt;
  const Eigen::Vector3d x = forward_kinematics(m, q).position;
  std::vector<TaskSpec> out;

  TaskSpec reach{"reach", TaskKind::PointReach, PointGoal{x + 0.3 * random_unit(rng)}};
  out.push_back(reach);

  const Eigen::Vector3d n = random_unit(rng);
  TaskSpec plane{"plane", TaskKind::PlaneAvoid, Plane{n, n.dot(x) + oracle::uniform(rng, -0.2, 0.2), 0.02}};
  out.push_back(plane);

  TaskSpec line{"line", TaskKind::LineFollow, Line{x + 0.2 * random_unit(rng), random_unit(rng)}};
  out.push_back(line);

  Eigen::VectorXd q2 = q;
  for (int i = 0; i < m.dof(); ++i) q2(i) += oracle::uniform(rng, -0.3, 0.3);
  TaskSpec pose{"pose", TaskKind::PoseReach, forward_kinematics(m, q2)};
  out.push_back(pose);
  return out;
}

// Entry-wise relative error, normalised by max(|reference|, 1e-3).
inline double max_relative_error(const Eigen::MatrixXd& value, const Eigen::MatrixXd& reference) {
  double worst = 0;
  for (Eigen::Index i = 0; i < value.rows(); ++i)
    for (Eigen::Index j = 0; j < value.cols(); ++j)
      worst = std::max(worst, std::abs(value(i, j) - reference(i, j)) / std::max(std::abs(reference(i, j)), 1e-3));
  return worst;
}

// Dense random levels of soft equalities.
inline sotbt::CascadeProblem random_problem(std::mt19937_64& rng, int n, int levels, int max_rows) {
  sotbt::CascadeProblem p;
  p.n = n;
  std::uniform_int_distribution<int> rows_dist(1, max_rows);
  for (int l = 1; l <= levels; ++l) {
    const int m = rows_dist(rng);
    sotbt::LevelConstraint lvl;
    lvl.level = l;
    lvl.A.resize(m, n);
    lvl.b.resize(m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) lvl.A(i, j) = oracle::uniform(rng, -1, 1);
      lvl.b(i) = oracle::uniform(rng, -1, 1);
    }
    p.levels.push_back(lvl);
  }
  return p;
}

}  // namespace fixture
