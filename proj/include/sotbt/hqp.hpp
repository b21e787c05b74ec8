#pragma once

// Hierarchical least-squares QP cascade over upper-bound constraints.
//
// Every level p solves
//   min ||w_p||^2 + reg ||qdot||^2
//   s.t. A_i qdot <= b_i + w_i*   (i < p, slacks frozen)
//        A_p qdot <= b_p + w_p
// and a final pass picks the minimum-norm qdot that keeps every frozen slack.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace sotbt {

enum class BoundKind { Upper, Lower, Double, Equality };

std::string_view to_string(BoundKind kind);
/// Throws InvalidBoundKind for anything but upper/lower/double/equality.
BoundKind bound_kind_from_string(std::string_view name);

/// Rows J qdot {<=, >=, in [lo, hi], ==} target before transcription.
struct RawRows {
  BoundKind kind = BoundKind::Upper;
  Eigen::MatrixXd J;
  Eigen::VectorXd target;
  std::optional<Eigen::VectorXd> lower_target;  // Double only
};

/// Stacked upper-bound rows A qdot <= b.
struct UpperRows {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

UpperRows transcribe_bounds(const RawRows& rows);
/// Concatenates the transcription of several row blocks (all with the same column count).
UpperRows transcribe_bounds(std::span<const RawRows> blocks, int n);

struct LevelConstraint {
  int level = 1;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

struct CascadeProblem {
  int n = 0;
  std::vector<LevelConstraint> levels;

  /// Throws DimensionMismatch / ValidationError when the invariants are broken.
  void validate() const;
};

struct CascadeSolution {
  Eigen::VectorXd qdot;
  std::vector<int> levels;
  std::vector<Eigen::VectorXd> slacks;
  std::vector<double> objective_per_level;
  int iterations = 0;
};

struct FrozenLevel {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd w;
};

struct LevelSolution {
  Eigen::VectorXd qdot;
  Eigen::VectorXd w;
  int iterations = 0;
};

struct CascadeOptions {
  double regularization = 1e-8;
  /// Budget factor: at most budget_factor * (total rows) working-set changes per QP.
  int budget_factor = 100;
};

inline constexpr double kFeasibilityTolerance = 1e-9;

/// Solves one level of the cascade. `start`, when given, must satisfy the frozen rows.
LevelSolution solve_level(int n, std::span<const FrozenLevel> fixed, const Eigen::MatrixXd& A,
                          const Eigen::VectorXd& b, double regularization = 1e-8,
                          const Eigen::VectorXd* start = nullptr, int level = 1,
                          int budget_factor = 100);

/// Minimum-norm qdot subject to all frozen rows.
Eigen::VectorXd minimum_norm_pass(int n, std::span<const FrozenLevel> fixed,
                                  const Eigen::VectorXd& start, int budget_factor = 100,
                                  int* iterations = nullptr);

CascadeSolution solve_cascade(const CascadeProblem& problem, const CascadeOptions& options = {});

/// Plain-text listing of a problem, for bug reports.
std::string dump(const CascadeProblem& problem);

}  // namespace sotbt
