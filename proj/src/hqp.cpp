#include "sotbt/hqp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "sotbt/errors.hpp"

namespace sotbt {

std::string_view to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::Upper: return "upper";
    case BoundKind::Lower: return "lower";
    case BoundKind::Double: return "double";
    case BoundKind::Equality: return "equality";
  }
  return "unknown";
}

BoundKind bound_kind_from_string(std::string_view name) {
  if (name == "upper") return BoundKind::Upper;
  if (name == "lower") return BoundKind::Lower;
  if (name == "double") return BoundKind::Double;
  if (name == "equality") return BoundKind::Equality;
  throw InvalidBoundKind("unknown bound kind '" + std::string(name) + "'");
}

UpperRows transcribe_bounds(const RawRows& rows) {
  const auto m = rows.J.rows();
  if (rows.target.size() != m) {
    throw DimensionMismatch("bound target has " + std::to_string(rows.target.size()) +
                            " entries for " + std::to_string(m) + " rows");
  }
  const bool wants_lower = rows.kind == BoundKind::Double;
  if (wants_lower != rows.lower_target.has_value()) {
    throw DimensionMismatch("lower target must be given exactly for double bounds");
  }
  if (wants_lower && rows.lower_target->size() != m) {
    throw DimensionMismatch("lower target size does not match row count");
  }

  UpperRows out;
  const auto n = rows.J.cols();
  switch (rows.kind) {
    case BoundKind::Upper:
      out.A = rows.J;
      out.b = rows.target;
      break;
    case BoundKind::Lower:
      out.A = -rows.J;
      out.b = -rows.target;
      break;
    case BoundKind::Double:
    case BoundKind::Equality: {
      const Eigen::VectorXd& lo = wants_lower ? *rows.lower_target : rows.target;
      out.A.resize(2 * m, n);
      out.b.resize(2 * m);
      // Row pairs stay adjacent: (J, hi), (-J, -lo).
      for (Eigen::Index i = 0; i < m; ++i) {
        out.A.row(2 * i) = rows.J.row(i);
        out.b(2 * i) = rows.target(i);
        out.A.row(2 * i + 1) = -rows.J.row(i);
        out.b(2 * i + 1) = -lo(i);
      }
      break;
    }
    default:
      throw InvalidBoundKind("invalid bound kind value " + std::to_string(static_cast<int>(rows.kind)));
  }
  return out;
}

UpperRows transcribe_bounds(std::span<const RawRows> blocks, int n) {
  std::vector<UpperRows> parts;
  Eigen::Index total = 0;
  for (const auto& block : blocks) {
    if (block.J.cols() != n) {
      throw DimensionMismatch("row block has " + std::to_string(block.J.cols()) + " columns, expected " +
                              std::to_string(n));
    }
    parts.push_back(transcribe_bounds(block));
    total += parts.back().A.rows();
  }
  UpperRows out{Eigen::MatrixXd(total, n), Eigen::VectorXd(total)};
  Eigen::Index row = 0;
  for (const auto& part : parts) {
    out.A.middleRows(row, part.A.rows()) = part.A;
    out.b.segment(row, part.b.size()) = part.b;
    row += part.A.rows();
  }
  return out;
}

void CascadeProblem::validate() const {
  if (n <= 0) throw ValidationError("cascade problem needs n >= 1");
  int previous = 0;
  for (const auto& lvl : levels) {
    if (lvl.level <= previous) {
      throw ValidationError("level indices must be positive and strictly increasing");
    }
    previous = lvl.level;
    if (lvl.A.cols() != n) {
      throw DimensionMismatch("level " + std::to_string(lvl.level) + " has " + std::to_string(lvl.A.cols()) +
                              " columns, expected " + std::to_string(n));
    }
    if (lvl.A.rows() != lvl.b.size()) {
      throw DimensionMismatch("level " + std::to_string(lvl.level) + " has mismatched A/b row counts");
    }
    if (lvl.A.rows() < 1) {
      throw ValidationError("level " + std::to_string(lvl.level) + " has no rows");
    }
    if (!lvl.A.allFinite() || !lvl.b.allFinite()) {
      throw ValidationError("level " + std::to_string(lvl.level) + " has non-finite entries");
    }
  }
}

namespace {

// min 0.5 z' diag(h) z + c' z  s.t.  G z <= g, from a feasible start.
struct DiagonalQp {
  Eigen::VectorXd h;
  Eigen::VectorXd c;
  Eigen::MatrixXd G;
  Eigen::VectorXd g;
};

struct QpResult {
  Eigen::VectorXd z;
  std::vector<Eigen::Index> working;
  int iterations = 0;
};

QpResult solve_active_set(const DiagonalQp& qp, Eigen::VectorXd z, std::vector<Eigen::Index> working, int budget,
                          int level) {
  const Eigen::Index nz = qp.h.size();
  const Eigen::Index rows = qp.G.rows();
  std::vector<char> in_working(static_cast<std::size_t>(rows), 0);
  for (Eigen::Index i : working) in_working[static_cast<std::size_t>(i)] = 1;
  Eigen::VectorXd row_norm(rows);
  for (Eigen::Index i = 0; i < rows; ++i) row_norm(i) = qp.G.row(i).norm();

  int changes = 0;
  bool at_subspace_min = false;
  Eigen::MatrixXd Gw;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr;

  auto factor = [&]() {
    Gw.resize(nz, static_cast<Eigen::Index>(working.size()));
    for (std::size_t k = 0; k < working.size(); ++k) Gw.col(static_cast<Eigen::Index>(k)) = qp.G.row(working[k]).transpose();
    if (!working.empty()) qr.compute(Gw);
  };
  factor();

  for (;;) {
    const Eigen::Index k = static_cast<Eigen::Index>(working.size());
    Eigen::VectorXd p = Eigen::VectorXd::Zero(nz);
    if (!at_subspace_min && k < nz) {
      Eigen::MatrixXd Z;
      if (k == 0) {
        Z = Eigen::MatrixXd::Identity(nz, nz);
      } else {
        Eigen::MatrixXd Q = qr.householderQ();
        Z = Q.rightCols(nz - k);
      }
      const Eigen::MatrixXd hz = Z.array().colwise() * qp.h.array();
      const Eigen::MatrixXd reduced = Z.transpose() * hz;
      const Eigen::VectorXd rhs = -(hz.transpose() * z + Z.transpose() * qp.c);
      p = Z * reduced.ldlt().solve(rhs);
    }

    if (at_subspace_min || p.lpNorm<Eigen::Infinity>() <= 1e-15 * std::max(1.0, z.lpNorm<Eigen::Infinity>())) {
      if (k == 0) return {z, working, changes};
      const Eigen::VectorXd grad = qp.h.cwiseProduct(z) + qp.c;
      const Eigen::VectorXd qtg = (qr.householderQ().transpose() * (-grad)).head(k);
      const Eigen::VectorXd lambda = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(qtg);
      const double tol = 1e-12 * std::max(1.0, grad.lpNorm<Eigen::Infinity>());
      Eigen::Index worst = -1;
      double most_negative = -tol;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (lambda(j) < most_negative) {
          most_negative = lambda(j);
          worst = j;
        }
      }
      if (worst < 0) return {z, working, changes};
      in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(worst)])] = 0;
      working.erase(working.begin() + worst);
      at_subspace_min = false;
    } else {
      double alpha = 1.0;
      Eigen::Index blocking = -1;
      const Eigen::VectorXd Gp = qp.G * p;
      const double pnorm = p.norm();
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (in_working[static_cast<std::size_t>(i)]) continue;
        if (Gp(i) <= 1e-12 * row_norm(i) * pnorm) continue;
        const double gap = std::max(0.0, qp.g(i) - qp.G.row(i).dot(z));
        const double step = gap / Gp(i);
        if (step < alpha) {
          alpha = step;
          blocking = i;
        }
      }
      z += alpha * p;
      if (blocking < 0) {
        at_subspace_min = true;
        continue;
      }
      working.push_back(blocking);
      in_working[static_cast<std::size_t>(blocking)] = 1;
    }

    if (++changes > budget) {
      throw NumericalFailure(level, changes,
                             "active-set QP at level " + std::to_string(level) + " did not converge within " +
                                 std::to_string(budget) + " working-set changes");
    }
    factor();
  }
}

constexpr int kProximalRounds = 8;

Eigen::Index frozen_rows(std::span<const FrozenLevel> fixed) {
  Eigen::Index total = 0;
  for (const auto& f : fixed) total += f.A.rows();
  return total;
}

void check_fixed(int n, std::span<const FrozenLevel> fixed) {
  for (const auto& f : fixed) {
    if (f.A.cols() != n) {
      throw DimensionMismatch("frozen level has " + std::to_string(f.A.cols()) + " columns, expected " +
                              std::to_string(n));
    }
    if (f.b.size() != f.A.rows() || f.w.size() != f.A.rows()) {
      throw DimensionMismatch("frozen level has inconsistent row counts");
    }
  }
}

// Hard rows of all frozen levels, written into G/g starting at `row`, columns [0, n).
void fill_frozen(std::span<const FrozenLevel> fixed, Eigen::MatrixXd& G, Eigen::VectorXd& g, Eigen::Index row, int n) {
  for (const auto& f : fixed) {
    G.block(row, 0, f.A.rows(), n) = f.A;
    g.segment(row, f.b.size()) = f.b + f.w;
    row += f.A.rows();
  }
}

Eigen::VectorXd positive_part(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& q) {
  return (A * q - b).cwiseMax(0.0);
}

Eigen::VectorXd feasible_start(int n, std::span<const FrozenLevel> fixed, int level, int budget_factor) {
  if (fixed.empty()) return Eigen::VectorXd::Zero(n);
  const Eigen::Index rows = frozen_rows(fixed);
  Eigen::MatrixXd C(rows, n);
  Eigen::VectorXd d(rows);
  Eigen::Index r = 0;
  for (const auto& f : fixed) {
    C.middleRows(r, f.A.rows()) = f.A;
    d.segment(r, f.b.size()) = f.b + f.w;
    r += f.A.rows();
  }
  const LevelSolution phase1 = solve_level(n, {}, C, d, 1e-8, nullptr, level, budget_factor);
  if (phase1.w.lpNorm<Eigen::Infinity>() > kFeasibilityTolerance) {
    throw NumericalFailure(level, phase1.iterations, "frozen constraints are infeasible");
  }
  return phase1.qdot;
}

}  // namespace

LevelSolution solve_level(int n, std::span<const FrozenLevel> fixed, const Eigen::MatrixXd& A,
                          const Eigen::VectorXd& b, double regularization, const Eigen::VectorXd* start,
                          int level, int budget_factor) {
  if (n <= 0) throw DimensionMismatch("n must be positive");
  if (A.cols() != n) {
    throw DimensionMismatch("level " + std::to_string(level) + " has " + std::to_string(A.cols()) +
                            " columns, expected " + std::to_string(n));
  }
  if (A.rows() != b.size()) throw DimensionMismatch("level A/b row counts differ");
  if (regularization < 0.0) throw ValidationError("regularization must be non-negative");
  check_fixed(n, fixed);
  if (start && start->size() != n) throw DimensionMismatch("start vector has wrong size");

  const Eigen::Index m = A.rows();
  const Eigen::Index hard = frozen_rows(fixed);
  const Eigen::Index nz = n + m;

  DiagonalQp qp;
  qp.h.resize(nz);
  qp.h.head(n).setConstant(2.0 * regularization);
  qp.h.tail(m).setConstant(2.0);
  qp.G = Eigen::MatrixXd::Zero(m + hard, nz);
  qp.g.resize(m + hard);
  qp.G.topLeftCorner(m, n) = A;
  qp.G.block(0, n, m, m) = -Eigen::MatrixXd::Identity(m, m);
  qp.g.head(m) = b;
  fill_frozen(fixed, qp.G, qp.g, m, n);

  const Eigen::VectorXd q0 = start ? *start : feasible_start(n, fixed, level, budget_factor);
  Eigen::VectorXd z(nz);
  z.head(n) = q0;
  z.tail(m) = positive_part(A, b, q0);

  // The damping acts as a proximal term reg * ||q - q_ref||^2, re-centred on
  // each result, so the slack converges to the undamped optimum while
  // directions with curvature below reg stay damped.
  const int budget = budget_factor * static_cast<int>(std::max<Eigen::Index>(1, m + hard));
  qp.c = Eigen::VectorXd::Zero(nz);
  std::vector<Eigen::Index> working;
  LevelSolution out;
  for (int round = 0; round < kProximalRounds; ++round) {
    const Eigen::VectorXd q_ref = z.head(n);
    qp.c.head(n) = -2.0 * regularization * q_ref;
    QpResult res = solve_active_set(qp, z, std::move(working), budget, level);
    out.iterations += res.iterations;
    z = std::move(res.z);
    working = std::move(res.working);
    const double moved = (z.head(n) - q_ref).lpNorm<Eigen::Infinity>();
    if (regularization == 0.0 || moved <= 1e-13 * std::max(1.0, q_ref.lpNorm<Eigen::Infinity>())) break;
  }

  out.qdot = z.head(n);
  out.w = positive_part(A, b, out.qdot);
  return out;
}

Eigen::VectorXd minimum_norm_pass(int n, std::span<const FrozenLevel> fixed, const Eigen::VectorXd& start,
                                  int budget_factor, int* iterations) {
  check_fixed(n, fixed);
  if (start.size() != n) throw DimensionMismatch("start vector has wrong size");
  const Eigen::Index hard = frozen_rows(fixed);
  if (hard == 0) {
    if (iterations) *iterations = 0;
    return Eigen::VectorXd::Zero(n);
  }
  DiagonalQp qp;
  qp.h = Eigen::VectorXd::Constant(n, 2.0);
  qp.c = Eigen::VectorXd::Zero(n);
  qp.G.resize(hard, n);
  qp.g.resize(hard);
  fill_frozen(fixed, qp.G, qp.g, 0, n);
  const int level = fixed.empty() ? 0 : static_cast<int>(fixed.size()) + 1;
  const QpResult res = solve_active_set(qp, start, {}, budget_factor * static_cast<int>(hard), level);
  if (iterations) *iterations = res.iterations;
  return res.z;
}

CascadeSolution solve_cascade(const CascadeProblem& problem, const CascadeOptions& options) {
  problem.validate();
  CascadeSolution sol;
  const int n = problem.n;
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
  std::vector<FrozenLevel> frozen;
  frozen.reserve(problem.levels.size());

  for (const auto& lvl : problem.levels) {
    LevelSolution ls;
    try {
      ls = solve_level(n, frozen, lvl.A, lvl.b, options.regularization, &q, lvl.level, options.budget_factor);
    } catch (const NumericalFailure& e) {
      throw NumericalFailure(lvl.level, e.iterations(),
                             "cascade level " + std::to_string(lvl.level) + ": " + e.what());
    }
    q = ls.qdot;
    sol.iterations += ls.iterations;
    sol.levels.push_back(lvl.level);
    sol.objective_per_level.push_back(ls.w.norm());
    sol.slacks.push_back(ls.w);
    frozen.push_back(FrozenLevel{lvl.A, lvl.b, std::move(ls.w)});
  }

  int final_iterations = 0;
  sol.qdot = minimum_norm_pass(n, frozen, q, options.budget_factor, &final_iterations);
  sol.iterations += final_iterations;
  return sol;
}

std::string dump(const CascadeProblem& problem) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "cascade n=" << problem.n << " levels=" << problem.levels.size() << "\n";
  for (const auto& lvl : problem.levels) {
    os << "level " << lvl.level << " rows=" << lvl.A.rows() << "\n";
    for (Eigen::Index i = 0; i < lvl.A.rows(); ++i) {
      os << " ";
      for (Eigen::Index j = 0; j < lvl.A.cols(); ++j) os << ' ' << lvl.A(i, j);
      os << "  <=  " << (i < lvl.b.size() ? lvl.b(i) : std::numeric_limits<double>::quiet_NaN()) << "\n";
    }
  }
  return os.str();
}

}  // namespace sotbt
