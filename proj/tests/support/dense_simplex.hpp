#pragma once

#include <vector>

namespace cvar_mdp::testing {

enum class Sense { kLessEqual, kEqual, kGreaterEqual };

struct LinearConstraint {
  std::vector<double> coefficients;
  Sense sense = Sense::kLessEqual;
  double rhs = 0.0;
};

/// maximize objective . x  subject to the constraints and x >= 0.
struct LinearProgram {
  std::vector<double> objective;
  std::vector<LinearConstraint> constraints;
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

struct LpSolution {
  LpStatus status = LpStatus::kInfeasible;
  double value = 0.0;
  std::vector<double> x;
};

/// Two-phase dense tableau simplex with Bland's rule. Reference use only.
LpSolution solve_lp(const LinearProgram& lp);

}  // namespace cvar_mdp::testing
