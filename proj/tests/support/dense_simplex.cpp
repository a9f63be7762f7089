#include "dense_simplex.hpp"

#include <cmath>
#include <limits>

namespace cvar_mdp::testing {

namespace {

constexpr double kEps = 1e-11;

struct Tableau {
  // rows_ x cols_; last column is the right-hand side, last row the objective
  // (stored as reduced costs of a minimization).
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;
  std::vector<std::size_t> basis;

  double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }

  void pivot(std::size_t pr, std::size_t pc) {
    const double p = at(pr, pc);
    for (std::size_t c = 0; c < cols; ++c) at(pr, c) /= p;
    for (std::size_t r = 0; r < rows; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < cols; ++c) at(r, c) -= f * at(pr, c);
    }
    basis[pr] = pc;
  }

  // Minimizes the objective row over columns [0, n_allowed). Returns false
  // when unbounded.
  bool run(std::size_t n_allowed) {
    const std::size_t obj = rows - 1;
    for (;;) {
      std::size_t pc = n_allowed;
      for (std::size_t c = 0; c < n_allowed; ++c) {
        if (at(obj, c) < -kEps) {
          pc = c;
          break;
        }
      }
      if (pc == n_allowed) return true;
      std::size_t pr = obj;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < obj; ++r) {
        if (at(r, pc) > kEps) {
          const double ratio = at(r, cols - 1) / at(r, pc);
          if (ratio < best - kEps || (std::abs(ratio - best) <= kEps && basis[r] < basis[pr])) {
            best = ratio;
            pr = r;
          }
        }
      }
      if (pr == obj) return false;
      pivot(pr, pc);
    }
  }
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp) {
  const std::size_t n = lp.objective.size();
  const std::size_t m = lp.constraints.size();
  std::size_t n_slack = 0, n_art = 0;
  for (const auto& c : lp.constraints) {
    const bool flip = c.rhs < 0.0;
    Sense s = c.sense;
    if (flip && s != Sense::kEqual) s = s == Sense::kLessEqual ? Sense::kGreaterEqual : Sense::kLessEqual;
    if (s != Sense::kEqual) ++n_slack;
    if (s != Sense::kLessEqual) ++n_art;
  }
  Tableau t;
  t.rows = m + 1;
  t.cols = n + n_slack + n_art + 1;
  t.a.assign(t.rows * t.cols, 0.0);
  t.basis.assign(m + 1, 0);
  std::size_t slack = n, art = n + n_slack;
  std::vector<std::size_t> art_rows;
  for (std::size_t r = 0; r < m; ++r) {
    const auto& c = lp.constraints[r];
    const double sign = c.rhs < 0.0 ? -1.0 : 1.0;
    Sense s = c.sense;
    if (sign < 0.0 && s != Sense::kEqual) {
      s = s == Sense::kLessEqual ? Sense::kGreaterEqual : Sense::kLessEqual;
    }
    for (std::size_t j = 0; j < n; ++j) t.at(r, j) = sign * c.coefficients[j];
    t.at(r, t.cols - 1) = sign * c.rhs;
    if (s == Sense::kLessEqual) {
      t.at(r, slack) = 1.0;
      t.basis[r] = slack++;
    } else {
      if (s == Sense::kGreaterEqual) t.at(r, slack++) = -1.0;
      t.at(r, art) = 1.0;
      t.basis[r] = art++;
      art_rows.push_back(r);
    }
  }

  LpSolution sol;
  const std::size_t obj = m;
  // Phase 1: minimize the sum of artificials.
  if (n_art > 0) {
    for (std::size_t r : art_rows) {
      for (std::size_t c = 0; c < t.cols; ++c) t.at(obj, c) -= t.at(r, c);
    }
    for (std::size_t c = n + n_slack; c < n + n_slack + n_art; ++c) t.at(obj, c) = 0.0;
    t.run(n + n_slack + n_art);
    if (-t.at(obj, t.cols - 1) > 1e-9) {
      sol.status = LpStatus::kInfeasible;
      return sol;
    }
    // Drive remaining artificials out of the basis where possible.
    for (std::size_t r = 0; r < m; ++r) {
      if (t.basis[r] < n + n_slack) continue;
      for (std::size_t c = 0; c < n + n_slack; ++c) {
        if (std::abs(t.at(r, c)) > kEps) {
          t.pivot(r, c);
          break;
        }
      }
    }
  }
  // Phase 2: minimize -objective.
  for (std::size_t c = 0; c < t.cols; ++c) t.at(obj, c) = 0.0;
  for (std::size_t j = 0; j < n; ++j) t.at(obj, j) = -lp.objective[j];
  for (std::size_t r = 0; r < m; ++r) {
    const double f = t.at(obj, t.basis[r]);
    if (f == 0.0) continue;
    for (std::size_t c = 0; c < t.cols; ++c) t.at(obj, c) -= f * t.at(r, c);
  }
  if (!t.run(n + n_slack)) {
    sol.status = LpStatus::kUnbounded;
    return sol;
  }
  sol.status = LpStatus::kOptimal;
  sol.x.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    if (t.basis[r] < n) sol.x[t.basis[r]] = t.at(r, t.cols - 1);
  }
  for (std::size_t j = 0; j < n; ++j) sol.value += lp.objective[j] * sol.x[j];
  return sol;
}

}  // namespace cvar_mdp::testing
