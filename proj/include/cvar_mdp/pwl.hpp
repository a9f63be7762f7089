#pragma once

#include <span>
#include <vector>

#include "cvar_mdp/interpolation.hpp"

namespace cvar_mdp {

/// max sum_j p_j f_j(z_j)  s.t.  0 <= z_j <= 1,  sum_j p_j z_j = budget,
/// with every f_j concave piecewise linear on [0, 1].
struct SeparablePwlProblem {
  std::vector<double> weights;                 // p_j > 0, summing to 1
  std::vector<PwlConcaveFunction> objectives;  // f_j on [0, 1]
  double budget = 1.0;                         // y in (0, 1]
};

struct PwlSolution {
  std::vector<double> z;
  double objective_value = 0.0;
  std::vector<double> xi;  // z_j / budget, a point of the CVaR envelope U(budget, p)
};

/// Exact maximizer: the budget is spent on segments in non-increasing slope
/// order, splitting the last one. Equal slopes (1e-12 relative) go to the
/// lower successor index first, then the lower segment index.
///
/// Throws StructuralError for a non-concave f_j and DomainError for a budget
/// outside (0, 1] or malformed weights.
PwlSolution maximize_separable_pwl(const SeparablePwlProblem& problem);

/// One successor's segments as seen by the greedy merge: consuming length
/// lengths[k] of segment k costs weight * lengths[k] of budget and gains at
/// rate slopes[k] per unit of budget.
struct SegmentSource {
  double weight = 0.0;
  std::span<const double> slopes;
  std::span<const double> lengths;
};

/// Segments of several sources in greedy allocation order with running
/// budget and gain totals. Reusable across calls to avoid reallocation.
class SegmentMerge {
 public:
  inline static constexpr double kTieTolerance = 1e-12;

  void build(std::span<const SegmentSource> sources);

  std::size_t size() const { return source_.size(); }
  /// sum_j weight_j * (total length of j).
  double total_budget() const { return cum_budget_.back(); }

  /// Gain sum_j p_j (f_j(z_j) - f_j(0)) of the greedy allocation of `budget`.
  /// Budgets beyond total_budget() saturate.
  double gain(double budget) const;

  /// Gains for ascending budgets in one pass.
  void gains_sorted(std::span<const double> budgets, std::span<double> out) const;

  /// Per-source allocation z_j (in segment-length units) for `budget`.
  void allocation(double budget, std::span<double> z) const;

 private:
  std::size_t segment_for(double budget) const;

  std::vector<std::size_t> source_;
  std::vector<double> slope_;
  std::vector<double> length_;      // in source units (z)
  std::vector<double> cum_budget_;  // size()+1 prefix sums of weight*length
  std::vector<double> cum_gain_;    // size()+1 prefix sums of weight*length*slope
  std::vector<std::size_t> head_;   // scratch for the k-way merge
};

}  // namespace cvar_mdp
