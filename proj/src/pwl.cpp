#include "cvar_mdp/pwl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cvar_mdp/errors.hpp"

namespace cvar_mdp {

void SegmentMerge::build(std::span<const SegmentSource> sources) {
  source_.clear();
  slope_.clear();
  length_.clear();
  cum_budget_.assign(1, 0.0);
  cum_gain_.assign(1, 0.0);
  head_.assign(sources.size(), 0);

  // k-way merge over per-source segment lists. Each list is already in
  // non-increasing slope order (concavity), so taking heads preserves the
  // left-to-right fill order within a source.
  for (;;) {
    std::size_t best = sources.size();
    double best_slope = 0.0;
    for (std::size_t j = 0; j < sources.size(); ++j) {
      const auto& src = sources[j];
      std::size_t& h = head_[j];
      while (h < src.slopes.size() && !(src.lengths[h] > 0.0)) ++h;
      if (h == src.slopes.size()) continue;
      const double s = src.slopes[h];
      if (best == sources.size()) {
        best = j;
        best_slope = s;
        continue;
      }
      const double scale = std::max(std::abs(s), std::abs(best_slope));
      if (s - best_slope > kTieTolerance * scale) {
        best = j;
        best_slope = s;
      }
    }
    if (best == sources.size()) break;
    const auto& src = sources[best];
    const std::size_t k = head_[best]++;
    const double budget = src.weight * src.lengths[k];
    source_.push_back(best);
    slope_.push_back(src.slopes[k]);
    length_.push_back(src.lengths[k]);
    cum_budget_.push_back(cum_budget_.back() + budget);
    cum_gain_.push_back(cum_gain_.back() + budget * src.slopes[k]);
  }
}

std::size_t SegmentMerge::segment_for(double budget) const {
  // First segment whose cumulative end reaches the budget.
  const auto it = std::lower_bound(cum_budget_.begin() + 1, cum_budget_.end(), budget);
  return static_cast<std::size_t>(it - cum_budget_.begin()) - 1;
}

double SegmentMerge::gain(double budget) const {
  if (!(budget > 0.0)) return 0.0;
  if (budget >= total_budget()) return cum_gain_.back();
  const std::size_t k = segment_for(budget);
  return cum_gain_[k] + slope_[k] * (budget - cum_budget_[k]);
}

void SegmentMerge::gains_sorted(std::span<const double> budgets, std::span<double> out) const {
  std::size_t k = 0;
  const std::size_t n = size();
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    const double b = budgets[i];
    if (!(b > 0.0)) {
      out[i] = 0.0;
      continue;
    }
    if (b >= total_budget()) {
      out[i] = cum_gain_.back();
      continue;
    }
    while (k + 1 < n && cum_budget_[k + 1] < b) ++k;
    out[i] = cum_gain_[k] + slope_[k] * (b - cum_budget_[k]);
  }
}

void SegmentMerge::allocation(double budget, std::span<double> z) const {
  std::fill(z.begin(), z.end(), 0.0);
  if (!(budget > 0.0)) return;
  const bool saturated = budget >= total_budget();
  const std::size_t last = saturated ? size() : segment_for(budget);
  for (std::size_t k = 0; k < last; ++k) z[source_[k]] += length_[k];
  if (!saturated) {
    const double used = budget - cum_budget_[last];
    const double w = (cum_budget_[last + 1] - cum_budget_[last]) / length_[last];
    z[source_[last]] += std::min(length_[last], used / w);
  }
}

PwlSolution maximize_separable_pwl(const SeparablePwlProblem& problem) {
  const std::size_t n = problem.weights.size();
  if (n == 0 || problem.objectives.size() != n) {
    throw DomainError("separable problem needs one objective per positive weight");
  }
  if (!(problem.budget > 0.0 && problem.budget <= 1.0)) {
    throw DomainError("budget " + std::to_string(problem.budget) + " outside (0, 1]");
  }
  double weight_sum = 0.0;
  for (double p : problem.weights) {
    if (!(p > 0.0)) throw DomainError("successor weights must be positive");
    weight_sum += p;
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) throw DomainError("successor weights must sum to 1");

  std::vector<std::vector<double>> slopes(n), lengths(n);
  std::vector<SegmentSource> sources(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& f = problem.objectives[j];
    if (f.breakpoints.size() < 2 || f.breakpoints.size() != f.values.size() ||
        f.breakpoints.front() != 0.0 || f.breakpoints.back() != 1.0) {
      throw StructuralError("objective " + std::to_string(j) + " must be defined on [0, 1]");
    }
    if (!f.is_concave(1e-9)) {
      throw StructuralError("objective " + std::to_string(j) + " is not concave");
    }
    slopes[j] = f.slopes();
    for (std::size_t k = 0; k + 1 < f.breakpoints.size(); ++k) {
      lengths[j].push_back(f.breakpoints[k + 1] - f.breakpoints[k]);
    }
    sources[j] = SegmentSource{problem.weights[j], slopes[j], lengths[j]};
  }

  SegmentMerge merge;
  merge.build(sources);

  PwlSolution sol;
  sol.z.assign(n, 0.0);
  if (problem.budget >= 1.0 || problem.budget >= merge.total_budget()) {
    std::fill(sol.z.begin(), sol.z.end(), 1.0);
  } else {
    merge.allocation(problem.budget, sol.z);
  }
  sol.xi.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    sol.z[j] = std::clamp(sol.z[j], 0.0, 1.0);
    sol.objective_value += problem.weights[j] * problem.objectives[j].evaluate(sol.z[j]);
    sol.xi[j] = sol.z[j] / problem.budget;
  }
  return sol;
}

}  // namespace cvar_mdp
