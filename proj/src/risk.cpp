#include "cvar_mdp/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cvar_mdp/errors.hpp"

namespace cvar_mdp {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw DomainError("confidence level alpha = " + std::to_string(alpha) + " outside (0, 1]");
  }
}

std::vector<std::size_t> ascending_order(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

double expected_excess(const DiscreteDistribution& dist, double w) {
  double s = 0.0;
  for (std::size_t i = 0; i < dist.outcomes.size(); ++i) {
    const double d = dist.outcomes[i] - w;
    if (d > 0.0) s += dist.probabilities[i] * d;
  }
  return s;
}

}  // namespace

DiscreteDistribution DiscreteDistribution::uniform(std::vector<double> outcomes) {
  DiscreteDistribution d;
  const double p = 1.0 / static_cast<double>(outcomes.size());
  d.probabilities.assign(outcomes.size(), p);
  d.outcomes = std::move(outcomes);
  return d;
}

DiscreteDistribution DiscreteDistribution::point_mass(double value) {
  return DiscreteDistribution{{value}, {1.0}};
}

void DiscreteDistribution::validate() const {
  if (outcomes.empty() || outcomes.size() != probabilities.size()) {
    throw DomainError("distribution needs matching, non-empty outcome and probability lists");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!std::isfinite(outcomes[i])) throw DomainError("non-finite outcome");
    if (!(probabilities[i] >= 0.0)) throw DomainError("negative probability");
    sum += probabilities[i];
  }
  if (std::abs(sum - 1.0) > 1e-12) throw DomainError("probabilities do not sum to 1");
}

double DiscreteDistribution::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) m += probabilities[i] * outcomes[i];
  return m;
}

double DiscreteDistribution::max() const {
  return *std::max_element(outcomes.begin(), outcomes.end());
}

double var_discrete(const DiscreteDistribution& dist, double alpha) {
  check_alpha(alpha);
  dist.validate();
  const auto order = ascending_order(dist.outcomes);
  double cdf = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    cdf += dist.probabilities[order[k]];
    // Do not stop inside a run of equal outcomes: F jumps only after the whole atom.
    const bool atom_end =
        k + 1 == order.size() || dist.outcomes[order[k + 1]] != dist.outcomes[order[k]];
    if (atom_end && cdf >= alpha) return dist.outcomes[order[k]];
  }
  // Rounding left the cumulative sum a hair below alpha = 1.
  return dist.outcomes[order.back()];
}

CvarPrimalResult cvar_primal(const DiscreteDistribution& dist, double alpha) {
  check_alpha(alpha);
  dist.validate();
  if (alpha == 1.0) {
    // Every w <= min(Z) attains the minimum and the objective there is E[Z].
    const double lo = *std::min_element(dist.outcomes.begin(), dist.outcomes.end());
    return {dist.mean(), lo};
  }

  // Objective g(w) = w + E[(Z-w)^+]/alpha is convex piecewise linear with kinks
  // at the outcomes, so its minimum sits on one of them. Scan all of them using
  // tail sums, then re-evaluate the best candidate and its neighbours directly.
  const auto order = ascending_order(dist.outcomes);
  const std::size_t n = order.size();
  std::vector<double> tail_p(n + 1, 0.0), tail_pz(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    tail_p[k] = tail_p[k + 1] + dist.probabilities[order[k]];
    tail_pz[k] = tail_pz[k + 1] + dist.probabilities[order[k]] * dist.outcomes[order[k]];
  }
  std::size_t best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const double w = dist.outcomes[order[k]];
    // Outcomes strictly above w start after the run of values equal to w.
    std::size_t j = k + 1;
    while (j < n && dist.outcomes[order[j]] == w) ++j;
    const double g = w + (tail_pz[j] - w * tail_p[j]) / alpha;
    if (g < best_val) {
      best_val = g;
      best = k;
    }
  }

  CvarPrimalResult result{std::numeric_limits<double>::infinity(), 0.0};
  const std::size_t lo = best == 0 ? 0 : best - 1;
  const std::size_t hi = std::min(n - 1, best + 1);
  for (std::size_t k = lo; k <= hi; ++k) {
    const double w = dist.outcomes[order[k]];
    const double g = w + expected_excess(dist, w) / alpha;
    if (g < result.value) result = {g, w};
  }
  return result;
}

CvarDualResult cvar_dual(const DiscreteDistribution& dist, double alpha) {
  check_alpha(alpha);
  dist.validate();
  const std::size_t n = dist.outcomes.size();

  // Merge equal outcomes into atoms, largest first.
  auto order = ascending_order(dist.outcomes);
  std::reverse(order.begin(), order.end());
  std::vector<double> weights(n, 0.0);
  const double cap = 1.0 / alpha;
  double budget = alpha == 1.0 ? 0.0 : 1.0;  // remaining mass of sum(xi * p)
  if (alpha == 1.0) weights.assign(n, 1.0);  // the envelope is the single point xi = 1
  for (std::size_t k = 0; k < n && budget > 0.0;) {
    std::size_t j = k;
    double atom_p = 0.0;
    while (j < n && dist.outcomes[order[j]] == dist.outcomes[order[k]]) {
      atom_p += dist.probabilities[order[j]];
      ++j;
    }
    if (atom_p > 0.0) {
      const double w = std::min(cap, budget / atom_p);
      for (std::size_t m = k; m < j; ++m) weights[order[m]] = w;
      budget -= w * atom_p;
    }
    k = j;
  }

  CvarDualResult result;
  for (std::size_t i = 0; i < n; ++i) {
    result.value += weights[i] * dist.probabilities[i] * dist.outcomes[i];
  }
  result.xi = RiskEnvelopeWeights{std::move(weights), alpha};
  return result;
}

bool in_risk_envelope(const RiskEnvelopeWeights& xi, const std::vector<double>& probabilities,
                      double tol) {
  if (xi.weights.size() != probabilities.size()) return false;
  const double cap = 1.0 / xi.alpha;
  double mass = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (xi.weights[i] < -tol || xi.weights[i] > cap + tol) return false;
    mass += xi.weights[i] * probabilities[i];
  }
  return std::abs(mass - 1.0) <= tol;
}

}  // namespace cvar_mdp
