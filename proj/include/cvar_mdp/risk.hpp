#pragma once

#include <vector>

namespace cvar_mdp {

/// Finite random cost: outcome values with their probabilities.
struct DiscreteDistribution {
  std::vector<double> outcomes;
  std::vector<double> probabilities;

  static DiscreteDistribution uniform(std::vector<double> outcomes);
  static DiscreteDistribution point_mass(double value);

  /// Throws DomainError unless probabilities are nonnegative and sum to 1
  /// (within 1e-12) and outcomes are finite.
  void validate() const;
  double mean() const;
  double max() const;
};

/// Distortion weights xi(omega) of the CVaR risk envelope at level alpha.
struct RiskEnvelopeWeights {
  std::vector<double> weights;
  double alpha = 1.0;
};

struct CvarPrimalResult {
  double value = 0.0;
  double minimizer = 0.0;  // the w attaining the minimum
};

struct CvarDualResult {
  double value = 0.0;
  RiskEnvelopeWeights xi;
};

/// min{z : F(z) >= alpha}.
double var_discrete(const DiscreteDistribution& dist, double alpha);

/// min over w of w + E[(Z - w)^+] / alpha, scanned over the outcome values.
CvarPrimalResult cvar_primal(const DiscreteDistribution& dist, double alpha);

/// max of E[xi Z] over 0 <= xi <= 1/alpha, E[xi] = 1, by loading the largest
/// outcomes first. Equal outcomes are merged and share one weight.
CvarDualResult cvar_dual(const DiscreteDistribution& dist, double alpha);

/// True when xi lies in the envelope U(alpha, P) within `tol`.
bool in_risk_envelope(const RiskEnvelopeWeights& xi, const std::vector<double>& probabilities,
                      double tol = 1e-9);

}  // namespace cvar_mdp
