#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cvar_mdp/interpolation.hpp"
#include "cvar_mdp/mdp.hpp"
#include "cvar_mdp/pwl.hpp"
#include "cvar_mdp/risk.hpp"
#include "cvar_mdp/rng.hpp"

namespace cvar_mdp::testing {

struct MdpShape {
  std::size_t min_states = 1;
  std::size_t max_states = 3;
  std::size_t min_actions = 1;
  std::size_t max_actions = 2;
  std::size_t max_successors = 3;
  double gamma = 0.9;
  double max_cost = 10.0;
  bool integer_costs = false;
};

/// Random valid MDP; probabilities are multiples of 1/8 so that path
/// probabilities stay exact in binary.
MdpModel random_mdp(Rng& rng, const MdpShape& shape);

/// n outcomes in [lo, hi) with random probabilities; ties are forced with
/// probability one half.
DiscreteDistribution random_distribution(Rng& rng, std::size_t n, double lo = -10.0,
                                         double hi = 10.0);

/// Table whose rows y_i V(x, y_i) are concave in i and vanish at y = 0:
/// V(x, y_i) = sum of slopes / y_i with non-increasing random slopes.
ValueTable random_concave_table(Rng& rng, const InterpolationGrid& grid, double scale);

/// Random concave PWL on [0, 1] with up to max_segments segments.
PwlConcaveFunction random_concave_pwl(Rng& rng, std::size_t max_segments);

SeparablePwlProblem random_pwl_problem(Rng& rng, std::size_t max_successors,
                                       std::size_t max_segments);

/// Hypograph LP value of the separable problem, via the dense simplex.
double hypograph_lp_value(const SeparablePwlProblem& problem);

/// Best objective over z_j taken from a grid of spacing 1/steps plus each
/// function's breakpoints, with one coordinate (each in turn) solved from the
/// budget constraint.
double fine_grid_value(const SeparablePwlProblem& problem, std::size_t steps);

}  // namespace cvar_mdp::testing
