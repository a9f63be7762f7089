#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "cvar_mdp/bellman.hpp"
#include "cvar_mdp/interpolation.hpp"
#include "cvar_mdp/mdp.hpp"

namespace cvar_mdp {

/// Below this confidence a rollout follows the y = 0 (worst-case) branch for
/// the rest of the trajectory.
inline constexpr double kConfidenceUnderflow = 1e-12;

struct GreedyDecision {
  ActionIndex action = 0;
  std::vector<double> xi;  // over model.successors(x, action)
  double value = 0.0;      // the backup value at (x, y)
};

/// Greedy policy on the augmented state (x, y) for a value table: the argmin
/// of the interpolated backup, together with the maximizing xi. Decisions at
/// grid points are cached at construction. Cheap to copy.
class AugmentedPolicy {
 public:
  AugmentedPolicy(MdpModel model, InterpolationGrid grid, ValueTable values,
                  std::size_t threads = 1);
  static AugmentedPolicy from_solution(const MdpModel& model, const SolveResult& result,
                                       std::size_t threads = 1);

  const MdpModel& model() const;
  const InterpolationGrid& grid() const;
  const ValueTable& values() const;

  ActionIndex cached_action(StateIndex x, std::size_t i) const;
  const std::vector<double>& cached_xi(StateIndex x, std::size_t i) const;

  /// Re-solves the backup at exactly y. At y = 0 xi puts weight 1/p on a
  /// worst successor (highest V(x', 0), ties to the lowest state index).
  /// Throws DomainError for y outside [0, 1].
  GreedyDecision greedy_action(StateIndex x, double y) const;

  /// Interpolated value I_x[V](y) / y (V(x, 0) at y = 0).
  double value(StateIndex x, double y) const;

 private:
  struct State;
  std::shared_ptr<const State> state_;
};

struct Rollout {
  std::vector<StateIndex> states;    // x_0 .. x_T
  std::vector<double> confidences;   // y_0 .. y_T
  std::vector<ActionIndex> actions;  // a_0 .. a_{T-1}
  std::vector<double> stage_costs;   // Z_0 .. Z_{T-1}
  double discounted_total = 0.0;
  std::uint64_t seed = 0;
};

struct RolloutOptions {
  double alpha = 1.0;
  std::size_t horizon = 100;
  std::uint64_t seed = 0;
  // Dynamics to sample from; nullptr means the policy's own model. Must have
  // the same state and action sets. A successor outside the policy model's
  // support leaves y unchanged.
  const MdpModel* dynamics = nullptr;
  StateIndex start = -1;  // < 0: the model's initial state
};

/// Simulates the history-dependent policy a_k = u*(x_k, y_k), y_0 = alpha,
/// y_{k+1} = y_k xi*(x_{k+1}). Throws DomainError for alpha outside (0, 1].
Rollout rollout(const AugmentedPolicy& policy, const RolloutOptions& options);

struct Histogram {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<std::size_t> counts;

  double bin_width() const;
  double center(std::size_t bin) const;
};

/// Equal-width bins over [min, max] of the sample; the last bin is closed.
/// A constant sample puts everything in one bin of width zero.
Histogram make_histogram(const std::vector<double>& sample, std::size_t bins);

struct PolicyEvaluation {
  double cvar = 0.0;
  double mean = 0.0;
  double std_error = 0.0;      // of the mean
  std::vector<double> costs;   // discounted totals, in rollout order
  Histogram histogram;
};

/// n_rollouts independent rollouts (rollout i seeded by derive_seed(seed, i));
/// empirical CVaR_alpha through cvar_primal on the uniform empirical law.
PolicyEvaluation evaluate_cvar_of_policy(const AugmentedPolicy& policy, double alpha,
                                         std::size_t horizon, std::size_t n_rollouts,
                                         std::uint64_t seed, std::size_t bins = 40,
                                         const MdpModel* dynamics = nullptr,
                                         std::size_t threads = 1);

/// "step,state,y,action,cost"; the final row carries x_T, y_T and empty fields.
void write_rollout_csv(std::ostream& out, const Rollout& r);
/// "cost,count" with bin centers.
void write_histogram_csv(std::ostream& out, const Histogram& h);

}  // namespace cvar_mdp
