#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "cvar_mdp/mdp.hpp"
#include "cvar_mdp/policy.hpp"
#include "cvar_mdp/risk.hpp"

namespace cvar_mdp {

inline constexpr std::size_t kMaxTrajectories = 1'000'000;
inline constexpr std::size_t kMaxPolicies = 10'000'000;

/// Deterministic history-dependent policy: history x_0..x_k -> a_k.
using HistoryPolicy = std::function<ActionIndex(std::span<const StateIndex> history)>;

/// Time-dependent Markov policy, actions[t][x].
using MarkovPolicy = std::vector<std::vector<ActionIndex>>;

HistoryPolicy stationary_policy(std::vector<ActionIndex> action_per_state);
HistoryPolicy markov_history_policy(MarkovPolicy policy);

/// The augmented policy started at y_0 = alpha, with y replayed along the
/// history (same update as rollout()).
HistoryPolicy augmented_history_policy(const AugmentedPolicy& policy, double alpha);

struct TrajectoryRecord {
  std::vector<StateIndex> states;  // x_0..x_T
  double probability = 0.0;
  double cost = 0.0;               // sum_t gamma^t C(x_t, a_t), t < T
};

struct TrajectoryDistribution {
  std::vector<TrajectoryRecord> trajectories;

  DiscreteDistribution cost_distribution() const;
  double mean() const;
  double total_probability() const;
};

/// All positive-probability paths of T transitions from the initial state.
/// Throws SizeError when more than max_trajectories would be produced.
TrajectoryDistribution enumerate_policy_cost_distribution(
    const MdpModel& model, const HistoryPolicy& policy, std::size_t horizon,
    std::size_t max_trajectories = kMaxTrajectories);

struct OptimalCvar {
  double value = 0.0;
  double w = 0.0;                                          // primal minimizer
  std::map<std::vector<StateIndex>, ActionIndex> actions;  // keyed by history
  std::size_t candidates = 0;                              // w values examined

  HistoryPolicy policy() const;
};

/// min over deterministic history-dependent policies of CVaR_alpha(C_{0,T}).
///
/// Exchanges the two minimizations of the primal form: for every candidate w
/// (each attainable discounted path cost) the policy minimizing
/// E[(C - w)^+] is found by backward induction over the history tree.
/// Throws SizeError when the tree has more than max_paths leaves.
OptimalCvar brute_force_optimal_cvar(const MdpModel& model, double alpha, std::size_t horizon,
                                     std::size_t max_paths = kMaxTrajectories);

/// The same minimum by listing every deterministic history-dependent policy
/// (one action per reachable history of length < T) and evaluating each one. Throws
/// SizeError beyond max_policies.
OptimalCvar enumerate_history_policies_cvar(const MdpModel& model, double alpha,
                                            std::size_t horizon,
                                            std::size_t max_policies = kMaxPolicies);

struct OptimalMarkovCvar {
  double value = 0.0;
  MarkovPolicy policy;
};

/// Minimum over time-dependent Markov policies. Only actions at states
/// reachable at time t are enumerated. Throws SizeError beyond max_policies.
OptimalMarkovCvar enumerate_markov_policies_cvar(const MdpModel& model, double alpha,
                                                 std::size_t horizon,
                                                 std::size_t max_policies = kMaxPolicies);

struct OracleValues {
  std::vector<double> values;
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Expected-cost value iteration until the sup-norm change is <= tolerance.
OracleValues risk_neutral_vi(const MdpModel& model, double tolerance,
                             std::size_t max_iterations = 1'000'000);

/// Worst-case value iteration over positive-probability successors.
OracleValues minimax_vi(const MdpModel& model, double tolerance,
                        std::size_t max_iterations = 1'000'000);

/// E[C_{0,T}] of a Markov policy by backward induction, per start state.
std::vector<double> finite_horizon_policy_value(const MdpModel& model, const MarkovPolicy& policy,
                                                std::size_t horizon);

struct PerturbationBudget {
  double eta = 1.0;

  void validate() const;  // DomainError unless eta >= 1
};

struct PerturbedExpectation {
  double value = 0.0;
  std::vector<double> delta;  // per trajectory, 0 <= delta <= eta, E[delta] = 1
};

/// sup of E[delta C] over trajectory weights 0 <= delta <= eta with
/// E[delta] = 1: the most expensive trajectories are loaded to eta first.
PerturbedExpectation worst_case_perturbed_expectation(const TrajectoryDistribution& dist,
                                                      const PerturbationBudget& budget);

PerturbedExpectation worst_case_perturbed_expectation(const MdpModel& model,
                                                      const HistoryPolicy& policy,
                                                      std::size_t horizon,
                                                      const PerturbationBudget& budget);

}  // namespace cvar_mdp
