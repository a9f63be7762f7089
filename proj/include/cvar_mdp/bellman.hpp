#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "cvar_mdp/interpolation.hpp"
#include "cvar_mdp/mdp.hpp"

namespace cvar_mdp {

inline constexpr double kConcavityTolerance = 1e-7;

enum class InitialValue { kZero, kConstant, kTable };

/// Snapshot handed to SolverConfig::on_sweep after every Bellman sweep (before
/// any refinement of that sweep).
struct SweepInfo {
  std::size_t sweep = 0;  // 1-based
  const InterpolationGrid* grid = nullptr;
  const ValueTable* values = nullptr;
  double residual = 0.0;
};

struct SolverConfig {
  // Initial grid: n_points log-spaced points starting at y_min (ignored when
  // the initial value is a user table, whose grid is used instead).
  std::size_t n_points = 21;
  double y_min = 1e-2;

  // Adaptive refinement of [0, y_2].
  bool refine = true;
  double epsilon = 0.0;      // <= 0: 1e-2 * c_max / (1 - gamma)
  double theta_cap = 0.0;    // fill ratio cap; <= 0: the grid's own theta
  std::size_t max_points_per_state = 64;

  // Stopping rule: sup-norm change between sweeps.
  double tolerance = 0.0;    // <= 0: 1e-6 * c_max / (1 - gamma)
  std::size_t max_iterations = 10000;

  InitialValue initial_value = InitialValue::kZero;
  double initial_constant = 0.0;
  std::optional<GridAndValues> initial_table;
  double lipschitz_m0 = -1.0;  // < 0: derived from the initial value

  std::size_t threads = 0;  // 0: CVAR_MDP_THREADS or hardware concurrency
  std::function<void(const SweepInfo&)> on_sweep;
};

/// Bounds on the gap between the interpolated fixed point and the optimal
/// CVaR value function.
struct ErrorBounds {
  double apriori = 0.0;      // gamma/(1-gamma) * (2M(theta-1) + epsilon)
  double finite_time = 0.0;  // after n sweeps from V_0
};

/// M = c_max/(1-gamma) + m0 bounds the Lipschitz constant of y V_t(x, y).
ErrorBounds interpolation_error_bound(double theta, double epsilon, double gamma, double c_max,
                                 double m0, std::size_t n_iterations, double v0_sup = 0.0);

struct SolveResult {
  ValueTable value;
  InterpolationGrid grid;
  std::size_t iterations = 0;
  std::vector<double> residual_history;
  double error_bound = 0.0;        // a-priori bound with theta/epsilon below
  double finite_time_bound = 0.0;
  bool converged = false;

  double tolerance = 0.0;
  double theta = 0.0;              // grid.theta() of the final grid
  double epsilon = 0.0;            // max(configured epsilon, final low-confidence gap)
  double lipschitz_m0 = 0.0;
  double max_gap_observed = 0.0;   // max over sweeps of V(x,0) - V(x,y_2)
  std::vector<std::size_t> refinement_sweeps;
  std::vector<StateIndex> capped_states;
};

/// Result of one application of the interpolated Bellman operator on a grid.
struct BellmanSweep {
  ValueTable values;
  // Filled when policy recording is requested; indexed like the grid cells.
  std::vector<ActionIndex> actions;
  // xi over model.successors(x, action) for the chosen action, per cell.
  std::vector<std::vector<double>> xi;
};

/// T_I[V] at every grid point. y_i = 0 uses the worst-case successor form;
/// y_i > 0 solves the envelope problem exactly with the greedy segment merge.
/// Ties between actions go to the lowest index. Throws StructuralError when
/// y V(x, .) is not concave on the grid (beyond kConcavityTolerance).
BellmanSweep apply_interpolated_bellman(const ValueTable& v, const InterpolationGrid& grid,
                                        const MdpModel& model, bool record_policy = false,
                                        std::size_t threads = 1);

/// Jacobi sweeps of T_I from the initial value until the sup-norm
/// change is within tolerance (and no refinement happened in that sweep) or
/// max_iterations is reached.
SolveResult value_iteration(const MdpModel& model, const SolverConfig& config = {});

/// Worker count from CVAR_MDP_THREADS (0 or unset: hardware concurrency).
std::size_t default_thread_count();

}  // namespace cvar_mdp
