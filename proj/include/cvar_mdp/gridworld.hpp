#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cvar_mdp/bellman.hpp"
#include "cvar_mdp/mdp.hpp"
#include "cvar_mdp/policy.hpp"

namespace cvar_mdp {

/// Grid cell (i, j): column i in [0, width), row j in [0, height). Row 0 is
/// the top; "up" decreases j.
struct Cell {
  int i = 0;
  int j = 0;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

enum class Move { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

struct GridSpec {
  int width = 0;
  int height = 0;
  Cell start;
  Cell destination;
  std::vector<Cell> obstacles;  // duplicates allowed (a perturbed map may stack them)
  double noise_delta = 0.05;
  double penalty_m = 40.0;
  double gamma = 0.95;
  double step_cost = 1.0;

  /// Every violated constraint, human readable. Empty means valid.
  std::vector<std::string> problems() const;

  bool in_bounds(Cell c) const { return c.i >= 0 && c.j >= 0 && c.i < width && c.j < height; }
  StateIndex state(Cell c) const { return c.j * width + c.i; }
  Cell cell(StateIndex s) const { return Cell{s % width, s / width}; }
  StateIndex terminal_state() const { return width * height; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

std::string grid_spec_to_json(const GridSpec& spec);
/// Throws ParseError (malformed or missing fields) or DomainError (invalid spec).
GridSpec grid_spec_from_json(const std::string& text);
GridSpec load_grid_spec(const std::filesystem::path& path);
void save_grid_spec(const GridSpec& spec, const std::filesystem::path& path);

/// Built-in layouts: "desk15x15" (10 obstacles) and "paper64x53" (80
/// obstacles, three walls with gates). Throws DomainError for an unknown name.
GridSpec gridworld_preset(const std::string& name);
std::vector<std::string> gridworld_preset_names();

/// Cells plus one absorbing terminal (index width*height). Actions up, down,
/// left, right: the intended neighbor with probability 1 - delta and each of
/// the four neighbors with delta/4; moves off the grid stay put. Obstacles
/// cost penalty_m and lead to the terminal, the destination costs 0 and
/// leads to the terminal. Throws DomainError for an invalid spec.
MdpModel build_gridworld_mdp(const GridSpec& spec);

/// Each obstacle moves with probability perturb_prob to a uniformly chosen
/// 4-neighbor (staying put when that neighbor is off the grid); draws landing
/// on the start or destination are repeated.
GridSpec perturb_obstacles(const GridSpec& spec, double perturb_prob, std::uint64_t seed);

/// Solver settings for gridworlds: the fixed 21-point log grid from y = 0.01,
/// no adaptive refinement.
SolverConfig gridworld_solver_config();

struct ExperimentConfig {
  std::vector<double> alphas{0.1, 1.0};
  std::size_t n_maps = 20;
  std::size_t n_rollouts_per_map = 20;
  std::size_t horizon = 200;
  double perturb_prob = 0.5;
  std::uint64_t seed = 0;
  std::size_t bins = 40;
  SolverConfig solver = gridworld_solver_config();
};

struct MapSummary {
  double alpha = 0.0;
  std::size_t map = 0;
  std::uint64_t map_seed = 0;
  std::size_t failures = 0;
  std::size_t successes = 0;
  double mean_success_cost = 0.0;  // NaN without successes
};

struct AlphaSummary {
  double alpha = 0.0;
  std::size_t rollouts = 0;
  std::size_t failures = 0;
  double mean_success_cost = 0.0;  // NaN without successes
  double mean_cost = 0.0;
  double empirical_cvar = 0.0;     // CVaR_alpha of all rollout costs
  std::vector<double> costs;       // map-major, rollout-minor
  std::vector<bool> failed;
};

struct ExperimentReport {
  std::vector<AlphaSummary> alphas;
  std::vector<MapSummary> maps;  // alpha-major, then map index
  SolveResult solve;
};

/// Solves the nominal map once and evaluates the policy of every alpha on
/// n_maps perturbed maps. A rollout fails when it visits an obstacle cell of
/// the perturbed map. Map m uses derive_seed(seed, m); rollout r on that map
/// uses derive_seed(map_seed, r) for every alpha.
ExperimentReport robustness_experiment(const GridSpec& spec, const ExperimentConfig& config);

/// "cost,count,policy_alpha" with bins shared by all alphas.
void write_experiment_histogram_csv(std::ostream& out, const ExperimentReport& report,
                                    std::size_t bins);
/// "policy_alpha,map,map_seed,failures,successes,mean_success_cost".
void write_experiment_maps_csv(std::ostream& out, const ExperimentReport& report);
std::string experiment_summary_json(const ExperimentReport& report, const ExperimentConfig& config);

}  // namespace cvar_mdp
