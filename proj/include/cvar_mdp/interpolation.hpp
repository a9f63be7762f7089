#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "cvar_mdp/mdp.hpp"

namespace cvar_mdp {

/// Confidence-level interpolation points Y(x) for every state.
///
/// Each row is strictly increasing with first point exactly 0 and last point
/// exactly 1. Rows may differ in length (adaptive refinement adds points per
/// state). Storage is one flat array with row offsets.
class InterpolationGrid {
 public:
  InterpolationGrid() = default;
  explicit InterpolationGrid(const std::vector<std::vector<double>>& per_state);

  /// The same points for every state.
  static InterpolationGrid shared(std::size_t n_states, const std::vector<double>& points);

  std::size_t n_states() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t size(StateIndex x) const { return offsets_[x + 1] - offsets_[x]; }
  std::size_t offset(StateIndex x) const { return offsets_[x]; }
  std::size_t total_size() const { return points_.size(); }
  std::span<const double> points(StateIndex x) const {
    return {points_.data() + offsets_[x], size(x)};
  }
  const std::vector<std::size_t>& offsets() const { return offsets_; }

  /// Largest ratio y_{i+1}/y_i between consecutive positive points over all
  /// states; +inf when some state has no interior point.
  double theta() const;

  /// Index of max{y' in Y(x) : y' <= y}. Requires y in [0, 1].
  std::size_t bracket(StateIndex x, double y) const;

  friend bool operator==(const InterpolationGrid&, const InterpolationGrid&) = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<double> points_;
};

/// V(x, y_i) tabulated on an InterpolationGrid (same row layout).
class ValueTable {
 public:
  ValueTable() = default;
  explicit ValueTable(const InterpolationGrid& grid, double fill = 0.0);

  std::span<double> row(StateIndex x) { return {values_.data() + offsets_[x], row_size(x)}; }
  std::span<const double> row(StateIndex x) const {
    return {values_.data() + offsets_[x], row_size(x)};
  }
  double at(StateIndex x, std::size_t i) const { return values_[offsets_[x] + i]; }
  double& at(StateIndex x, std::size_t i) { return values_[offsets_[x] + i]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  bool matches(const InterpolationGrid& grid) const { return offsets_ == grid.offsets(); }

  /// max |V|.
  double sup_norm() const;

  friend bool operator==(const ValueTable&, const ValueTable&) = default;

 private:
  std::size_t row_size(StateIndex x) const { return offsets_[x + 1] - offsets_[x]; }

  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

/// Concave piecewise-linear function on [breakpoints.front(), breakpoints.back()].
struct PwlConcaveFunction {
  std::vector<double> breakpoints;
  std::vector<double> values;

  double evaluate(double z) const;
  std::vector<double> slopes() const;
  /// Chord slopes non-increasing within tol * max(1, |slope|).
  bool is_concave(double tol = 1e-9) const;
};

/// {0} followed by y_min * theta^k, k = 0..n_points-2, where theta is chosen
/// so the last point is exactly 1. Throws DomainError unless n_points >= 3
/// and 0 < y_min < 1.
std::vector<double> build_log_grid(std::size_t n_points, double y_min);

/// Linear interpolant of y * V(x, y) through the grid points of x. Exact
/// (y_i * V(x, y_i)) on grid points. Throws DomainError for y outside [0, 1].
double interpolate(const ValueTable& v, const InterpolationGrid& grid, StateIndex x, double y);

/// interpolate(...) / y for y > 0 and V(x, 0) at y = 0.
double interpolate_ratio(const ValueTable& v, const InterpolationGrid& grid, StateIndex x,
                         double y);

/// The interpolant z -> I_x[V](z) as a standalone function.
PwlConcaveFunction interpolant(const ValueTable& v, const InterpolationGrid& grid, StateIndex x);

/// Chord slopes of i -> y_i V(x, y_i).
std::vector<double> chord_slopes(const ValueTable& v, const InterpolationGrid& grid, StateIndex x);

/// Largest increase between successive chord slopes over all states (<= 0
/// means every row of y*V is discretely concave).
double max_concavity_violation(const ValueTable& v, const InterpolationGrid& grid);

/// max over states and segments of |chord slope of y*V|.
double max_abs_chord_slope(const ValueTable& v, const InterpolationGrid& grid);

/// max over states of V(x, 0) - V(x, y_2), floored at 0. Refinement keeps this
/// at or below epsilon.
double max_low_confidence_gap(const ValueTable& v, const InterpolationGrid& grid);

struct RefineResult {
  InterpolationGrid grid;
  ValueTable values;
  bool refined = false;
  std::vector<StateIndex> capped_states;  // states where the point cap blocked refinement
};

/// For every state with V(x, y_2) - V(x, 0) < -epsilon, inserts
/// y_2' = epsilon * y_2 / |V(x, y_2) - V(x, 0)| plus geometric fill points up to
/// y_2 with ratio at most `max_ratio`. New values follow the current
/// interpolant, so I_x[V] is unchanged. States whose row would exceed
/// `max_points` are left alone and listed in capped_states.
RefineResult adaptive_refine(const ValueTable& v, const InterpolationGrid& grid, double epsilon,
                             double max_ratio, std::size_t max_points);

/// CSV "state,y,value", one row per grid point, 17 significant digits.
void write_value_table_csv(std::ostream& out, const ValueTable& v, const InterpolationGrid& grid);

struct GridAndValues {
  InterpolationGrid grid;
  ValueTable values;
};

/// Inverse of write_value_table_csv. Throws ParseError.
GridAndValues read_value_table_csv(std::istream& in);

}  // namespace cvar_mdp
