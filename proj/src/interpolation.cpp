#include "cvar_mdp/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "cvar_mdp/errors.hpp"

namespace cvar_mdp {

InterpolationGrid::InterpolationGrid(const std::vector<std::vector<double>>& per_state) {
  offsets_.reserve(per_state.size() + 1);
  offsets_.push_back(0);
  for (std::size_t x = 0; x < per_state.size(); ++x) {
    const auto& row = per_state[x];
    if (row.size() < 2 || row.front() != 0.0 || row.back() != 1.0) {
      throw DomainError("grid row " + std::to_string(x) + " must start at 0 and end at 1");
    }
    for (std::size_t i = 1; i < row.size(); ++i) {
      if (!(row[i] > row[i - 1])) {
        throw DomainError("grid row " + std::to_string(x) + " is not strictly increasing");
      }
    }
    points_.insert(points_.end(), row.begin(), row.end());
    offsets_.push_back(points_.size());
  }
}

InterpolationGrid InterpolationGrid::shared(std::size_t n_states, const std::vector<double>& points) {
  return InterpolationGrid(std::vector<std::vector<double>>(n_states, points));
}

double InterpolationGrid::theta() const {
  double theta = 1.0;
  for (StateIndex x = 0; x < static_cast<StateIndex>(n_states()); ++x) {
    const auto pts = points(x);
    if (pts.size() < 3) return std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) theta = std::max(theta, pts[i + 1] / pts[i]);
  }
  return theta;
}

std::size_t InterpolationGrid::bracket(StateIndex x, double y) const {
  const auto pts = points(x);
  const auto it = std::upper_bound(pts.begin(), pts.end(), y);
  return static_cast<std::size_t>(it - pts.begin()) - 1;
}

ValueTable::ValueTable(const InterpolationGrid& grid, double fill)
    : offsets_(grid.offsets()), values_(grid.total_size(), fill) {}

double ValueTable::sup_norm() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

double PwlConcaveFunction::evaluate(double z) const {
  if (z <= breakpoints.front()) return values.front();
  if (z >= breakpoints.back()) return values.back();
  const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), z);
  const std::size_t i = static_cast<std::size_t>(it - breakpoints.begin()) - 1;
  if (z == breakpoints[i]) return values[i];
  const double slope = (values[i + 1] - values[i]) / (breakpoints[i + 1] - breakpoints[i]);
  return values[i] + slope * (z - breakpoints[i]);
}

std::vector<double> PwlConcaveFunction::slopes() const {
  std::vector<double> s;
  s.reserve(breakpoints.size());
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    s.push_back((values[i + 1] - values[i]) / (breakpoints[i + 1] - breakpoints[i]));
  }
  return s;
}

bool PwlConcaveFunction::is_concave(double tol) const {
  const auto s = slopes();
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] - s[i - 1] > tol * std::max(1.0, std::abs(s[i - 1]))) return false;
  }
  return true;
}

std::vector<double> build_log_grid(std::size_t n_points, double y_min) {
  if (n_points < 3) throw DomainError("log grid needs at least 3 points");
  if (!(y_min > 0.0 && y_min < 1.0)) throw DomainError("log grid needs 0 < y_min < 1");
  const double steps = static_cast<double>(n_points - 2);
  const double theta = std::pow(1.0 / y_min, 1.0 / steps);
  std::vector<double> pts;
  pts.reserve(n_points);
  pts.push_back(0.0);
  for (std::size_t k = 0; k + 1 < n_points; ++k) pts.push_back(y_min * std::pow(theta, static_cast<double>(k)));
  pts[1] = y_min;
  pts.back() = 1.0;
  return pts;
}

double interpolate(const ValueTable& v, const InterpolationGrid& grid, StateIndex x, double y) {
  if (!(y >= 0.0 && y <= 1.0)) throw DomainError("interpolation point outside [0, 1]");
  const auto pts = grid.points(x);
  const auto vals = v.row(x);
  const std::size_t i = grid.bracket(x, y);
  const double lower = pts[i] * vals[i];
  if (y == pts[i] || i + 1 == pts.size()) return lower;
  const double upper = pts[i + 1] * vals[i + 1];
  return lower + (upper - lower) / (pts[i + 1] - pts[i]) * (y - pts[i]);
}

double interpolate_ratio(const ValueTable& v, const InterpolationGrid& grid, StateIndex x,
                         double y) {
  if (!(y >= 0.0 && y <= 1.0)) throw DomainError("interpolation point outside [0, 1]");
  if (y == 0.0) return v.at(x, 0);
  return interpolate(v, grid, x, y) / y;
}

PwlConcaveFunction interpolant(const ValueTable& v, const InterpolationGrid& grid, StateIndex x) {
  PwlConcaveFunction f;
  const auto pts = grid.points(x);
  const auto vals = v.row(x);
  f.breakpoints.assign(pts.begin(), pts.end());
  f.values.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) f.values[i] = pts[i] * vals[i];
  return f;
}

std::vector<double> chord_slopes(const ValueTable& v, const InterpolationGrid& grid, StateIndex x) {
  const auto pts = grid.points(x);
  const auto vals = v.row(x);
  std::vector<double> s(pts.size() - 1);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    s[i] = (pts[i + 1] * vals[i + 1] - pts[i] * vals[i]) / (pts[i + 1] - pts[i]);
  }
  return s;
}

double max_concavity_violation(const ValueTable& v, const InterpolationGrid& grid) {
  double worst = -std::numeric_limits<double>::infinity();
  for (StateIndex x = 0; x < static_cast<StateIndex>(grid.n_states()); ++x) {
    const auto s = chord_slopes(v, grid, x);
    for (std::size_t i = 1; i < s.size(); ++i) worst = std::max(worst, s[i] - s[i - 1]);
  }
  return worst;
}

double max_abs_chord_slope(const ValueTable& v, const InterpolationGrid& grid) {
  double m = 0.0;
  for (StateIndex x = 0; x < static_cast<StateIndex>(grid.n_states()); ++x) {
    for (double s : chord_slopes(v, grid, x)) m = std::max(m, std::abs(s));
  }
  return m;
}

double max_low_confidence_gap(const ValueTable& v, const InterpolationGrid& grid) {
  double gap = 0.0;
  for (StateIndex x = 0; x < static_cast<StateIndex>(grid.n_states()); ++x) {
    gap = std::max(gap, v.at(x, 0) - v.at(x, 1));
  }
  return gap;
}

RefineResult adaptive_refine(const ValueTable& v, const InterpolationGrid& grid, double epsilon,
                             double max_ratio, std::size_t max_points) {
  RefineResult result;
  const auto n = static_cast<StateIndex>(grid.n_states());
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> vals(static_cast<std::size_t>(n));

  for (StateIndex x = 0; x < n; ++x) {
    const auto pts = grid.points(x);
    const auto row_v = v.row(x);
    auto& new_pts = rows[x];
    auto& new_vals = vals[x];
    new_pts.assign(pts.begin(), pts.end());
    new_vals.assign(row_v.begin(), row_v.end());

    const double gap = row_v[1] - row_v[0];
    if (!(gap < -epsilon)) continue;

    const double y2 = pts[1];
    const double y2_new = epsilon * y2 / std::abs(gap);
    std::size_t intervals = 1;
    if (max_ratio > 1.0) {
      intervals = static_cast<std::size_t>(
          std::ceil(std::log(y2 / y2_new) / std::log(max_ratio) - 1e-12));
      intervals = std::max<std::size_t>(intervals, 1);
    }
    if (!(y2_new > std::numeric_limits<double>::min()) || pts.size() + intervals > max_points) {
      result.capped_states.push_back(x);
      continue;
    }

    const double ratio = std::pow(y2 / y2_new, 1.0 / static_cast<double>(intervals));
    std::vector<double> inserted;
    inserted.reserve(intervals);
    for (std::size_t k = 0; k < intervals; ++k) {
      const double y = k == 0 ? y2_new : y2_new * std::pow(ratio, static_cast<double>(k));
      if (y < y2 && (inserted.empty() || y > inserted.back())) inserted.push_back(y);
    }
    // On [0, y_2] the interpolant is the line through the origin with slope
    // V(x, y_2), so the ratio I/y at every inserted point is V(x, y_2).
    new_pts.insert(new_pts.begin() + 1, inserted.begin(), inserted.end());
    new_vals.insert(new_vals.begin() + 1, inserted.size(), row_v[1]);
    result.refined = true;
  }

  result.grid = InterpolationGrid(rows);
  result.values = ValueTable(result.grid);
  for (StateIndex x = 0; x < n; ++x) {
    std::copy(vals[x].begin(), vals[x].end(), result.values.row(x).begin());
  }
  return result;
}

void write_value_table_csv(std::ostream& out, const ValueTable& v, const InterpolationGrid& grid) {
  out << "state,y,value\n";
  char buf[96];
  for (StateIndex x = 0; x < static_cast<StateIndex>(grid.n_states()); ++x) {
    const auto pts = grid.points(x);
    const auto vals = v.row(x);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", x, pts[i], vals[i]);
      out << buf;
    }
  }
}

GridAndValues read_value_table_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("state,y,value", 0) != 0) {
    throw ParseError("line 1: expected header state,y,value");
  }
  std::map<long, std::vector<std::pair<double, double>>> by_state;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c)) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 3 fields");
    }
    try {
      by_state[std::stol(a)].emplace_back(std::stod(b), std::stod(c));
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed number");
    }
  }
  if (by_state.empty()) throw ParseError("value table is empty");
  if (by_state.begin()->first != 0 ||
      by_state.rbegin()->first != static_cast<long>(by_state.size()) - 1) {
    throw ParseError("value table states must be 0..n-1");
  }
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<double>> vals;
  for (auto& [x, entries] : by_state) {
    std::sort(entries.begin(), entries.end());
    rows.emplace_back();
    vals.emplace_back();
    for (const auto& [y, val] : entries) {
      rows.back().push_back(y);
      vals.back().push_back(val);
    }
  }
  GridAndValues out;
  try {
    out.grid = InterpolationGrid(rows);
  } catch (const DomainError& e) {
    throw ParseError(e.what());
  }
  out.values = ValueTable(out.grid);
  for (std::size_t x = 0; x < vals.size(); ++x) {
    std::copy(vals[x].begin(), vals[x].end(), out.values.row(static_cast<StateIndex>(x)).begin());
  }
  return out;
}

}  // namespace cvar_mdp
