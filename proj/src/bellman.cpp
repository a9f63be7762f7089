#include "cvar_mdp/bellman.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>

#include "backup_kernel.hpp"
#include "cvar_mdp/errors.hpp"

namespace cvar_mdp {

namespace detail {

BackupKernel::BackupKernel(const MdpModel& model, const InterpolationGrid& grid,
                           const ValueTable& values)
    : model_(model), grid_(grid), values_(values) {
  if (!values.matches(grid)) throw std::invalid_argument("value table does not match grid");
  if (grid.n_states() != model.n_states()) {
    throw std::invalid_argument("grid and model disagree on the number of states");
  }
  const std::size_t n_seg = grid.total_size() - grid.n_states();
  slopes_.resize(n_seg);
  lengths_.resize(n_seg);
  concavity_violation_ = -std::numeric_limits<double>::infinity();
  for (StateIndex x = 0; x < static_cast<StateIndex>(grid.n_states()); ++x) {
    const auto pts = grid.points(x);
    const auto v = values.row(x);
    const std::size_t off = grid.offset(x) - static_cast<std::size_t>(x);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const double len = pts[i + 1] - pts[i];
      slopes_[off + i] = (pts[i + 1] * v[i + 1] - pts[i] * v[i]) / len;
      lengths_[off + i] = len;
      if (i > 0) {
        concavity_violation_ =
            std::max(concavity_violation_, slopes_[off + i] - slopes_[off + i - 1]);
      }
    }
  }
}

void BackupKernel::build_merge(StateIndex x, ActionIndex a, KernelScratch& scratch) const {
  const auto row = model_.successors(x, a);
  scratch.sources.clear();
  scratch.source_row.clear();
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (!(row[k].prob > 0.0)) continue;
    scratch.sources.push_back(SegmentSource{row[k].prob, slopes(row[k].next), lengths(row[k].next)});
    scratch.source_row.push_back(k);
  }
  scratch.merge.build(scratch.sources);
}

std::size_t BackupKernel::worst_successor(StateIndex x, ActionIndex a) const {
  const auto row = model_.successors(x, a);
  std::size_t best = row.size();
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (!(row[k].prob > 0.0)) continue;
    if (best == row.size()) {
      best = k;
      continue;
    }
    const double vk = values_.at(row[k].next, 0);
    const double vb = values_.at(row[best].next, 0);
    if (vk > vb || (vk == vb && row[k].next < row[best].next)) best = k;
  }
  return best;
}

double BackupKernel::full_budget_value(StateIndex x, ActionIndex a) const {
  // xi = 1 everywhere: z = 1 and I_x'[V](1) = V(x', 1).
  double h = 0.0;
  for (const Transition& t : model_.successors(x, a)) {
    if (t.prob > 0.0) h += t.prob * values_.at(t.next, grid_.size(t.next) - 1);
  }
  return h;
}

void BackupKernel::q_values(StateIndex x, ActionIndex a, std::span<const double> ys,
                            std::span<double> out, KernelScratch& scratch) const {
  const double c = model_.cost(x, a);
  const double gamma = model_.gamma();
  std::size_t first = 0;
  while (first < ys.size() && ys[first] == 0.0) {
    const auto row = model_.successors(x, a);
    out[first++] = c + gamma * values_.at(row[worst_successor(x, a)].next, 0);
  }
  if (first == ys.size()) return;

  build_merge(x, a, scratch);
  const double total = scratch.merge.total_budget();
  scratch.gains.resize(ys.size());
  scratch.merge.gains_sorted(ys.subspan(first), std::span<double>(scratch.gains).subspan(first));
  double full = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = first; i < ys.size(); ++i) {
    const double y = ys[i];
    if (y >= 1.0 || y >= total) {
      if (std::isnan(full)) full = full_budget_value(x, a);
      out[i] = c + gamma * full / y;
    } else {
      out[i] = c + gamma * scratch.gains[i] / y;
    }
  }
}

double BackupKernel::q_value(StateIndex x, ActionIndex a, double y, std::vector<double>* xi,
                             KernelScratch& scratch) const {
  const auto row = model_.successors(x, a);
  const double c = model_.cost(x, a);
  const double gamma = model_.gamma();
  if (xi) xi->assign(row.size(), 0.0);
  if (y == 0.0) {
    const std::size_t w = worst_successor(x, a);
    if (xi) (*xi)[w] = 1.0 / row[w].prob;
    return c + gamma * values_.at(row[w].next, 0);
  }
  build_merge(x, a, scratch);
  const bool saturated = y >= 1.0 || y >= scratch.merge.total_budget();
  const double h = saturated ? full_budget_value(x, a) : scratch.merge.gain(y);
  if (xi) {
    scratch.z.assign(scratch.sources.size(), 1.0);
    if (!saturated) scratch.merge.allocation(y, scratch.z);
    for (std::size_t j = 0; j < scratch.sources.size(); ++j) {
      (*xi)[scratch.source_row[j]] = std::clamp(scratch.z[j], 0.0, 1.0) / y;
    }
  }
  return c + gamma * h / y;
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    workers.emplace_back([&fn, begin, end = std::min(n, begin + chunk)] { fn(begin, end); });
  }
}

}  // namespace detail

std::size_t default_thread_count() {
  if (const char* env = std::getenv("CVAR_MDP_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ErrorBounds interpolation_error_bound(double theta, double epsilon, double gamma, double c_max,
                                 double m0, std::size_t n_iterations, double v0_sup) {
  const double lipschitz = c_max / (1.0 - gamma) + m0;
  const double per_step = 2.0 * lipschitz * (theta - 1.0) + epsilon;
  const double gamma_n = std::pow(gamma, static_cast<double>(n_iterations));
  ErrorBounds b;
  b.apriori = gamma / (1.0 - gamma) * per_step;
  b.finite_time = gamma * (1.0 - gamma_n) / (1.0 - gamma) * per_step +
                  gamma_n / (1.0 - gamma) * (c_max + v0_sup);
  return b;
}

BellmanSweep apply_interpolated_bellman(const ValueTable& v, const InterpolationGrid& grid,
                                        const MdpModel& model, bool record_policy,
                                        std::size_t threads) {
  const detail::BackupKernel kernel(model, grid, v);
  if (kernel.concavity_violation() > kConcavityTolerance) {
    throw StructuralError("y*V(x, y) is not concave on the grid (slope increase " +
                          std::to_string(kernel.concavity_violation()) + ")");
  }

  BellmanSweep out;
  out.values = ValueTable(grid);
  if (record_policy) {
    out.actions.assign(grid.total_size(), 0);
    out.xi.assign(grid.total_size(), {});
  }
  const auto n_actions = static_cast<ActionIndex>(model.n_actions());

  detail::parallel_for(model.n_states(), threads == 0 ? default_thread_count() : threads,
                       [&](std::size_t begin, std::size_t end) {
    detail::KernelScratch scratch;
    std::vector<double> q, best;
    std::vector<ActionIndex> best_a;
    for (auto x = static_cast<StateIndex>(begin); x < static_cast<StateIndex>(end); ++x) {
      const auto ys = grid.points(x);
      best.assign(ys.size(), std::numeric_limits<double>::infinity());
      best_a.assign(ys.size(), 0);
      q.resize(ys.size());
      for (ActionIndex a = 0; a < n_actions; ++a) {
        kernel.q_values(x, a, ys, q, scratch);
        for (std::size_t i = 0; i < ys.size(); ++i) {
          if (q[i] < best[i]) {
            best[i] = q[i];
            best_a[i] = a;
          }
        }
      }
      auto row = out.values.row(x);
      std::copy(best.begin(), best.end(), row.begin());
      if (record_policy) {
        for (std::size_t i = 0; i < ys.size(); ++i) {
          const std::size_t cell = grid.offset(x) + i;
          out.actions[cell] = best_a[i];
          kernel.q_value(x, best_a[i], ys[i], &out.xi[cell], scratch);
        }
      }
    }
  });
  return out;
}

namespace {

double sup_diff(const ValueTable& a, const ValueTable& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  }
  return d;
}

}  // namespace

SolveResult value_iteration(const MdpModel& model, const SolverConfig& config) {
  if (auto report = validate_mdp(model); !report.empty()) throw ValidationError(std::move(report));
  const double gamma = model.gamma();
  const double scale = model.c_max() / (1.0 - gamma);

  SolveResult result;
  result.tolerance = config.tolerance > 0.0 ? config.tolerance : 1e-6 * std::max(scale, 1e-300);
  const double epsilon = config.epsilon > 0.0 ? config.epsilon : 1e-2 * std::max(scale, 1e-300);

  InterpolationGrid grid;
  ValueTable v;
  switch (config.initial_value) {
    case InitialValue::kZero:
    case InitialValue::kConstant: {
      grid = InterpolationGrid::shared(model.n_states(), build_log_grid(config.n_points, config.y_min));
      const double c = config.initial_value == InitialValue::kZero ? 0.0 : config.initial_constant;
      v = ValueTable(grid, c);
      // y * c has Lipschitz constant |c|.
      result.lipschitz_m0 = config.lipschitz_m0 >= 0.0 ? config.lipschitz_m0 : std::abs(c);
      break;
    }
    case InitialValue::kTable: {
      if (!config.initial_table) throw std::invalid_argument("initial table requested but not given");
      grid = config.initial_table->grid;
      v = config.initial_table->values;
      if (grid.n_states() != model.n_states() || !v.matches(grid)) {
        throw std::invalid_argument("initial table does not fit the model");
      }
      if (max_concavity_violation(v, grid) > kConcavityTolerance) {
        throw StructuralError("initial value table: y*V_0 is not concave in y");
      }
      result.lipschitz_m0 =
          config.lipschitz_m0 >= 0.0 ? config.lipschitz_m0 : max_abs_chord_slope(v, grid);
      break;
    }
  }
  const double v0_sup = v.sup_norm();
  const double theta_fill = config.theta_cap > 0.0 ? std::min(config.theta_cap, grid.theta())
                                                   : grid.theta();
  const std::size_t threads = config.threads == 0 ? default_thread_count() : config.threads;

  for (std::size_t sweep = 1; sweep <= config.max_iterations; ++sweep) {
    BellmanSweep next = apply_interpolated_bellman(v, grid, model, false, threads);
    const double residual = sup_diff(next.values, v);
    result.residual_history.push_back(residual);
    result.iterations = sweep;
    v = std::move(next.values);
    result.max_gap_observed = std::max(result.max_gap_observed, max_low_confidence_gap(v, grid));
    if (config.on_sweep) config.on_sweep(SweepInfo{sweep, &grid, &v, residual});

    bool refined = false;
    if (config.refine) {
      RefineResult r = adaptive_refine(v, grid, epsilon, theta_fill, config.max_points_per_state);
      if (r.refined) {
        grid = std::move(r.grid);
        v = std::move(r.values);
        result.refinement_sweeps.push_back(sweep);
        refined = true;
      }
      result.capped_states = std::move(r.capped_states);
    }
    if (!refined && residual <= result.tolerance) {
      result.converged = true;
      break;
    }
  }

  result.theta = grid.theta();
  result.epsilon = std::max(epsilon, max_low_confidence_gap(v, grid));
  const ErrorBounds bounds = interpolation_error_bound(result.theta, result.epsilon, gamma, model.c_max(),
                                                  result.lipschitz_m0, result.iterations, v0_sup);
  result.error_bound = bounds.apriori;
  result.finite_time_bound = bounds.finite_time;
  result.value = std::move(v);
  result.grid = std::move(grid);
  return result;
}

}  // namespace cvar_mdp
