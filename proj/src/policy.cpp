#include "cvar_mdp/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

#include "backup_kernel.hpp"
#include "cvar_mdp/errors.hpp"
#include "cvar_mdp/risk.hpp"
#include "cvar_mdp/rng.hpp"

namespace cvar_mdp {

struct AugmentedPolicy::State {
  State(MdpModel m, InterpolationGrid g, ValueTable v)
      : model(std::move(m)), grid(std::move(g)), values(std::move(v)), kernel(model, grid, values) {}

  MdpModel model;
  InterpolationGrid grid;
  ValueTable values;
  detail::BackupKernel kernel;  // refers to the members above
  std::vector<ActionIndex> actions;
  std::vector<std::vector<double>> xi;
};

AugmentedPolicy::AugmentedPolicy(MdpModel model, InterpolationGrid grid, ValueTable values,
                                 std::size_t threads) {
  auto s = std::make_shared<State>(std::move(model), std::move(grid), std::move(values));
  BellmanSweep sweep = apply_interpolated_bellman(s->values, s->grid, s->model, true, threads);
  s->actions = std::move(sweep.actions);
  s->xi = std::move(sweep.xi);
  state_ = std::move(s);
}

AugmentedPolicy AugmentedPolicy::from_solution(const MdpModel& model, const SolveResult& result,
                                               std::size_t threads) {
  return AugmentedPolicy(model, result.grid, result.value, threads);
}

const MdpModel& AugmentedPolicy::model() const { return state_->model; }
const InterpolationGrid& AugmentedPolicy::grid() const { return state_->grid; }
const ValueTable& AugmentedPolicy::values() const { return state_->values; }

ActionIndex AugmentedPolicy::cached_action(StateIndex x, std::size_t i) const {
  return state_->actions[grid().offset(x) + i];
}

const std::vector<double>& AugmentedPolicy::cached_xi(StateIndex x, std::size_t i) const {
  return state_->xi[grid().offset(x) + i];
}

GreedyDecision AugmentedPolicy::greedy_action(StateIndex x, double y) const {
  if (!(y >= 0.0 && y <= 1.0)) {
    throw DomainError("confidence y = " + std::to_string(y) + " outside [0, 1]");
  }
  detail::KernelScratch scratch;
  GreedyDecision best;
  best.value = std::numeric_limits<double>::infinity();
  std::vector<double> xi;
  for (ActionIndex a = 0; a < static_cast<ActionIndex>(model().n_actions()); ++a) {
    const double q = state_->kernel.q_value(x, a, y, &xi, scratch);
    if (q < best.value) {
      best.value = q;
      best.action = a;
      best.xi = xi;
    }
  }
  return best;
}

double AugmentedPolicy::value(StateIndex x, double y) const {
  return interpolate_ratio(values(), grid(), x, y);
}

namespace {

std::size_t sample_row(std::span<const Transition> row, double u) {
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (!(row[k].prob > 0.0)) continue;
    acc += row[k].prob;
    last = k;
    if (u < acc) return k;
  }
  return last;
}

}  // namespace

Rollout rollout(const AugmentedPolicy& policy, const RolloutOptions& options) {
  if (!(options.alpha > 0.0 && options.alpha <= 1.0)) {
    throw DomainError("confidence level alpha = " + std::to_string(options.alpha) +
                      " outside (0, 1]");
  }
  const MdpModel& model = policy.model();
  const MdpModel& dynamics = options.dynamics ? *options.dynamics : model;
  if (dynamics.n_states() != model.n_states() || dynamics.n_actions() != model.n_actions()) {
    throw DomainError("evaluation dynamics differ in state or action count");
  }
  Rng rng(options.seed);
  Rollout r;
  r.seed = options.seed;
  StateIndex x = options.start >= 0 ? options.start : model.initial_state();
  double y = options.alpha;
  bool worst_case = false;
  double discount = 1.0;
  r.states.push_back(x);
  r.confidences.push_back(y);
  for (std::size_t k = 0; k < options.horizon; ++k) {
    const GreedyDecision d = policy.greedy_action(x, worst_case ? 0.0 : y);
    const double c = dynamics.cost(x, d.action);
    r.actions.push_back(d.action);
    r.stage_costs.push_back(c);
    r.discounted_total += discount * c;
    discount *= dynamics.gamma();

    const auto row = dynamics.successors(x, d.action);
    const StateIndex next = row[sample_row(row, rng.uniform())].next;
    if (!worst_case) {
      const auto own = model.successors(x, d.action);
      for (std::size_t j = 0; j < own.size(); ++j) {
        if (own[j].next == next && own[j].prob > 0.0) {
          y = std::clamp(y * d.xi[j], 0.0, 1.0);
          break;
        }
      }
      if (y < kConfidenceUnderflow) worst_case = true;
    }
    if (worst_case) y = 0.0;
    x = next;
    r.states.push_back(x);
    r.confidences.push_back(y);
  }
  return r;
}

double Histogram::bin_width() const {
  return counts.empty() ? 0.0 : (upper - lower) / static_cast<double>(counts.size());
}

double Histogram::center(std::size_t bin) const {
  return lower + (static_cast<double>(bin) + 0.5) * bin_width();
}

Histogram make_histogram(const std::vector<double>& sample, std::size_t bins) {
  Histogram h;
  if (sample.empty() || bins == 0) return h;
  const auto [lo, hi] = std::minmax_element(sample.begin(), sample.end());
  h.lower = *lo;
  h.upper = *hi;
  if (h.upper == h.lower) {
    h.counts.assign(1, sample.size());
    return h;
  }
  h.counts.assign(bins, 0);
  const double width = (h.upper - h.lower) / static_cast<double>(bins);
  for (double v : sample) {
    auto b = static_cast<std::size_t>((v - h.lower) / width);
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

PolicyEvaluation evaluate_cvar_of_policy(const AugmentedPolicy& policy, double alpha,
                                         std::size_t horizon, std::size_t n_rollouts,
                                         std::uint64_t seed, std::size_t bins,
                                         const MdpModel* dynamics, std::size_t threads) {
  if (n_rollouts == 0) throw DomainError("need at least one rollout");
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw DomainError("confidence level alpha = " + std::to_string(alpha) + " outside (0, 1]");
  }
  PolicyEvaluation ev;
  ev.costs.resize(n_rollouts);
  detail::parallel_for(n_rollouts, threads == 0 ? default_thread_count() : threads,
                       [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      RolloutOptions opt;
      opt.alpha = alpha;
      opt.horizon = horizon;
      opt.seed = derive_seed(seed, i);
      opt.dynamics = dynamics;
      ev.costs[i] = rollout(policy, opt).discounted_total;
    }
  });

  const DiscreteDistribution empirical = DiscreteDistribution::uniform(ev.costs);
  ev.cvar = cvar_primal(empirical, alpha).value;
  ev.mean = empirical.mean();
  if (n_rollouts > 1) {
    double ss = 0.0;
    for (double c : ev.costs) ss += (c - ev.mean) * (c - ev.mean);
    ev.std_error = std::sqrt(ss / static_cast<double>(n_rollouts - 1) / static_cast<double>(n_rollouts));
  }
  ev.histogram = make_histogram(ev.costs, bins);
  return ev;
}

void write_rollout_csv(std::ostream& out, const Rollout& r) {
  out << "step,state,y,action,cost\n";
  char buf[128];
  for (std::size_t k = 0; k < r.states.size(); ++k) {
    if (k < r.actions.size()) {
      std::snprintf(buf, sizeof buf, "%zu,%d,%.17g,%d,%.17g\n", k, r.states[k], r.confidences[k],
                    r.actions[k], r.stage_costs[k]);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,%d,%.17g,,\n", k, r.states[k], r.confidences[k]);
    }
    out << buf;
  }
}

void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "cost,count\n";
  char buf[96];
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%.17g,%zu\n", h.center(b), h.counts[b]);
    out << buf;
  }
}

}  // namespace cvar_mdp
