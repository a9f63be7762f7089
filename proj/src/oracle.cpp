#include "cvar_mdp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "cvar_mdp/errors.hpp"

namespace cvar_mdp {

HistoryPolicy stationary_policy(std::vector<ActionIndex> action_per_state) {
  return [a = std::move(action_per_state)](std::span<const StateIndex> h) { return a[h.back()]; };
}

HistoryPolicy markov_history_policy(MarkovPolicy policy) {
  return [p = std::move(policy)](std::span<const StateIndex> h) {
    return p[h.size() - 1][h.back()];
  };
}

HistoryPolicy augmented_history_policy(const AugmentedPolicy& policy, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw DomainError("confidence level alpha = " + std::to_string(alpha) + " outside (0, 1]");
  }
  return [policy, alpha](std::span<const StateIndex> h) {
    double y = alpha;
    bool worst_case = false;
    for (std::size_t k = 0; k + 1 < h.size(); ++k) {
      const GreedyDecision d = policy.greedy_action(h[k], worst_case ? 0.0 : y);
      if (!worst_case) {
        const auto row = policy.model().successors(h[k], d.action);
        for (std::size_t j = 0; j < row.size(); ++j) {
          if (row[j].next == h[k + 1] && row[j].prob > 0.0) {
            y = std::clamp(y * d.xi[j], 0.0, 1.0);
            break;
          }
        }
        if (y < kConfidenceUnderflow) worst_case = true;
      }
    }
    return policy.greedy_action(h.back(), worst_case ? 0.0 : y).action;
  };
}

DiscreteDistribution TrajectoryDistribution::cost_distribution() const {
  DiscreteDistribution d;
  d.outcomes.reserve(trajectories.size());
  d.probabilities.reserve(trajectories.size());
  for (const auto& t : trajectories) {
    d.outcomes.push_back(t.cost);
    d.probabilities.push_back(t.probability);
  }
  return d;
}

double TrajectoryDistribution::mean() const {
  double m = 0.0;
  for (const auto& t : trajectories) m += t.probability * t.cost;
  return m;
}

double TrajectoryDistribution::total_probability() const {
  double s = 0.0;
  for (const auto& t : trajectories) s += t.probability;
  return s;
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw DomainError("confidence level alpha = " + std::to_string(alpha) + " outside (0, 1]");
  }
}

struct Enumerator {
  const MdpModel& model;
  const HistoryPolicy& policy;
  std::size_t horizon;
  std::size_t limit;
  TrajectoryDistribution out;
  std::vector<StateIndex> history;

  void visit(double prob, double cost, double discount) {
    if (history.size() == horizon + 1) {
      if (out.trajectories.size() >= limit) {
        throw SizeError("trajectory enumeration exceeds " + std::to_string(limit) + " paths");
      }
      out.trajectories.push_back(TrajectoryRecord{history, prob, cost});
      return;
    }
    const StateIndex x = history.back();
    const ActionIndex a = policy(history);
    if (a < 0 || static_cast<std::size_t>(a) >= model.n_actions()) {
      throw DomainError("policy returned action " + std::to_string(a) + " out of range");
    }
    const double c = cost + discount * model.cost(x, a);
    for (const Transition& t : model.successors(x, a)) {
      if (!(t.prob > 0.0)) continue;
      history.push_back(t.next);
      visit(prob * t.prob, c, discount * model.gamma());
      history.pop_back();
    }
  }
};

// History tree with actions: state nodes branch on actions, then successors.
struct HistoryTree {
  struct Edge {
    double prob;
    std::size_t child;
  };
  struct Node {
    StateIndex x = 0;
    std::size_t depth = 0;
    double cost = 0.0;  // discounted cost accumulated before this node
    // Per action: [begin, end) into edges.
    std::vector<std::pair<std::size_t, std::size_t>> actions;
  };
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::size_t leaves = 0;
};

HistoryTree build_tree(const MdpModel& model, std::size_t horizon, std::size_t max_paths) {
  HistoryTree tree;
  tree.nodes.push_back(HistoryTree::Node{model.initial_state(), 0, 0.0, {}});
  // Breadth-first so that children always follow parents.
  for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
    if (tree.nodes[n].depth == horizon) {
      if (++tree.leaves > max_paths) {
        throw SizeError("history tree exceeds " + std::to_string(max_paths) + " paths");
      }
      continue;
    }
    const StateIndex x = tree.nodes[n].x;
    const std::size_t depth = tree.nodes[n].depth;
    const double discount = std::pow(model.gamma(), static_cast<double>(depth));
    for (ActionIndex a = 0; a < static_cast<ActionIndex>(model.n_actions()); ++a) {
      const double c = tree.nodes[n].cost + discount * model.cost(x, a);
      const std::size_t begin = tree.edges.size();
      for (const Transition& t : model.successors(x, a)) {
        if (!(t.prob > 0.0)) continue;
        tree.edges.push_back(HistoryTree::Edge{t.prob, tree.nodes.size()});
        tree.nodes.push_back(HistoryTree::Node{t.next, depth + 1, c, {}});
      }
      tree.nodes[n].actions.emplace_back(begin, tree.edges.size());
      if (tree.nodes.size() > 4 * max_paths + 1) {
        throw SizeError("history tree exceeds " + std::to_string(max_paths) + " paths");
      }
    }
  }
  return tree;
}

// min over policies of E[(C - w)^+] for every node, with argmin actions.
void solve_excess(const HistoryTree& tree, double w, std::vector<double>& value,
                  std::vector<ActionIndex>& action) {
  value.assign(tree.nodes.size(), 0.0);
  action.assign(tree.nodes.size(), 0);
  for (std::size_t n = tree.nodes.size(); n-- > 0;) {
    const auto& node = tree.nodes[n];
    if (node.actions.empty()) {
      value[n] = std::max(node.cost - w, 0.0);
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < node.actions.size(); ++a) {
      double v = 0.0;
      for (std::size_t e = node.actions[a].first; e < node.actions[a].second; ++e) {
        v += tree.edges[e].prob * value[tree.edges[e].child];
      }
      if (v < best) {
        best = v;
        action[n] = static_cast<ActionIndex>(a);
      }
    }
    value[n] = best;
  }
}

}  // namespace

TrajectoryDistribution enumerate_policy_cost_distribution(const MdpModel& model,
                                                          const HistoryPolicy& policy,
                                                          std::size_t horizon,
                                                          std::size_t max_trajectories) {
  Enumerator e{model, policy, horizon, max_trajectories, {}, {model.initial_state()}};
  e.visit(1.0, 0.0, 1.0);
  return std::move(e.out);
}

HistoryPolicy OptimalCvar::policy() const {
  return [table = actions](std::span<const StateIndex> h) {
    const auto it = table.find(std::vector<StateIndex>(h.begin(), h.end()));
    return it == table.end() ? ActionIndex{0} : it->second;
  };
}

OptimalCvar brute_force_optimal_cvar(const MdpModel& model, double alpha, std::size_t horizon,
                                     std::size_t max_paths) {
  check_alpha(alpha);
  const HistoryTree tree = build_tree(model, horizon, max_paths);

  std::vector<double> candidates;
  for (const auto& node : tree.nodes) {
    if (node.depth == horizon) candidates.push_back(node.cost);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  OptimalCvar best;
  best.value = std::numeric_limits<double>::infinity();
  best.candidates = candidates.size();
  std::vector<double> value;
  std::vector<ActionIndex> action;
  for (double w : candidates) {
    solve_excess(tree, w, value, action);
    const double v = w + value[0] / alpha;
    if (v < best.value) {
      best.value = v;
      best.w = w;
    }
  }

  solve_excess(tree, best.w, value, action);
  // Follow the chosen actions from the root and key them by state history.
  std::vector<std::pair<std::size_t, std::vector<StateIndex>>> stack{{0, {tree.nodes[0].x}}};
  while (!stack.empty()) {
    auto [n, h] = std::move(stack.back());
    stack.pop_back();
    const auto& node = tree.nodes[n];
    if (node.actions.empty()) continue;
    const ActionIndex a = action[n];
    best.actions[h] = a;
    for (std::size_t e = node.actions[a].first; e < node.actions[a].second; ++e) {
      auto child_h = h;
      child_h.push_back(tree.nodes[tree.edges[e].child].x);
      stack.emplace_back(tree.edges[e].child, std::move(child_h));
    }
  }
  return best;
}

OptimalCvar enumerate_history_policies_cvar(const MdpModel& model, double alpha,
                                            std::size_t horizon, std::size_t max_policies) {
  check_alpha(alpha);
  const std::size_t na = model.n_actions();
  // Histories x_0..x_k, k < T, reachable under some action choice. Decisions
  // elsewhere cannot affect the cost distribution.
  std::vector<std::vector<StateIndex>> histories;
  std::vector<std::vector<StateIndex>> layer{{model.initial_state()}};
  const double guard = std::log(static_cast<double>(max_policies)) / std::log(static_cast<double>(na));
  for (std::size_t k = 0; k < horizon && !layer.empty(); ++k) {
    std::vector<std::vector<StateIndex>> next;
    for (auto& h : layer) {
      if (na > 1 && static_cast<double>(histories.size() + 1) > guard + 1e-9) {
        throw SizeError("history-dependent policy count exceeds " + std::to_string(max_policies));
      }
      if (k + 1 < horizon) {
        std::set<StateIndex> succ;
        for (ActionIndex a = 0; a < static_cast<ActionIndex>(na); ++a) {
          for (const auto& t : model.successors(h.back(), a)) {
            if (t.prob > 0.0) succ.insert(t.next);
          }
        }
        for (StateIndex x : succ) {
          auto child = h;
          child.push_back(x);
          next.push_back(std::move(child));
        }
      }
      histories.push_back(std::move(h));
    }
    layer.swap(next);
  }
  const double count = std::pow(static_cast<double>(na), static_cast<double>(histories.size()));
  if (count > static_cast<double>(max_policies)) {
    throw SizeError("history-dependent policy count " + std::to_string(count) + " exceeds " +
                    std::to_string(max_policies));
  }
  const auto n_policies = static_cast<std::size_t>(count);

  std::map<std::vector<StateIndex>, std::size_t> index;
  for (std::size_t i = 0; i < histories.size(); ++i) index.emplace(histories[i], i);
  std::vector<ActionIndex> table(histories.size(), 0);
  std::vector<StateIndex> key;
  const HistoryPolicy policy = [&](std::span<const StateIndex> h) {
    key.assign(h.begin(), h.end());
    return table[index.at(key)];
  };

  OptimalCvar best;
  best.value = std::numeric_limits<double>::infinity();
  std::vector<ActionIndex> best_table;
  for (std::size_t p = 0; p < n_policies; ++p) {
    std::size_t rest = p;
    for (auto& a : table) {
      a = static_cast<ActionIndex>(rest % na);
      rest /= na;
    }
    const auto dist = enumerate_policy_cost_distribution(model, policy, horizon);
    const auto r = cvar_primal(dist.cost_distribution(), alpha);
    if (r.value < best.value) {
      best.value = r.value;
      best.w = r.minimizer;
      best_table = table;
    }
  }
  for (std::size_t i = 0; i < histories.size(); ++i) best.actions[histories[i]] = best_table[i];
  best.candidates = n_policies;
  return best;
}

OptimalMarkovCvar enumerate_markov_policies_cvar(const MdpModel& model, double alpha,
                                                 std::size_t horizon, std::size_t max_policies) {
  check_alpha(alpha);
  const std::size_t ns = model.n_states();
  const std::size_t na = model.n_actions();
  // Only (t, x) pairs reachable at time t under some action choice matter;
  // every other entry stays at action 0.
  std::vector<std::pair<std::size_t, StateIndex>> slots;
  std::vector<char> reach(ns, 0), next(ns, 0);
  reach[model.initial_state()] = 1;
  for (std::size_t t = 0; t < horizon; ++t) {
    std::fill(next.begin(), next.end(), 0);
    for (StateIndex x = 0; x < static_cast<StateIndex>(ns); ++x) {
      if (!reach[x]) continue;
      slots.emplace_back(t, x);
      for (ActionIndex a = 0; a < static_cast<ActionIndex>(na); ++a) {
        for (const auto& tr : model.successors(x, a)) {
          if (tr.prob > 0.0) next[tr.next] = 1;
        }
      }
    }
    reach.swap(next);
  }
  const double count = std::pow(static_cast<double>(na), static_cast<double>(slots.size()));
  if (count > static_cast<double>(max_policies)) {
    throw SizeError("Markov policy count " + std::to_string(count) + " exceeds " +
                    std::to_string(max_policies));
  }
  const auto n_policies = static_cast<std::size_t>(count);
  OptimalMarkovCvar best;
  best.value = std::numeric_limits<double>::infinity();
  MarkovPolicy mp(horizon, std::vector<ActionIndex>(ns, 0));
  const HistoryPolicy policy = [&](std::span<const StateIndex> h) {
    return mp[h.size() - 1][h.back()];
  };
  for (std::size_t p = 0; p < n_policies; ++p) {
    std::size_t rest = p;
    for (const auto& [t, x] : slots) {
      mp[t][x] = static_cast<ActionIndex>(rest % na);
      rest /= na;
    }
    const auto dist = enumerate_policy_cost_distribution(model, policy, horizon);
    const double v = cvar_primal(dist.cost_distribution(), alpha).value;
    if (v < best.value) {
      best.value = v;
      best.policy = mp;
    }
  }
  return best;
}

namespace {

template <typename Backup>
OracleValues iterate(const MdpModel& model, double tolerance, std::size_t max_iterations,
                     Backup backup) {
  OracleValues r;
  r.values.assign(model.n_states(), 0.0);
  std::vector<double> next(model.n_states());
  for (r.iterations = 1; r.iterations <= max_iterations; ++r.iterations) {
    r.residual = 0.0;
    for (StateIndex x = 0; x < static_cast<StateIndex>(model.n_states()); ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (ActionIndex a = 0; a < static_cast<ActionIndex>(model.n_actions()); ++a) {
        best = std::min(best, model.cost(x, a) + model.gamma() * backup(model.successors(x, a), r.values));
      }
      next[x] = best;
      r.residual = std::max(r.residual, std::abs(next[x] - r.values[x]));
    }
    r.values.swap(next);
    if (r.residual <= tolerance) break;
  }
  r.iterations = std::min(r.iterations, max_iterations);
  return r;
}

}  // namespace

OracleValues risk_neutral_vi(const MdpModel& model, double tolerance, std::size_t max_iterations) {
  return iterate(model, tolerance, max_iterations,
                 [](std::span<const Transition> row, const std::vector<double>& v) {
                   double s = 0.0;
                   for (const Transition& t : row) s += t.prob * v[t.next];
                   return s;
                 });
}

OracleValues minimax_vi(const MdpModel& model, double tolerance, std::size_t max_iterations) {
  return iterate(model, tolerance, max_iterations,
                 [](std::span<const Transition> row, const std::vector<double>& v) {
                   double m = -std::numeric_limits<double>::infinity();
                   for (const Transition& t : row) {
                     if (t.prob > 0.0) m = std::max(m, v[t.next]);
                   }
                   return m;
                 });
}

std::vector<double> finite_horizon_policy_value(const MdpModel& model, const MarkovPolicy& policy,
                                                std::size_t horizon) {
  if (policy.size() < horizon) throw DomainError("Markov policy shorter than the horizon");
  std::vector<double> v(model.n_states(), 0.0), next(model.n_states());
  for (std::size_t t = horizon; t-- > 0;) {
    for (StateIndex x = 0; x < static_cast<StateIndex>(model.n_states()); ++x) {
      const ActionIndex a = policy[t][x];
      double s = 0.0;
      for (const Transition& tr : model.successors(x, a)) s += tr.prob * v[tr.next];
      next[x] = model.cost(x, a) + model.gamma() * s;
    }
    v.swap(next);
  }
  return v;
}

void PerturbationBudget::validate() const {
  if (!(eta >= 1.0) || !std::isfinite(eta)) {
    throw DomainError("perturbation budget eta = " + std::to_string(eta) + " must be >= 1");
  }
}

PerturbedExpectation worst_case_perturbed_expectation(const TrajectoryDistribution& dist,
                                                      const PerturbationBudget& budget) {
  budget.validate();
  const auto& tr = dist.trajectories;
  std::vector<std::size_t> order(tr.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return tr[a].cost > tr[b].cost; });
  PerturbedExpectation out;
  out.delta.assign(tr.size(), 0.0);
  double remaining = 1.0;  // of E[delta]
  for (std::size_t i : order) {
    if (remaining <= 0.0) break;
    const double p = tr[i].probability;
    if (!(p > 0.0)) continue;
    const double d = std::min(budget.eta, remaining / p);
    out.delta[i] = d;
    remaining -= d * p;
  }
  for (std::size_t i = 0; i < tr.size(); ++i) {
    out.value += out.delta[i] * tr[i].probability * tr[i].cost;
  }
  return out;
}

PerturbedExpectation worst_case_perturbed_expectation(const MdpModel& model,
                                                      const HistoryPolicy& policy,
                                                      std::size_t horizon,
                                                      const PerturbationBudget& budget) {
  budget.validate();
  return worst_case_perturbed_expectation(
      enumerate_policy_cost_distribution(model, policy, horizon), budget);
}

}  // namespace cvar_mdp
