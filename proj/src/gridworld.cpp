#include "cvar_mdp/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "backup_kernel.hpp"
#include "cvar_mdp/errors.hpp"
#include "cvar_mdp/risk.hpp"
#include "cvar_mdp/rng.hpp"

namespace cvar_mdp {

namespace {

using nlohmann::json;

constexpr Cell kMoves[4] = {{0, -1}, {0, 1}, {-1, 0}, {1, 0}};

std::string cell_text(Cell c) {
  return "(" + std::to_string(c.i) + ", " + std::to_string(c.j) + ")";
}

Cell step(const GridSpec& spec, Cell c, int move) {
  const Cell n{c.i + kMoves[move].i, c.j + kMoves[move].j};
  return spec.in_bounds(n) ? n : c;
}

Cell parse_cell(const json& v, const std::string& field) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
    throw ParseError("field " + field + ": expected [i, j]");
  }
  return Cell{v[0].get<int>(), v[1].get<int>()};
}

template <typename T>
T field_as(const json& doc, const char* name) {
  const auto it = doc.find(name);
  if (it == doc.end()) throw ParseError(std::string("missing field ") + name);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("field ") + name + ": unexpected type");
  }
}

std::string fmt(double v) {
  // Shortest form that reads back to the same double.
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string json_number(double v) {
  return std::isfinite(v) ? fmt(v) : std::string("null");
}

}  // namespace

std::vector<std::string> GridSpec::problems() const {
  std::vector<std::string> out;
  if (width <= 0 || height <= 0) {
    out.push_back("grid size must be positive");
    return out;
  }
  if (!in_bounds(start)) out.push_back("start " + cell_text(start) + " out of bounds");
  if (!in_bounds(destination)) {
    out.push_back("destination " + cell_text(destination) + " out of bounds");
  }
  if (start == destination) out.push_back("start equals destination");
  for (const Cell& o : obstacles) {
    if (!in_bounds(o)) out.push_back("obstacle " + cell_text(o) + " out of bounds");
    if (o == start) out.push_back("obstacle on the start cell");
    if (o == destination) out.push_back("obstacle on the destination cell");
  }
  if (!(noise_delta >= 0.0 && noise_delta < 1.0)) out.push_back("delta must be in [0, 1)");
  if (!(gamma >= 0.0 && gamma < 1.0)) out.push_back("discount out of range: " + fmt(gamma));
  if (!std::isfinite(penalty_m)) out.push_back("penalty_m must be finite");
  if (!std::isfinite(step_cost)) out.push_back("step_cost must be finite");
  return out;
}

std::string grid_spec_to_json(const GridSpec& spec) {
  std::ostringstream os;
  os << "{\n  \"width\": " << spec.width << ",\n  \"height\": " << spec.height << ",\n";
  os << "  \"start\": [" << spec.start.i << ", " << spec.start.j << "],\n";
  os << "  \"destination\": [" << spec.destination.i << ", " << spec.destination.j << "],\n";
  os << "  \"obstacles\": [";
  for (std::size_t k = 0; k < spec.obstacles.size(); ++k) {
    os << (k ? "," : "") << ((k % 8 == 0) ? "\n    " : (k ? " " : "")) << "[" << spec.obstacles[k].i << ", "
       << spec.obstacles[k].j << "]";
  }
  os << (spec.obstacles.empty() ? "],\n" : "\n  ],\n");
  os << "  \"delta\": " << fmt(spec.noise_delta) << ",\n";
  os << "  \"penalty_m\": " << fmt(spec.penalty_m) << ",\n";
  os << "  \"gamma\": " << fmt(spec.gamma) << ",\n";
  os << "  \"step_cost\": " << fmt(spec.step_cost) << "\n}\n";
  return os.str();
}

GridSpec grid_spec_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1 + static_cast<std::size_t>(
                               std::count(text.begin(), text.begin() + std::min(e.byte, text.size()), '\n'));
    throw ParseError("line " + std::to_string(line) + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError("line 1: top-level value must be an object");
  GridSpec spec;
  spec.width = field_as<int>(doc, "width");
  spec.height = field_as<int>(doc, "height");
  if (!doc.contains("start")) throw ParseError("missing field start");
  if (!doc.contains("destination")) throw ParseError("missing field destination");
  if (!doc.contains("obstacles")) throw ParseError("missing field obstacles");
  spec.start = parse_cell(doc["start"], "start");
  spec.destination = parse_cell(doc["destination"], "destination");
  if (!doc["obstacles"].is_array()) throw ParseError("field obstacles: expected array");
  for (std::size_t k = 0; k < doc["obstacles"].size(); ++k) {
    spec.obstacles.push_back(parse_cell(doc["obstacles"][k], "obstacles[" + std::to_string(k) + "]"));
  }
  spec.noise_delta = field_as<double>(doc, "delta");
  spec.penalty_m = field_as<double>(doc, "penalty_m");
  spec.gamma = field_as<double>(doc, "gamma");
  if (doc.contains("step_cost")) spec.step_cost = field_as<double>(doc, "step_cost");
  if (auto p = spec.problems(); !p.empty()) throw DomainError("invalid grid spec: " + p.front());
  return spec;
}

GridSpec load_grid_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return grid_spec_from_json(ss.str());
}

void save_grid_spec(const GridSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << grid_spec_to_json(spec);
}

SolverConfig gridworld_solver_config() {
  SolverConfig c;
  c.n_points = 21;
  c.y_min = 1e-2;
  c.refine = false;
  return c;
}

std::vector<std::string> gridworld_preset_names() { return {"desk15x15", "paper64x53"}; }

GridSpec gridworld_preset(const std::string& name) {
  GridSpec spec;
  spec.noise_delta = 0.05;
  spec.gamma = 0.95;
  spec.penalty_m = 40.0;  // 2 / (1 - gamma)
  spec.step_cost = 1.0;
  if (name == "desk15x15") {
    // A wall across the middle with a two-cell-long gap in line with the
    // start: short but exposed, or a detour around the left end.
    spec.width = 15;
    spec.height = 15;
    spec.start = {7, 13};
    spec.destination = {7, 1};
    spec.obstacles = {{4, 7}, {5, 7}, {6, 7}, {8, 7}, {9, 7},
                      {10, 7}, {11, 7}, {12, 7}, {6, 6}, {8, 6}};
    return spec;
  }
  if (name == "paper64x53") {
    // Three walls across the direct route, each with a one-cell gate in line
    // with the start, and scattered blocks in the open left part.
    spec.width = 64;
    spec.height = 53;
    spec.start = {60, 50};
    spec.destination = {60, 2};
    for (int j : {13, 26, 39}) {
      for (int i = 44; i < 64; ++i) {
        if (i != 60) spec.obstacles.push_back({i, j});
      }
    }
    for (int k = 0; spec.obstacles.size() < 80; ++k) {
      spec.obstacles.push_back({8 + (k * 13) % 30, 5 + (k * 7) % 42});
    }
    return spec;
  }
  throw DomainError("unknown gridworld preset '" + name + "'");
}

MdpModel build_gridworld_mdp(const GridSpec& spec) {
  if (auto p = spec.problems(); !p.empty()) throw DomainError("invalid grid spec: " + p.front());
  const auto n_cells = static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height);
  const std::size_t n_states = n_cells + 1;
  const StateIndex terminal = spec.terminal_state();
  std::vector<bool> blocked(n_cells, false);
  for (const Cell& o : spec.obstacles) blocked[spec.state(o)] = true;

  std::vector<double> cost(n_states * 4, 0.0);
  std::vector<std::vector<Transition>> rows(n_states * 4);
  std::map<StateIndex, double> merged;
  for (StateIndex s = 0; s < static_cast<StateIndex>(n_cells); ++s) {
    const Cell c = spec.cell(s);
    for (int a = 0; a < 4; ++a) {
      const std::size_t r = static_cast<std::size_t>(s) * 4 + a;
      if (blocked[s] || c == spec.destination) {
        cost[r] = blocked[s] ? spec.penalty_m : 0.0;
        rows[r] = {Transition{terminal, 1.0}};
        continue;
      }
      cost[r] = spec.step_cost;
      merged.clear();
      merged[spec.state(step(spec, c, a))] += 1.0 - spec.noise_delta;
      if (spec.noise_delta > 0.0) {
        for (int m = 0; m < 4; ++m) merged[spec.state(step(spec, c, m))] += spec.noise_delta / 4.0;
      }
      for (const auto& [next, p] : merged) rows[r].push_back(Transition{next, p});
    }
  }
  for (int a = 0; a < 4; ++a) rows[static_cast<std::size_t>(terminal) * 4 + a] = {Transition{terminal, 1.0}};

  MdpModel model(n_states, 4, spec.gamma, spec.state(spec.start), std::move(cost), std::move(rows));
  if (auto report = validate_mdp(model); !report.empty()) throw ValidationError(std::move(report));
  return model;
}

GridSpec perturb_obstacles(const GridSpec& spec, double perturb_prob, std::uint64_t seed) {
  if (!(perturb_prob >= 0.0 && perturb_prob <= 1.0)) {
    throw DomainError("perturbation probability must be in [0, 1]");
  }
  GridSpec out = spec;
  Rng rng(seed);
  for (Cell& o : out.obstacles) {
    if (!(rng.uniform() < perturb_prob)) continue;
    // Bounded retries: a cell boxed in by start and destination stays put.
    for (int attempt = 0; attempt < 64; ++attempt) {
      const Cell n = step(spec, o, static_cast<int>(rng.index(4)));
      if (n != spec.start && n != spec.destination) {
        o = n;
        break;
      }
    }
  }
  return out;
}

ExperimentReport robustness_experiment(const GridSpec& spec, const ExperimentConfig& config) {
  if (config.alphas.empty()) throw DomainError("experiment needs at least one alpha");
  for (double a : config.alphas) {
    if (!(a > 0.0 && a <= 1.0)) throw DomainError("alpha " + fmt(a) + " outside (0, 1]");
  }
  const MdpModel nominal = build_gridworld_mdp(spec);
  ExperimentReport report;
  report.solve = value_iteration(nominal, config.solver);
  const std::size_t threads =
      config.solver.threads == 0 ? default_thread_count() : config.solver.threads;
  const AugmentedPolicy policy = AugmentedPolicy::from_solution(nominal, report.solve, threads);

  const std::size_t n_alpha = config.alphas.size();
  const std::size_t per_map = config.n_rollouts_per_map;
  report.alphas.resize(n_alpha);
  for (std::size_t k = 0; k < n_alpha; ++k) {
    report.alphas[k].alpha = config.alphas[k];
    report.alphas[k].rollouts = config.n_maps * per_map;
    report.alphas[k].costs.assign(config.n_maps * per_map, 0.0);
    report.alphas[k].failed.assign(config.n_maps * per_map, false);
  }
  std::vector<std::uint64_t> map_seeds(config.n_maps);
  for (std::size_t m = 0; m < config.n_maps; ++m) map_seeds[m] = derive_seed(config.seed, m);

  // vector<bool> is not safe for concurrent writes; collect flags as bytes.
  std::vector<std::vector<char>> failed(n_alpha, std::vector<char>(config.n_maps * per_map, 0));
  detail::parallel_for(config.n_maps, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t m = begin; m < end; ++m) {
      const GridSpec map = perturb_obstacles(spec, config.perturb_prob, map_seeds[m]);
      const MdpModel dynamics = build_gridworld_mdp(map);
      std::vector<bool> blocked(dynamics.n_states(), false);
      for (const Cell& o : map.obstacles) blocked[map.state(o)] = true;
      for (std::size_t k = 0; k < n_alpha; ++k) {
        for (std::size_t r = 0; r < per_map; ++r) {
          RolloutOptions opt;
          opt.alpha = config.alphas[k];
          opt.horizon = config.horizon;
          opt.seed = derive_seed(map_seeds[m], r);
          opt.dynamics = &dynamics;
          const Rollout ro = rollout(policy, opt);
          const std::size_t idx = m * per_map + r;
          report.alphas[k].costs[idx] = ro.discounted_total;
          failed[k][idx] = std::any_of(ro.states.begin(), ro.states.end(),
                                       [&](StateIndex s) { return blocked[s]; });
        }
      }
    }
  });

  for (std::size_t k = 0; k < n_alpha; ++k) {
    AlphaSummary& s = report.alphas[k];
    double success_sum = 0.0;
    std::size_t successes = 0;
    for (std::size_t idx = 0; idx < s.costs.size(); ++idx) {
      s.failed[idx] = failed[k][idx] != 0;
      if (s.failed[idx]) {
        ++s.failures;
      } else {
        success_sum += s.costs[idx];
        ++successes;
      }
    }
    s.mean_success_cost =
        successes ? success_sum / static_cast<double>(successes) : std::numeric_limits<double>::quiet_NaN();
    if (!s.costs.empty()) {
      const DiscreteDistribution empirical = DiscreteDistribution::uniform(s.costs);
      s.mean_cost = empirical.mean();
      s.empirical_cvar = cvar_primal(empirical, s.alpha).value;
    }
    for (std::size_t m = 0; m < config.n_maps; ++m) {
      MapSummary ms;
      ms.alpha = s.alpha;
      ms.map = m;
      ms.map_seed = map_seeds[m];
      double sum = 0.0;
      for (std::size_t r = 0; r < per_map; ++r) {
        const std::size_t idx = m * per_map + r;
        if (s.failed[idx]) {
          ++ms.failures;
        } else {
          ++ms.successes;
          sum += s.costs[idx];
        }
      }
      ms.mean_success_cost = ms.successes ? sum / static_cast<double>(ms.successes)
                                          : std::numeric_limits<double>::quiet_NaN();
      report.maps.push_back(ms);
    }
  }
  return report;
}

void write_experiment_histogram_csv(std::ostream& out, const ExperimentReport& report,
                                    std::size_t bins) {
  std::vector<double> all;
  for (const auto& s : report.alphas) all.insert(all.end(), s.costs.begin(), s.costs.end());
  const Histogram range = make_histogram(all, bins);
  out << "cost,count,policy_alpha\n";
  char buf[128];
  for (const auto& s : report.alphas) {
    std::vector<std::size_t> counts(range.counts.size(), 0);
    const double width = range.bin_width();
    for (double c : s.costs) {
      std::size_t b = width > 0.0 ? static_cast<std::size_t>((c - range.lower) / width) : 0;
      counts[std::min(b, counts.size() - 1)]++;
    }
    for (std::size_t b = 0; b < counts.size(); ++b) {
      std::snprintf(buf, sizeof buf, "%.17g,%zu,", range.center(b), counts[b]);
      out << buf << fmt(s.alpha) << '\n';
    }
  }
}

void write_experiment_maps_csv(std::ostream& out, const ExperimentReport& report) {
  out << "policy_alpha,map,map_seed,failures,successes,mean_success_cost\n";
  for (const auto& m : report.maps) {
    out << fmt(m.alpha) << ',' << m.map << ',' << m.map_seed << ',' << m.failures << ','
        << m.successes << ',' << (std::isfinite(m.mean_success_cost) ? fmt(m.mean_success_cost) : "")
        << '\n';
  }
}

std::string experiment_summary_json(const ExperimentReport& report, const ExperimentConfig& config) {
  std::ostringstream os;
  os << "{\n  \"seed\": " << config.seed << ",\n";
  os << "  \"n_maps\": " << config.n_maps << ",\n";
  os << "  \"n_rollouts_per_map\": " << config.n_rollouts_per_map << ",\n";
  os << "  \"horizon\": " << config.horizon << ",\n";
  os << "  \"perturb_prob\": " << fmt(config.perturb_prob) << ",\n";
  os << "  \"solve\": {\"iterations\": " << report.solve.iterations
     << ", \"residual\": " << json_number(report.solve.residual_history.empty()
                                              ? 0.0
                                              : report.solve.residual_history.back())
     << ", \"apriori_bound\": " << json_number(report.solve.error_bound)
     << ", \"finite_time_bound\": " << json_number(report.solve.finite_time_bound)
     << ", \"converged\": " << (report.solve.converged ? "true" : "false") << "},\n";
  os << "  \"policies\": [";
  for (std::size_t k = 0; k < report.alphas.size(); ++k) {
    const auto& s = report.alphas[k];
    os << (k ? ",\n" : "\n") << "    {\"alpha\": " << fmt(s.alpha) << ", \"rollouts\": " << s.rollouts
       << ", \"failures\": " << s.failures
       << ", \"mean_success_cost\": " << json_number(s.mean_success_cost)
       << ", \"mean_cost\": " << json_number(s.mean_cost)
       << ", \"empirical_cvar\": " << json_number(s.empirical_cvar) << "}";
  }
  os << "\n  ]\n}\n";
  return os.str();
}

}  // namespace cvar_mdp
