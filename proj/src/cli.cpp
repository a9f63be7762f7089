#include "cvar_mdp/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvar_mdp/bellman.hpp"
#include "cvar_mdp/errors.hpp"
#include "cvar_mdp/gridworld.hpp"
#include "cvar_mdp/interpolation.hpp"
#include "cvar_mdp/mdp.hpp"
#include "cvar_mdp/oracle.hpp"
#include "cvar_mdp/policy.hpp"
#include "cvar_mdp/risk.hpp"
#include "cvar_mdp/rng.hpp"

namespace cvar_mdp::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct SolverFlags {
  std::size_t points = 21;
  double ymin = 1e-2;
  double theta_cap = 0.0;
  double epsilon = 0.0;
  double tol = 0.0;
  std::size_t max_iters = 10000;
  std::size_t max_points = 64;
  bool no_refine = false;
  bool refine = false;
  std::size_t threads = 0;

  void add_to(CLI::App* app, bool refine_by_default) {
    app->add_option("--points", points, "interpolation points per state")->capture_default_str();
    app->add_option("--ymin", ymin, "smallest positive grid point")->capture_default_str();
    app->add_option("--theta-cap", theta_cap, "largest ratio for refinement fill (0: grid ratio)");
    app->add_option("--epsilon", epsilon, "refinement tolerance (0: 1e-2 c_max/(1-gamma))");
    app->add_option("--tol", tol, "sup-norm stopping tolerance (0: 1e-6 c_max/(1-gamma))");
    app->add_option("--max-iters", max_iters, "sweep limit")->capture_default_str();
    app->add_option("--max-points", max_points, "per-state cap for refinement")->capture_default_str();
    if (refine_by_default) {
      app->add_flag("--no-refine", no_refine, "disable adaptive refinement");
    } else {
      app->add_flag("--refine", refine, "enable adaptive refinement");
    }
    app->add_option("--threads", threads, "worker threads (0: CVAR_MDP_THREADS or all cores)");
  }

  SolverConfig config(bool refine_by_default) const {
    SolverConfig c;
    c.n_points = points;
    c.y_min = ymin;
    c.theta_cap = theta_cap;
    c.epsilon = epsilon;
    c.tolerance = tol;
    c.max_iterations = max_iters;
    c.max_points_per_state = max_points;
    c.refine = refine_by_default ? !no_refine : refine;
    c.threads = threads;
    return c;
  }
};

ordered_json config_json(const SolverConfig& c) {
  ordered_json j;
  j["points"] = c.n_points;
  j["ymin"] = c.y_min;
  j["theta_cap"] = c.theta_cap;
  j["epsilon"] = c.epsilon;
  j["tolerance"] = c.tolerance;
  j["max_iterations"] = c.max_iterations;
  j["max_points_per_state"] = c.max_points_per_state;
  j["refine"] = c.refine;
  return j;
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

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ParseError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

double last_residual(const SolveResult& r) {
  return r.residual_history.empty() ? 0.0 : r.residual_history.back();
}

ordered_json solve_summary(const MdpModel& model, const SolveResult& r) {
  ordered_json j;
  j["iterations"] = r.iterations;
  j["residual"] = last_residual(r);
  j["apriori_bound"] = r.error_bound;
  j["finite_time_bound"] = r.finite_time_bound;
  j["converged"] = r.converged;
  j["tolerance"] = r.tolerance;
  j["theta"] = r.theta;
  j["epsilon"] = r.epsilon;
  j["lipschitz_m0"] = r.lipschitz_m0;
  j["refinement_sweeps"] = r.refinement_sweeps;
  j["capped_states"] = r.capped_states;
  const StateIndex x0 = model.initial_state();
  j["initial_state"] = x0;
  j["initial_value_y0"] = r.value.at(x0, 0);
  j["initial_value_y1"] = r.value.at(x0, r.grid.size(x0) - 1);
  return j;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

struct Manifest {
  std::string command;
  std::vector<std::string> args;
  std::vector<std::string> inputs;
  ordered_json config = ordered_json::object();
  std::optional<std::uint64_t> seed;
  std::string output_dir;

  void write(const fs::path& dir) const {
    ordered_json j;
    j["tool"] = "cvar_mdp";
    j["version"] = kToolVersion;
    j["command"] = command;
    j["args"] = args;
    j["inputs"] = inputs;
    j["config"] = config;
    j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
    j["output_dir"] = output_dir;
    write_file(dir / "manifest.json", dump(j));
  }
};

// Writes the artifacts shared by `solve` and `gridworld solve`.
int write_solution(const fs::path& dir, const MdpModel& model, const SolveResult& r,
                   Manifest manifest, std::ostream& out) {
  prepare_dir(dir);
  {
    std::ofstream csv(dir / "values.csv", std::ios::binary);
    write_value_table_csv(csv, r.value, r.grid);
  }
  write_file(dir / "mdp.json", mdp_to_json(model));
  write_file(dir / "summary.json", dump(solve_summary(model, r)));
  manifest.output_dir = dir.string();
  manifest.write(dir);
  out << "iterations " << r.iterations << ", residual " << fmt(last_residual(r))
      << (r.converged ? ", converged" : ", NOT converged") << "\n";
  out << "V(x0, 1) = " << fmt(r.value.at(model.initial_state(), r.grid.size(model.initial_state()) - 1))
      << ", V(x0, 0) = " << fmt(r.value.at(model.initial_state(), 0)) << "\n";
  return r.converged ? kOk : kNotConverged;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t>& seed, std::vector<std::string>& args) {
  if (!seed) {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    args.push_back("--seed");
    args.push_back(std::to_string(*seed));
  }
  return *seed;
}

std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw DomainError("malformed alpha list '" + text + "'");
    }
  }
  if (out.empty()) throw DomainError("empty alpha list");
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CVaR MDP solver: interpolated value iteration, policy rollouts, oracles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // solve
  std::string mdp_path;
  std::string out_dir = "out";
  SolverFlags solve_flags;
  auto* solve = app.add_subcommand("solve", "run value iteration on an MDP file");
  solve->add_option("mdp", mdp_path, "MDP JSON file")->required();
  solve->add_option("--out", out_dir, "output directory")->capture_default_str();
  solve_flags.add_to(solve, true);

  // evaluate
  std::string solve_dir;
  double alpha = 1.0;
  std::size_t horizon = 200;
  std::size_t rollouts = 1000;
  std::size_t bins = 40;
  std::optional<std::uint64_t> seed;
  std::size_t eval_threads = 0;
  auto* evaluate = app.add_subcommand("evaluate", "simulate the policy of a solve directory");
  evaluate->add_option("solve_dir", solve_dir, "directory written by solve")->required();
  evaluate->add_option("--alpha", alpha, "confidence level in (0, 1]")->required();
  evaluate->add_option("--horizon", horizon, "steps per rollout")->capture_default_str();
  evaluate->add_option("--rollouts", rollouts, "number of rollouts")->capture_default_str();
  evaluate->add_option("--seed", seed, "master seed (auto when absent)");
  evaluate->add_option("--bins", bins, "histogram bins")->capture_default_str();
  evaluate->add_option("--out", out_dir, "output directory")->capture_default_str();
  evaluate->add_option("--threads", eval_threads, "worker threads");

  // gridworld
  std::string spec_path;
  std::string preset;
  SolverFlags grid_flags;
  std::string alphas_text = "0.1,1";
  std::size_t n_maps = 20;
  std::size_t per_map = 20;
  double perturb = 0.5;
  auto* grid = app.add_subcommand("gridworld", "gridworld maps: solve, experiment, export");
  grid->fallthrough();
  auto* spec_opt = grid->add_option("--spec", spec_path, "GridSpec JSON file");
  auto* preset_opt = grid->add_option("--preset", preset, "built-in layout")
                         ->check(CLI::IsMember(gridworld_preset_names()));
  spec_opt->excludes(preset_opt);
  grid->require_subcommand(1);
  auto* grid_solve = grid->add_subcommand("solve", "solve the nominal map");
  grid_solve->add_option("--out", out_dir, "output directory")->capture_default_str();
  grid_flags.add_to(grid_solve, false);
  auto* grid_exp = grid->add_subcommand("experiment", "obstacle-perturbation robustness experiment");
  grid_exp->add_option("--out", out_dir, "output directory")->capture_default_str();
  grid_exp->add_option("--alphas", alphas_text, "comma-separated confidence levels")->capture_default_str();
  grid_exp->add_option("--maps", n_maps, "perturbed maps")->capture_default_str();
  grid_exp->add_option("--rollouts", per_map, "rollouts per map and alpha")->capture_default_str();
  grid_exp->add_option("--horizon", horizon, "steps per rollout")->capture_default_str();
  grid_exp->add_option("--perturb", perturb, "probability that an obstacle moves")->capture_default_str();
  grid_exp->add_option("--seed", seed, "master seed (auto when absent)");
  grid_exp->add_option("--bins", bins, "histogram bins")->capture_default_str();
  grid_flags.add_to(grid_exp, false);
  std::string export_path;
  auto* grid_export = grid->add_subcommand("export", "write the GridSpec JSON");
  grid_export->add_option("--out", export_path, "file (stdout when absent)");

  // oracle
  std::size_t oracle_horizon = 6;
  double eta = 4.0;
  std::string report_path;
  SolverFlags oracle_flags;
  auto* oracle = app.add_subcommand("oracle", "compare the solver against brute-force oracles");
  oracle->add_option("mdp", mdp_path, "MDP JSON file")->required();
  oracle->add_option("--horizon", oracle_horizon, "oracle horizon T")->capture_default_str();
  oracle->add_option("--alpha", alpha, "confidence level in (0, 1]")->capture_default_str();
  oracle->add_option("--eta", eta, "perturbation budget (>= 1)")->capture_default_str();
  oracle->add_option("--report", report_path, "also write the JSON report to this file");
  oracle_flags.add_to(oracle, true);

  // rerun
  std::string manifest_path;
  std::string rerun_out;
  auto* rerun = app.add_subcommand("rerun", "repeat the command recorded in a manifest");
  rerun->add_option("manifest", manifest_path, "manifest.json")->required();
  rerun->add_option("--out", rerun_out, "override the output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kInputError;
  }

  std::vector<std::string> recorded = args;
  try {
    if (*solve) {
      const MdpModel model = load_mdp(mdp_path);
      const SolverConfig cfg = solve_flags.config(true);
      const SolveResult r = value_iteration(model, cfg);
      Manifest m{"solve", recorded, {mdp_path}, config_json(cfg), std::nullopt, {}};
      return write_solution(out_dir, model, r, m, out);
    }

    if (*evaluate) {
      if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw DomainError("alpha = " + fmt(alpha) + " outside (0, 1]");
      }
      const fs::path dir(solve_dir);
      const MdpModel model = load_mdp(dir / "mdp.json");
      std::ifstream csv(dir / "values.csv");
      if (!csv) throw ParseError("cannot open " + (dir / "values.csv").string());
      GridAndValues table = read_value_table_csv(csv);
      if (table.grid.n_states() != model.n_states()) {
        throw DomainError("values.csv does not match mdp.json");
      }
      const std::uint64_t s = resolve_seed(seed, recorded);
      const std::size_t threads = eval_threads == 0 ? default_thread_count() : eval_threads;
      const AugmentedPolicy policy(model, table.grid, table.values, threads);
      const PolicyEvaluation ev =
          evaluate_cvar_of_policy(policy, alpha, horizon, rollouts, s, bins, nullptr, threads);
      RolloutOptions first;
      first.alpha = alpha;
      first.horizon = horizon;
      first.seed = derive_seed(s, 0);
      const Rollout trace = rollout(policy, first);

      const fs::path od(out_dir);
      prepare_dir(od);
      {
        std::ofstream h(od / "histogram.csv", std::ios::binary);
        write_histogram_csv(h, ev.histogram);
        std::ofstream t(od / "rollout.csv", std::ios::binary);
        write_rollout_csv(t, trace);
      }
      ordered_json sj;
      sj["alpha"] = alpha;
      sj["horizon"] = horizon;
      sj["rollouts"] = rollouts;
      sj["seed"] = s;
      sj["empirical_cvar"] = ev.cvar;
      sj["empirical_mean"] = ev.mean;
      sj["std_error"] = ev.std_error;
      sj["table_value"] = policy.value(model.initial_state(), alpha);
      write_file(od / "summary.json", dump(sj));
      ordered_json cfg;
      cfg["alpha"] = alpha;
      cfg["horizon"] = horizon;
      cfg["rollouts"] = rollouts;
      cfg["bins"] = bins;
      Manifest m{"evaluate", recorded, {solve_dir}, cfg, s, od.string()};
      m.write(od);
      out << "empirical CVaR " << fmt(ev.cvar) << ", mean " << fmt(ev.mean) << ", table value "
          << fmt(policy.value(model.initial_state(), alpha)) << "\n";
      return kOk;
    }

    if (*grid) {
      if (spec_path.empty() && preset.empty()) throw DomainError("gridworld needs --spec or --preset");
      const GridSpec spec = spec_path.empty() ? gridworld_preset(preset) : load_grid_spec(spec_path);
      const std::vector<std::string> inputs =
          spec_path.empty() ? std::vector<std::string>{"preset:" + preset}
                            : std::vector<std::string>{spec_path};
      if (*grid_export) {
        if (export_path.empty()) {
          out << grid_spec_to_json(spec);
        } else {
          write_file(export_path, grid_spec_to_json(spec));
        }
        return kOk;
      }
      SolverConfig cfg = grid_flags.config(false);
      if (*grid_solve) {
        const MdpModel model = build_gridworld_mdp(spec);
        const SolveResult r = value_iteration(model, cfg);
        Manifest m{"gridworld solve", recorded, inputs, config_json(cfg), std::nullopt, {}};
        const int code = write_solution(out_dir, model, r, m, out);
        write_file(fs::path(out_dir) / "spec.json", grid_spec_to_json(spec));
        return code;
      }
      if (*grid_exp) {
        ExperimentConfig ec;
        ec.alphas = parse_alphas(alphas_text);
        ec.n_maps = n_maps;
        ec.n_rollouts_per_map = per_map;
        ec.horizon = horizon;
        ec.perturb_prob = perturb;
        ec.seed = resolve_seed(seed, recorded);
        ec.bins = bins;
        ec.solver = cfg;
        const ExperimentReport report = robustness_experiment(spec, ec);
        const fs::path od(out_dir);
        prepare_dir(od);
        {
          std::ofstream h(od / "histogram.csv", std::ios::binary);
          write_experiment_histogram_csv(h, report, bins);
          std::ofstream mp(od / "maps.csv", std::ios::binary);
          write_experiment_maps_csv(mp, report);
        }
        write_file(od / "summary.json", experiment_summary_json(report, ec));
        write_file(od / "spec.json", grid_spec_to_json(spec));
        ordered_json c = config_json(cfg);
        c["alphas"] = ec.alphas;
        c["maps"] = n_maps;
        c["rollouts_per_map"] = per_map;
        c["horizon"] = horizon;
        c["perturb"] = perturb;
        Manifest m{"gridworld experiment", recorded, inputs, c, ec.seed, od.string()};
        m.write(od);
        for (const auto& s : report.alphas) {
          out << "alpha " << fmt(s.alpha) << ": " << s.failures << "/" << s.rollouts
              << " failures, mean success cost " << fmt(s.mean_success_cost) << "\n";
        }
        return report.solve.converged ? kOk : kNotConverged;
      }
    }

    if (*oracle) {
      if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw DomainError("alpha = " + fmt(alpha) + " outside (0, 1]");
      }
      const PerturbationBudget budget{eta};
      budget.validate();
      const MdpModel model = load_mdp(mdp_path);
      const SolverConfig cfg = oracle_flags.config(true);
      const SolveResult r = value_iteration(model, cfg);
      const AugmentedPolicy policy = AugmentedPolicy::from_solution(model, r);
      const double gamma = model.gamma();
      const double scale = model.c_max() / (1.0 - gamma);

      // Everything that can hit a size guard runs before any output.
      const OptimalCvar best = brute_force_optimal_cvar(model, alpha, oracle_horizon);
      const TrajectoryDistribution dist = enumerate_policy_cost_distribution(
          model, augmented_history_policy(policy, alpha), oracle_horizon);
      const double vi_tol = 1e-12 * std::max(scale, 1.0);
      const OracleValues rn = risk_neutral_vi(model, vi_tol);
      const OracleValues mm = minimax_vi(model, vi_tol);

      ordered_json checks = ordered_json::array();
      bool all = true;
      auto add = [&](const std::string& name, double gap, double allowed, ordered_json extra) {
        const bool pass = std::abs(gap) <= allowed;
        all = all && pass;
        extra["name"] = name;
        extra["pass"] = pass;
        extra["gap"] = gap;
        extra["allowed"] = allowed;
        checks.push_back(extra);
      };
      const StateIndex x0 = model.initial_state();
      const double solver_value = policy.value(x0, alpha);
      const double tail = std::pow(gamma, static_cast<double>(oracle_horizon)) * scale;
      add("optimal_cvar", solver_value - best.value, r.error_bound + tail + r.tolerance,
          {{"solver", solver_value}, {"oracle", best.value}});
      const double wc = worst_case_perturbed_expectation(dist, budget).value;
      const double cv = cvar_primal(dist.cost_distribution(), 1.0 / eta).value;
      add("perturbation_equivalence", wc - cv, 1e-9,
          {{"worst_case_expectation", wc}, {"cvar", cv}, {"eta", eta}});
      const double fixed_point_slack = gamma / (1.0 - gamma) * (r.tolerance + vi_tol);
      double d1 = 0.0, d0 = 0.0;
      for (StateIndex x = 0; x < static_cast<StateIndex>(model.n_states()); ++x) {
        d1 = std::max(d1, std::abs(r.value.at(x, r.grid.size(x) - 1) - rn.values[x]));
        d0 = std::max(d0, std::abs(r.value.at(x, 0) - mm.values[x]));
      }
      add("risk_neutral_row", d1, fixed_point_slack, ordered_json::object());
      add("worst_case_row", d0, fixed_point_slack, ordered_json::object());

      ordered_json report;
      report["mdp"] = mdp_path;
      report["alpha"] = alpha;
      report["horizon"] = oracle_horizon;
      report["eta"] = eta;
      report["solver"] = solve_summary(model, r);
      report["checks"] = checks;
      report["all_pass"] = all;
      if (!report_path.empty()) write_file(report_path, dump(report));
      out << dump(report);
      return all ? kOk : kCheckFailed;
    }

    if (*rerun) {
      const auto j = nlohmann::json::parse(read_file(manifest_path));
      std::vector<std::string> again = j.at("args").get<std::vector<std::string>>();
      if (!rerun_out.empty()) {
        bool replaced = false;
        for (std::size_t k = 0; k + 1 < again.size(); ++k) {
          if (again[k] == "--out") {
            again[k + 1] = rerun_out;
            replaced = true;
          }
        }
        if (!replaced) {
          again.push_back("--out");
          again.push_back(rerun_out);
        }
      }
      return run(again, out, err);
    }
  } catch (const SizeError& e) {
    err << "size guard: " << e.what() << "\n";
    return kSizeGuard;
  } catch (const ValidationError& e) {
    err << e.what() << "\n";
    return kInputError;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    err << "parse error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kOk;
}

}  // namespace cvar_mdp::cli
