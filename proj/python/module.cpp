#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cvar_mdp/errors.hpp"
#include "cvar_mdp/gridworld.hpp"
#include "cvar_mdp/mdp.hpp"
#include "cvar_mdp/oracle.hpp"
#include "cvar_mdp/policy.hpp"
#include "cvar_mdp/risk.hpp"

namespace py = pybind11;
using namespace cvar_mdp;

namespace {

DiscreteDistribution make_dist(std::vector<double> outcomes, std::vector<double> probabilities) {
  if (probabilities.empty()) return DiscreteDistribution::uniform(std::move(outcomes));
  return DiscreteDistribution{std::move(outcomes), std::move(probabilities)};
}

MdpModel make_model(std::size_t n_states, std::size_t n_actions, double gamma,
                    StateIndex initial_state, std::vector<double> cost,
                    const std::vector<std::vector<std::pair<StateIndex, double>>>& transitions) {
  std::vector<std::vector<Transition>> rows;
  for (const auto& row : transitions) {
    rows.emplace_back();
    for (const auto& [next, prob] : row) rows.back().push_back({next, prob});
  }
  return MdpModel(n_states, n_actions, gamma, initial_state, std::move(cost), std::move(rows));
}

SolverConfig make_config(std::size_t points, double y_min, bool refine, double tolerance,
                         double epsilon, std::size_t max_iterations, std::size_t threads) {
  SolverConfig cfg;
  cfg.n_points = points;
  cfg.y_min = y_min;
  cfg.refine = refine;
  cfg.tolerance = tolerance;
  cfg.epsilon = epsilon;
  cfg.max_iterations = max_iterations;
  cfg.threads = threads;
  return cfg;
}

// A solved model: the solve result plus its greedy policy.
struct Solution {
  MdpModel model;
  SolveResult result;
  AugmentedPolicy policy;
};

Solution solve_model(const MdpModel& model, const SolverConfig& cfg) {
  SolveResult r = value_iteration(model, cfg);
  AugmentedPolicy p = AugmentedPolicy::from_solution(model, r, cfg.threads);
  return Solution{model, std::move(r), std::move(p)};
}

py::dict experiment_to_dict(const ExperimentReport& rep) {
  py::list policies;
  for (const auto& a : rep.alphas) {
    py::dict d;
    d["alpha"] = a.alpha;
    d["rollouts"] = a.rollouts;
    d["failures"] = a.failures;
    d["mean_success_cost"] = a.mean_success_cost;
    d["mean_cost"] = a.mean_cost;
    d["empirical_cvar"] = a.empirical_cvar;
    d["costs"] = a.costs;
    d["failed"] = a.failed;
    policies.append(d);
  }
  py::dict out;
  out["policies"] = policies;
  out["iterations"] = rep.solve.iterations;
  out["converged"] = rep.solve.converged;
  return out;
}

}  // namespace

PYBIND11_MODULE(cvar_mdp, m) {
  m.doc() = "CVaR-optimal planning for finite MDPs";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<SizeError>(m, "SizeError", PyExc_RuntimeError);
  py::register_exception<StructuralError>(m, "StructuralError", PyExc_RuntimeError);

  m.def("var", [](std::vector<double> z, std::vector<double> p, double alpha) {
        return var_discrete(make_dist(std::move(z), std::move(p)), alpha);
      }, py::arg("outcomes"), py::arg("probabilities") = std::vector<double>{}, py::arg("alpha"));
  m.def("cvar", [](std::vector<double> z, std::vector<double> p, double alpha) {
        return cvar_primal(make_dist(std::move(z), std::move(p)), alpha).value;
      }, py::arg("outcomes"), py::arg("probabilities") = std::vector<double>{}, py::arg("alpha"),
      "CVaR by the primal minimization over w.");
  m.def("cvar_dual", [](std::vector<double> z, std::vector<double> p, double alpha) {
        const auto r = cvar_dual(make_dist(std::move(z), std::move(p)), alpha);
        return py::make_tuple(r.value, r.xi.weights);
      }, py::arg("outcomes"), py::arg("probabilities") = std::vector<double>{}, py::arg("alpha"),
      "(value, xi) from the risk-envelope maximization.");

  py::class_<MdpModel>(m, "Mdp")
      .def(py::init(&make_model), py::arg("n_states"), py::arg("n_actions"), py::arg("gamma"),
           py::arg("initial_state"), py::arg("cost"), py::arg("transitions"),
           "cost is row-major (state, action); transitions holds one [(next, prob), ...] row per pair.")
      .def_static("from_json", &mdp_from_json)
      .def_static("load", [](const std::string& path) { return load_mdp(path); })
      .def("to_json", &mdp_to_json)
      .def("save", [](const MdpModel& model, const std::string& path) { save_mdp(model, path); })
      .def("problems", [](const MdpModel& model) {
        std::vector<std::string> out;
        for (const auto& v : validate_mdp(model)) out.push_back(v.message);
        return out;
      })
      .def_property_readonly("n_states", &MdpModel::n_states)
      .def_property_readonly("n_actions", &MdpModel::n_actions)
      .def_property_readonly("gamma", &MdpModel::gamma)
      .def_property_readonly("initial_state", &MdpModel::initial_state)
      .def("cost", &MdpModel::cost);

  py::class_<Solution>(m, "Solution")
      .def_property_readonly("iterations", [](const Solution& s) { return s.result.iterations; })
      .def_property_readonly("converged", [](const Solution& s) { return s.result.converged; })
      .def_property_readonly("residuals", [](const Solution& s) { return s.result.residual_history; })
      .def_property_readonly("error_bound", [](const Solution& s) { return s.result.error_bound; })
      .def_property_readonly("tolerance", [](const Solution& s) { return s.result.tolerance; })
      .def("grid", [](const Solution& s, StateIndex x) {
        const auto p = s.result.grid.points(x);
        return std::vector<double>(p.begin(), p.end());
      })
      .def("values", [](const Solution& s, StateIndex x) {
        const auto r = s.result.value.row(x);
        return std::vector<double>(r.begin(), r.end());
      })
      .def("value", [](const Solution& s, StateIndex x, double y) { return s.policy.value(x, y); },
           py::arg("state"), py::arg("y"), "Interpolated V(x, y).")
      .def("action", [](const Solution& s, StateIndex x, double y) {
        const auto d = s.policy.greedy_action(x, y);
        return py::make_tuple(d.action, d.xi);
      }, py::arg("state"), py::arg("y"), "(action, xi) of the greedy policy at (x, y).")
      .def("rollout", [](const Solution& s, double alpha, std::size_t horizon, std::uint64_t seed) {
        const auto r = rollout(s.policy, {alpha, horizon, seed});
        py::dict d;
        d["states"] = r.states;
        d["confidences"] = r.confidences;
        d["actions"] = r.actions;
        d["stage_costs"] = r.stage_costs;
        d["discounted_total"] = r.discounted_total;
        return d;
      }, py::arg("alpha"), py::arg("horizon") = 100, py::arg("seed") = 0)
      .def("evaluate", [](const Solution& s, double alpha, std::size_t horizon, std::size_t n,
                          std::uint64_t seed) {
        const auto e = evaluate_cvar_of_policy(s.policy, alpha, horizon, n, seed);
        py::dict d;
        d["cvar"] = e.cvar;
        d["mean"] = e.mean;
        d["std_error"] = e.std_error;
        d["costs"] = e.costs;
        return d;
      }, py::arg("alpha"), py::arg("horizon") = 200, py::arg("rollouts") = 1000, py::arg("seed") = 0);

  m.def("solve", [](const MdpModel& model, std::size_t points, double y_min, bool refine,
                    double tolerance, double epsilon, std::size_t max_iterations, std::size_t threads) {
        py::gil_scoped_release release;
        return solve_model(model, make_config(points, y_min, refine, tolerance, epsilon,
                                              max_iterations, threads));
      }, py::arg("model"), py::arg("points") = 21, py::arg("y_min") = 1e-2, py::arg("refine") = true,
      py::arg("tolerance") = 0.0, py::arg("epsilon") = 0.0, py::arg("max_iterations") = 10000,
      py::arg("threads") = 1, "Value iteration on the augmented state.");

  m.def("optimal_cvar", [](const MdpModel& model, double alpha, std::size_t horizon) {
        return brute_force_optimal_cvar(model, alpha, horizon).value;
      }, py::arg("model"), py::arg("alpha"), py::arg("horizon"),
      "Exact optimum of CVaR_alpha of the horizon-T discounted cost over history-dependent policies.");

  m.def("gridworld_presets", &gridworld_preset_names);
  m.def("gridworld_spec", [](const std::string& name) { return grid_spec_to_json(gridworld_preset(name)); },
        py::arg("name"), "JSON text of a built-in layout.");
  m.def("gridworld_mdp", [](const std::string& spec_json) {
        return build_gridworld_mdp(grid_spec_from_json(spec_json));
      }, py::arg("spec_json"));
  m.def("robustness_experiment", [](const std::string& spec_json, std::vector<double> alphas,
                                    std::size_t maps, std::size_t rollouts, std::uint64_t seed) {
        ExperimentConfig cfg;
        cfg.alphas = std::move(alphas);
        cfg.n_maps = maps;
        cfg.n_rollouts_per_map = rollouts;
        cfg.seed = seed;
        const GridSpec spec = grid_spec_from_json(spec_json);
        ExperimentReport rep;
        {
          py::gil_scoped_release release;
          rep = robustness_experiment(spec, cfg);
        }
        return experiment_to_dict(rep);
      }, py::arg("spec_json"), py::arg("alphas") = std::vector<double>{0.1, 1.0}, py::arg("maps") = 20,
      py::arg("rollouts") = 20, py::arg("seed") = 0);
}
