#include "cvar_mdp/mdp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cvar_mdp/errors.hpp"
#include "json.hpp"

namespace cvar_mdp {

MdpModel::MdpModel(std::size_t n_states, std::size_t n_actions, double gamma,
                   StateIndex initial_state, std::vector<double> cost,
                   std::vector<std::vector<Transition>> transitions)
    : n_states_(n_states),
      n_actions_(n_actions),
      gamma_(gamma),
      initial_state_(initial_state),
      cost_(std::move(cost)),
      rows_(std::move(transitions)) {
  if (n_states_ == 0 || n_actions_ == 0) {
    throw std::invalid_argument("MdpModel: need at least one state and one action");
  }
  if (cost_.size() != n_states_ * n_actions_) {
    throw std::invalid_argument("MdpModel: cost table must have n_states * n_actions entries");
  }
  if (rows_.size() != n_states_ * n_actions_) {
    throw std::invalid_argument("MdpModel: need one transition row per (state, action)");
  }
  for (double c : cost_) {
    if (std::isfinite(c)) c_max_ = std::max(c_max_, std::abs(c));
  }
}

ValidationReport validate_mdp(const MdpModel& model) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, StateIndex x, ActionIndex a, std::string msg) {
    report.push_back(Violation{kind, x, a, std::move(msg)});
  };

  const double gamma = model.gamma();
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    add(ViolationKind::kDiscountOutOfRange, -1, -1,
        "discount out of range: gamma = " + std::to_string(gamma) + " (need 0 <= gamma < 1)");
  }
  const auto n_states = static_cast<StateIndex>(model.n_states());
  if (model.initial_state() < 0 || model.initial_state() >= n_states) {
    add(ViolationKind::kInitialStateOutOfRange, model.initial_state(), -1,
        "initial state out of range");
  }

  for (StateIndex x = 0; x < n_states; ++x) {
    for (ActionIndex a = 0; a < static_cast<ActionIndex>(model.n_actions()); ++a) {
      const std::string where =
          "(state " + std::to_string(x) + ", action " + std::to_string(a) + ")";
      if (!std::isfinite(model.cost(x, a))) {
        add(ViolationKind::kNonFiniteCost, x, a, "non-finite cost at " + where);
      }
      const auto row = model.successors(x, a);
      double sum = 0.0;
      bool any_positive = false;
      bool probs_ok = true;
      for (const Transition& t : row) {
        if (t.next < 0 || t.next >= n_states) {
          add(ViolationKind::kSuccessorOutOfRange, x, a,
              "successor " + std::to_string(t.next) + " out of range at " + where);
        }
        if (!(t.prob >= 0.0 && t.prob <= 1.0)) {
          probs_ok = false;
          add(ViolationKind::kProbabilityOutOfRange, x, a,
              "probability " + std::to_string(t.prob) + " outside [0,1] at " + where);
        }
        if (t.prob > 0.0) any_positive = true;
        sum += t.prob;
      }
      if (!any_positive) {
        add(ViolationKind::kEmptyRow, x, a, "no successor with positive probability at " + where);
      } else if (probs_ok && std::abs(sum - 1.0) > kRowSumTolerance) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", sum);
        add(ViolationKind::kRowSum, x, a, "probabilities sum to " + std::string(buf) + " at " + where);
      }
    }
  }
  return report;
}

std::string format_report(const ValidationReport& report) {
  std::string out;
  for (const Violation& v : report) {
    if (!out.empty()) out += "; ";
    out += v.message;
  }
  return out;
}

ValidationError::ValidationError(ValidationReport report)
    : std::runtime_error("invalid MDP: " + format_report(report)), report_(std::move(report)) {}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  // JSON has no inf/nan literals; validation would reject such models anyway.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

using nlohmann::json;

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

const json& require(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) throw ParseError(std::string("missing field ") + field);
  return *it;
}

template <typename T>
T get_as(const json& value, const std::string& field) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ParseError("field " + field + ": unexpected type");
  }
}

}  // namespace

std::string mdp_to_json(const MdpModel& model) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"n_states\": " << model.n_states() << ",\n";
  os << "  \"n_actions\": " << model.n_actions() << ",\n";
  os << "  \"gamma\": " << fmt17(model.gamma()) << ",\n";
  os << "  \"initial_state\": " << model.initial_state() << ",\n";
  os << "  \"cost\": [";
  for (std::size_t x = 0; x < model.n_states(); ++x) {
    os << (x ? ",\n    [" : "\n    [");
    for (std::size_t a = 0; a < model.n_actions(); ++a) {
      if (a) os << ", ";
      os << fmt17(model.cost(static_cast<StateIndex>(x), static_cast<ActionIndex>(a)));
    }
    os << "]";
  }
  os << "\n  ],\n";
  os << "  \"transitions\": [";
  bool first = true;
  for (std::size_t x = 0; x < model.n_states(); ++x) {
    for (std::size_t a = 0; a < model.n_actions(); ++a) {
      os << (first ? "\n" : ",\n");
      first = false;
      os << "    {\"state\": " << x << ", \"action\": " << a << ", \"next\": [";
      const auto row = model.successors(static_cast<StateIndex>(x), static_cast<ActionIndex>(a));
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (k) os << ", ";
        os << "[" << row[k].next << ", " << fmt17(row[k].prob) << "]";
      }
      os << "]}";
    }
  }
  os << "\n  ]\n}\n";
  return os.str();
}

MdpModel mdp_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("line " + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError("line 1: top-level value must be an object");

  const auto n_states = get_as<std::int64_t>(require(doc, "n_states"), "n_states");
  const auto n_actions = get_as<std::int64_t>(require(doc, "n_actions"), "n_actions");
  const auto gamma = get_as<double>(require(doc, "gamma"), "gamma");
  const auto initial = get_as<std::int64_t>(require(doc, "initial_state"), "initial_state");
  if (n_states <= 0) throw ParseError("field n_states: must be positive");
  if (n_actions <= 0) throw ParseError("field n_actions: must be positive");

  const json& cost_json = require(doc, "cost");
  if (!cost_json.is_array() || static_cast<std::int64_t>(cost_json.size()) != n_states) {
    throw ParseError("field cost: expected n_states rows");
  }
  std::vector<double> cost;
  cost.reserve(static_cast<std::size_t>(n_states * n_actions));
  for (std::size_t x = 0; x < cost_json.size(); ++x) {
    const json& row = cost_json[x];
    const std::string field = "cost[" + std::to_string(x) + "]";
    if (!row.is_array() || static_cast<std::int64_t>(row.size()) != n_actions) {
      throw ParseError("field " + field + ": expected n_actions entries");
    }
    for (const json& c : row) cost.push_back(get_as<double>(c, field));
  }

  const json& trans_json = require(doc, "transitions");
  if (!trans_json.is_array()) throw ParseError("field transitions: expected array");
  std::vector<std::vector<Transition>> rows(static_cast<std::size_t>(n_states * n_actions));
  std::vector<bool> seen(rows.size(), false);
  for (std::size_t k = 0; k < trans_json.size(); ++k) {
    const json& entry = trans_json[k];
    const std::string field = "transitions[" + std::to_string(k) + "]";
    if (!entry.is_object()) throw ParseError("field " + field + ": expected object");
    auto sub = [&](const char* name) -> const json& {
      auto it = entry.find(name);
      if (it == entry.end()) throw ParseError("missing field " + field + "." + name);
      return *it;
    };
    const auto x = get_as<std::int64_t>(sub("state"), field + ".state");
    const auto a = get_as<std::int64_t>(sub("action"), field + ".action");
    if (x < 0 || x >= n_states) throw ParseError("field " + field + ".state: out of range");
    if (a < 0 || a >= n_actions) throw ParseError("field " + field + ".action: out of range");
    const auto r = static_cast<std::size_t>(x * n_actions + a);
    if (seen[r]) throw ParseError("field " + field + ": duplicate (state, action) entry");
    seen[r] = true;
    const json& next = sub("next");
    if (!next.is_array()) throw ParseError("field " + field + ".next: expected array");
    for (const json& pair : next) {
      if (!pair.is_array() || pair.size() != 2) {
        throw ParseError("field " + field + ".next: expected [state, probability] pairs");
      }
      rows[r].push_back(Transition{
          static_cast<StateIndex>(get_as<std::int64_t>(pair[0], field + ".next")),
          get_as<double>(pair[1], field + ".next")});
    }
  }

  MdpModel model(static_cast<std::size_t>(n_states), static_cast<std::size_t>(n_actions), gamma,
                 static_cast<StateIndex>(initial), std::move(cost), std::move(rows));
  if (auto report = validate_mdp(model); !report.empty()) throw ValidationError(std::move(report));
  return model;
}

MdpModel load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return mdp_from_json(ss.str());
}

void save_mdp(const MdpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << mdp_to_json(model);
}

TrajectoryCost TrajectoryCost::from_stage_costs(std::vector<double> costs, double gamma) {
  TrajectoryCost tc;
  double discount = 1.0;
  for (double z : costs) {
    tc.discounted_total += discount * z;
    discount *= gamma;
  }
  tc.horizon = costs.size();
  tc.stage_costs = std::move(costs);
  return tc;
}

}  // namespace cvar_mdp
