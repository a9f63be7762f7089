#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvar_mdp {

using StateIndex = std::int32_t;
using ActionIndex = std::int32_t;

struct Transition {
  StateIndex next = 0;
  double prob = 0.0;

  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Finite MDP with deterministic stage costs and a sparse transition kernel.
///
/// Immutable once constructed. The constructor only checks table shapes; the
/// model invariants (row sums, discount range, ...) are checked by
/// validate_mdp so that invalid models can still be represented and reported.
class MdpModel {
 public:
  MdpModel() = default;

  /// `cost` is row-major (state, action); `transitions` holds one successor
  /// row per (state, action) pair in the same order.
  MdpModel(std::size_t n_states, std::size_t n_actions, double gamma,
           StateIndex initial_state, std::vector<double> cost,
           std::vector<std::vector<Transition>> transitions);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }
  StateIndex initial_state() const { return initial_state_; }

  double cost(StateIndex x, ActionIndex a) const { return cost_[row(x, a)]; }
  std::span<const Transition> successors(StateIndex x, ActionIndex a) const {
    return rows_[row(x, a)];
  }

  /// max |C(x, a)| over the table.
  double c_max() const { return c_max_; }

  const std::vector<double>& cost_table() const { return cost_; }
  const std::vector<std::vector<Transition>>& transition_rows() const { return rows_; }

  friend bool operator==(const MdpModel&, const MdpModel&) = default;

 private:
  std::size_t row(StateIndex x, ActionIndex a) const {
    return static_cast<std::size_t>(x) * n_actions_ + static_cast<std::size_t>(a);
  }

  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  double gamma_ = 0.0;
  StateIndex initial_state_ = 0;
  std::vector<double> cost_;
  std::vector<std::vector<Transition>> rows_;
  double c_max_ = 0.0;
};

enum class ViolationKind {
  kDiscountOutOfRange,
  kInitialStateOutOfRange,
  kNonFiniteCost,
  kSuccessorOutOfRange,
  kProbabilityOutOfRange,
  kRowSum,
  kEmptyRow,
};

struct Violation {
  ViolationKind kind;
  StateIndex state = -1;
  ActionIndex action = -1;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

inline constexpr double kRowSumTolerance = 1e-9;

/// Every violated model invariant, with the offending indices. Empty means valid.
ValidationReport validate_mdp(const MdpModel& model);

/// Thrown by load_mdp when the file parses but the model is invalid.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(ValidationReport report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

std::string format_report(const ValidationReport& report);

/// JSON text with every real printed to 17 significant digits.
std::string mdp_to_json(const MdpModel& model);
/// Parses and validates. Throws ParseError or ValidationError.
MdpModel mdp_from_json(const std::string& text);

MdpModel load_mdp(const std::filesystem::path& path);
void save_mdp(const MdpModel& model, const std::filesystem::path& path);

/// Stage costs Z_0..Z_{T-1} of one trajectory and their discounted sum.
struct TrajectoryCost {
  std::vector<double> stage_costs;
  double discounted_total = 0.0;
  std::size_t horizon = 0;

  static TrajectoryCost from_stage_costs(std::vector<double> costs, double gamma);
};

}  // namespace cvar_mdp
