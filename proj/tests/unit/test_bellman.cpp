#include <algorithm>
#include <cmath>

#include "cvar_mdp/bellman.hpp"
#include "cvar_mdp/errors.hpp"
#include "cvar_mdp/oracle.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace cvar_mdp;

namespace {

double sup_diff(const ValueTable& a, const ValueTable& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  }
  return d;
}

// State 0: action 0 costs 1 and splits evenly between 0 and 1, action 1 costs
// 12 and stays. State 1 is absorbing at cost 0.
MdpModel branching() {
  return MdpModel(2, 2, 0.9, 0, {1.0, 12.0, 0.0, 0.0},
                  {{{0, 0.5}, {1, 0.5}}, {{0, 1.0}}, {{1, 1.0}}, {{1, 1.0}}});
}

}  // namespace

TEST_CASE("self loop maps a constant table to c + gamma v") {
  const MdpModel m(1, 1, 0.9, 0, {3.0}, {{{0, 1.0}}});
  auto grid = InterpolationGrid::shared(1, build_log_grid(11, 0.01));
  const ValueTable v(grid, 7.0);
  const auto out = apply_interpolated_bellman(v, grid, m);
  for (double x : out.values.values()) CHECK(x == doctest::Approx(3.0 + 0.9 * 7.0).epsilon(1e-14));
}

TEST_CASE("small confidence reproduces the worst-case backup") {
  const MdpModel m = branching();
  auto grid = InterpolationGrid::shared(2, {0.0, 0.01, 0.1, 1.0});
  ValueTable v(grid, 0.0);
  for (std::size_t i = 0; i < 4; ++i) v.at(1, i) = 10.0;
  const auto out = apply_interpolated_bellman(v, grid, m, true);
  // Worst case: min(1 + 0.9 * 10, 12 + 0.9 * 0) = 10.
  CHECK(out.values.at(0, 0) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(out.values.at(0, 1) == doctest::Approx(10.0).epsilon(1e-14));
  // Expectation at y = 1: 1 + 0.9 * 5.
  CHECK(out.values.at(0, 3) == doctest::Approx(5.5).epsilon(1e-14));
  CHECK(out.actions[3] == 0);
}

TEST_CASE("non-concave tables are rejected") {
  const MdpModel m = branching();
  auto grid = InterpolationGrid::shared(2, {0.0, 0.1, 0.5, 1.0});
  ValueTable v(grid, 0.0);
  v.at(0, 1) = 0.0;
  v.at(0, 2) = 0.0;
  v.at(0, 3) = 10.0;  // y V jumps upward on the last segment
  CHECK_THROWS_AS(apply_interpolated_bellman(v, grid, m), StructuralError);
}

TEST_CASE("value iteration on the unit self loop") {
  const MdpModel m(1, 1, 0.9, 0, {1.0}, {{{0, 1.0}}});
  const auto r = value_iteration(m);
  CHECK(r.converged);
  for (double x : r.value.values()) CHECK(std::abs(x - 10.0) <= 10.0 * r.tolerance / 0.1 + 1e-9);
  CHECK(r.residual_history.size() == r.iterations);
}

TEST_CASE("an iteration cap reports non-convergence") {
  SolverConfig cfg;
  cfg.max_iterations = 3;
  const auto r = value_iteration(branching(), cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 3);
}

TEST_CASE("error bound examples") {
  CHECK(interpolation_error_bound(1.0, 0.0, 0.9, 5.0, 1.0, 10).apriori == 0.0);
  const auto b = interpolation_error_bound(1.01, 1e-3, 0.95, 1.0, 0.0, 0);
  CHECK(b.apriori == doctest::Approx(7.619).epsilon(1e-12));
  const auto late = interpolation_error_bound(1.01, 1e-3, 0.95, 1.0, 0.0, 2000);
  CHECK(late.finite_time == doctest::Approx(late.apriori).epsilon(1e-12));
  const auto early = interpolation_error_bound(1.01, 1e-3, 0.95, 1.0, 0.0, 10);
  CHECK(early.finite_time > early.apriori);
}

TEST_CASE("sweeps are bit-identical across thread counts") {
  Rng rng(41);
  const MdpModel m = testing::random_mdp(rng, {6, 6, 2, 3, 4, 0.9, 5.0, false});
  auto grid = InterpolationGrid::shared(6, build_log_grid(9, 0.02));
  const auto v = testing::random_concave_table(rng, grid, 4.0);
  const auto one = apply_interpolated_bellman(v, grid, m, true, 1);
  const auto three = apply_interpolated_bellman(v, grid, m, true, 3);
  CHECK(one.values == three.values);
  CHECK(one.actions == three.actions);
  CHECK(one.xi == three.xi);
}

TEST_CASE("property: monotone, constant shift, concavity and slope bound") {
  Rng rng(42);
  for (int k = 0; k < 100; ++k) {
    const MdpModel m = testing::random_mdp(rng, {1, 4, 1, 3, 3, 0.5 + 0.45 * rng.uniform(), 5.0, false});
    const std::size_t n = m.n_states();
    auto grid = InterpolationGrid::shared(n, build_log_grid(4 + rng.index(8), 0.005 + 0.2 * rng.uniform()));
    const auto v1 = testing::random_concave_table(rng, grid, 3.0);
    auto bump = testing::random_concave_table(rng, grid, 2.0);
    const double lowest = *std::min_element(bump.values().begin(), bump.values().end());
    ValueTable v2 = v1;
    for (std::size_t i = 0; i < v2.values().size(); ++i) v2.values()[i] += bump.values()[i] - lowest;

    const auto t1 = apply_interpolated_bellman(v1, grid, m).values;
    const auto t2 = apply_interpolated_bellman(v2, grid, m).values;
    for (std::size_t i = 0; i < t1.values().size(); ++i) CHECK(t1.values()[i] <= t2.values()[i] + 1e-12);

    const double c = 5.0 * rng.uniform() - 2.5;
    ValueTable shifted = v1;
    for (double& x : shifted.values()) x += c;
    const auto ts = apply_interpolated_bellman(shifted, grid, m).values;
    for (std::size_t i = 0; i < t1.values().size(); ++i) {
      CHECK(ts.values()[i] == doctest::Approx(t1.values()[i] + m.gamma() * c).epsilon(1e-12));
    }

    CHECK(max_concavity_violation(t1, grid) <= 1e-9);
    CHECK(max_abs_chord_slope(t1, grid) <= m.c_max() + m.gamma() * max_abs_chord_slope(v1, grid) + 1e-9);
    CHECK(sup_diff(t1, t2) <= m.gamma() * sup_diff(v1, v2) + 1e-12);
  }
}

TEST_CASE("boundary rows match the expected and worst-case oracles") {
  const MdpModel m = branching();
  SolverConfig cfg;
  cfg.refine = false;
  const auto r = value_iteration(m, cfg);
  REQUIRE(r.converged);
  const auto neutral = risk_neutral_vi(m, 1e-12);
  const auto worst = minimax_vi(m, 1e-12);
  const double slack = m.gamma() / (1.0 - m.gamma()) * (r.tolerance + 1e-12);
  for (StateIndex x = 0; x < 2; ++x) {
    CHECK(std::abs(r.value.at(x, r.grid.size(x) - 1) - neutral.values[x]) <= slack);
    CHECK(std::abs(r.value.at(x, 0) - worst.values[x]) <= slack);
  }
}
