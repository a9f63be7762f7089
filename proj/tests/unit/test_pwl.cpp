#include <cmath>

#include "cvar_mdp/errors.hpp"
#include "cvar_mdp/pwl.hpp"
#include "cvar_mdp/risk.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace cvar_mdp;

namespace {

PwlConcaveFunction linear(double f0, double slope) { return {{0.0, 1.0}, {f0, f0 + slope}}; }

}  // namespace

TEST_CASE("single successor follows its only direction") {
  SeparablePwlProblem p{{1.0}, {linear(2.0, -3.0)}, 0.4};
  const auto s = maximize_separable_pwl(p);
  CHECK(s.z[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(s.objective_value == doctest::Approx(2.0 - 3.0 * 0.4).epsilon(1e-14));
}

TEST_CASE("two successors, budget one half") {
  SeparablePwlProblem p{{0.5, 0.5}, {linear(0.0, 1.0), {{0.0, 0.5, 1.0}, {0.0, 1.0, 1.0}}}, 0.5};
  const auto s = maximize_separable_pwl(p);
  CHECK(s.z[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.z[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.objective_value == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(testing::fine_grid_value(p, 200) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("budget one forces every coordinate to one") {
  Rng rng(31);
  for (int k = 0; k < 50; ++k) {
    auto p = testing::random_pwl_problem(rng, 4, 5);
    p.budget = 1.0;
    const auto s = maximize_separable_pwl(p);
    double expect = 0.0;
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
      CHECK(s.z[j] == doctest::Approx(1.0).epsilon(1e-12));
      expect += p.weights[j] * p.objectives[j].evaluate(1.0);
    }
    CHECK(s.objective_value == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("errors") {
  SeparablePwlProblem p{{1.0}, {linear(0.0, 1.0)}, 0.0};
  CHECK_THROWS_AS(maximize_separable_pwl(p), DomainError);
  p.budget = 1.5;
  CHECK_THROWS_AS(maximize_separable_pwl(p), DomainError);
  p.budget = 0.5;
  p.objectives[0] = {{0.0, 0.5, 1.0}, {0.0, 0.0, 1.0}};
  CHECK_THROWS_AS(maximize_separable_pwl(p), StructuralError);
}

TEST_CASE("property: greedy matches the simplex reference and the grid search") {
  Rng rng(32);
  for (int k = 0; k < 100; ++k) {
    const auto p = testing::random_pwl_problem(rng, 4, 5);
    const auto s = maximize_separable_pwl(p);
    CHECK(std::abs(s.objective_value - testing::hypograph_lp_value(p)) <= 1e-9);
    CHECK(std::abs(s.objective_value - testing::fine_grid_value(p, 40)) <= 2e-3);
    // Feasibility of the returned point.
    double used = 0.0;
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
      CHECK(s.z[j] >= -1e-15);
      CHECK(s.z[j] <= 1.0 + 1e-15);
      used += p.weights[j] * s.z[j];
    }
    CHECK(used == doctest::Approx(p.budget).epsilon(1e-12));
    CHECK(in_risk_envelope({s.xi, p.budget}, p.weights));
  }
}

TEST_CASE("property: linear objectives reduce to the cvar dual") {
  Rng rng(33);
  for (int k = 0; k < 100; ++k) {
    const auto d = testing::random_distribution(rng, 1 + rng.index(5));
    const double alpha = 0.05 + 0.95 * rng.uniform();
    SeparablePwlProblem p;
    p.weights = d.probabilities;
    for (double z : d.outcomes) p.objectives.push_back(linear(0.0, z));
    p.budget = alpha;
    const auto s = maximize_separable_pwl(p);
    CHECK(s.objective_value / alpha == doctest::Approx(cvar_dual(d, alpha).value).epsilon(1e-10));
  }
}

TEST_CASE("segment merge gains agree with the full solver") {
  Rng rng(34);
  for (int k = 0; k < 50; ++k) {
    const auto p = testing::random_pwl_problem(rng, 4, 5);
    std::vector<std::vector<double>> slopes, lengths;
    std::vector<SegmentSource> sources;
    double base = 0.0;
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
      slopes.push_back(p.objectives[j].slopes());
      std::vector<double> len;
      for (std::size_t i = 1; i < p.objectives[j].breakpoints.size(); ++i) {
        len.push_back(p.objectives[j].breakpoints[i] - p.objectives[j].breakpoints[i - 1]);
      }
      lengths.push_back(len);
      base += p.weights[j] * p.objectives[j].values.front();
    }
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
      sources.push_back({p.weights[j], slopes[j], lengths[j]});
    }
    SegmentMerge merge;
    merge.build(sources);
    CHECK(merge.total_budget() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(base + merge.gain(p.budget) ==
          doctest::Approx(maximize_separable_pwl(p).objective_value).epsilon(1e-10));
  }
}
