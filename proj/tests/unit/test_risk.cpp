#include <algorithm>
#include <cmath>
#include <numeric>

#include "cvar_mdp/errors.hpp"
#include "cvar_mdp/risk.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace cvar_mdp;

namespace {

const DiscreteDistribution kFour = DiscreteDistribution::uniform({1, 2, 3, 4});

// Dual value by checking every vertex of the envelope: all weights at 0 or
// 1/alpha except at most one.
double vertex_scan_dual(const DiscreteDistribution& d, double alpha) {
  const std::size_t n = d.outcomes.size();
  double best = -INFINITY;
  for (std::size_t mask = 0; mask < (1u << n); ++mask) {
    for (std::size_t free = 0; free < n; ++free) {
      if (mask & (1u << free)) continue;
      double mass = 0.0, value = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask & (1u << i)) {
          mass += d.probabilities[i] / alpha;
          value += d.probabilities[i] / alpha * d.outcomes[i];
        }
      }
      const double w = (1.0 - mass) / d.probabilities[free];
      if (w < -1e-12 || w > 1.0 / alpha + 1e-12) continue;
      best = std::max(best, value + d.probabilities[free] * w * d.outcomes[free]);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("var examples") {
  CHECK(var_discrete(kFour, 0.5) == 2.0);
  CHECK(var_discrete(kFour, 0.25) == 1.0);
  CHECK(var_discrete(DiscreteDistribution::point_mass(7.0), 0.3) == 7.0);
  CHECK_THROWS_AS(var_discrete(kFour, 0.0), DomainError);
  CHECK_THROWS_AS(var_discrete(kFour, 1.5), DomainError);
}

TEST_CASE("primal examples") {
  CHECK(cvar_primal(kFour, 1.0).value == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(cvar_primal(kFour, 0.5).value == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(cvar_primal(DiscreteDistribution::point_mass(-3.25), 0.1).value == -3.25);
  CHECK_THROWS_AS(cvar_primal(kFour, -0.1), DomainError);
}

TEST_CASE("dual examples") {
  auto r = cvar_dual(kFour, 0.25);
  CHECK(r.value == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(r.xi.weights == std::vector<double>{0, 0, 0, 4});
  r = cvar_dual(kFour, 1.0);
  CHECK(r.value == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(r.xi.weights == std::vector<double>{1, 1, 1, 1});
  r = cvar_dual(kFour, 0.5);
  CHECK(r.value == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(r.xi.weights == std::vector<double>{0, 0, 2, 2});
  CHECK_THROWS_AS(cvar_dual(kFour, 2.0), DomainError);
}

TEST_CASE("invalid distributions are rejected") {
  DiscreteDistribution d{{1, 2}, {0.5, 0.6}};
  CHECK_THROWS_AS(d.validate(), DomainError);
  d = {{1, 2}, {-0.5, 1.5}};
  CHECK_THROWS_AS(d.validate(), DomainError);
}

TEST_CASE("property: greedy dual matches the vertex scan and stays in the envelope") {
  Rng rng(21);
  for (int k = 0; k < 300; ++k) {
    const auto d = testing::random_distribution(rng, 1 + rng.index(7));
    const double alpha = 0.01 + 0.99 * rng.uniform();
    const auto r = cvar_dual(d, alpha);
    CHECK(std::abs(r.value - vertex_scan_dual(d, alpha)) <= 1e-9);
    CHECK(in_risk_envelope(r.xi, d.probabilities));
  }
}

TEST_CASE("property: cvar lies between the upper-tail quantile and max, and above the mean") {
  Rng rng(22);
  for (int k = 0; k < 300; ++k) {
    const auto d = testing::random_distribution(rng, 1 + rng.index(9));
    const double alpha = 0.01 + 0.99 * rng.uniform();
    const double c = cvar_primal(d, alpha).value;
    // The alpha-tail starts at the (1 - alpha) quantile.
    CHECK(c >= var_discrete(d, 1.0 - alpha) - 1e-12);
    CHECK(c <= d.max() + 1e-12);
    CHECK(c >= d.mean() - 1e-12);
  }
}

TEST_CASE("property: subadditivity on a shared sample space") {
  Rng rng(23);
  for (int k = 0; k < 200; ++k) {
    const auto a = testing::random_distribution(rng, 6);
    DiscreteDistribution b = a, sum = a;
    for (std::size_t i = 0; i < 6; ++i) {
      b.outcomes[i] = 20.0 * rng.uniform() - 10.0;
      sum.outcomes[i] = a.outcomes[i] + b.outcomes[i];
    }
    const double alpha = 0.05 + 0.95 * rng.uniform();
    CHECK(cvar_primal(sum, alpha).value <=
          cvar_primal(a, alpha).value + cvar_primal(b, alpha).value + 1e-9);
  }
}
