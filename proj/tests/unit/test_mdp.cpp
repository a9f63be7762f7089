#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "cvar_mdp/errors.hpp"
#include "cvar_mdp/mdp.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace cvar_mdp;

namespace {

MdpModel self_loop(double cost, double gamma) {
  return MdpModel(1, 1, gamma, 0, {cost}, {{{0, 1.0}}});
}

bool has_kind(const ValidationReport& r, ViolationKind k) {
  for (const auto& v : r) {
    if (v.kind == k) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("valid self loop has an empty report") {
  CHECK(validate_mdp(self_loop(0.0, 0.9)).empty());
}

TEST_CASE("row sum off by 0.02 is reported with its indices") {
  MdpModel m(2, 2, 0.9, 0, {1, 1, 1, 1},
             {{{0, 1.0}}, {{1, 1.0}}, {{0, 0.5}, {1, 0.48}}, {{1, 1.0}}});
  const auto r = validate_mdp(m);
  REQUIRE(r.size() == 1);
  CHECK(r[0].kind == ViolationKind::kRowSum);
  CHECK(r[0].state == 1);
  CHECK(r[0].action == 0);
}

TEST_CASE("gamma of one is out of range") {
  const auto r = validate_mdp(self_loop(1.0, 1.0));
  REQUIRE(r.size() == 1);
  CHECK(r[0].kind == ViolationKind::kDiscountOutOfRange);
  CHECK(r[0].message.find("discount out of range") != std::string::npos);
}

TEST_CASE("other violations") {
  CHECK(has_kind(validate_mdp(MdpModel(1, 1, 0.5, 3, {1.0}, {{{0, 1.0}}})),
                 ViolationKind::kInitialStateOutOfRange));
  CHECK(has_kind(validate_mdp(MdpModel(1, 1, 0.5, 0, {std::nan("")}, {{{0, 1.0}}})),
                 ViolationKind::kNonFiniteCost));
  CHECK(has_kind(validate_mdp(MdpModel(1, 1, 0.5, 0, {1.0}, {{{4, 1.0}}})),
                 ViolationKind::kSuccessorOutOfRange));
  CHECK(has_kind(validate_mdp(MdpModel(1, 1, 0.5, 0, {1.0}, {{{0, -0.5}, {0, 1.5}}})),
                 ViolationKind::kProbabilityOutOfRange));
  CHECK(has_kind(validate_mdp(MdpModel(1, 1, 0.5, 0, {1.0}, {{}})), ViolationKind::kEmptyRow));
}

TEST_CASE("row sum tolerance is 1e-9") {
  CHECK(validate_mdp(MdpModel(1, 1, 0.5, 0, {1.0}, {{{0, 0.5}, {0, 0.5 + 5e-10}}})).empty());
  CHECK_FALSE(validate_mdp(MdpModel(1, 1, 0.5, 0, {1.0}, {{{0, 0.5}, {0, 0.5 + 2e-9}}})).empty());
}

TEST_CASE("json round trip of random 5-state models") {
  Rng rng(7);
  testing::MdpShape shape{5, 5, 1, 3, 4, 0.95, 100.0, false};
  for (int k = 0; k < 20; ++k) {
    const MdpModel m = testing::random_mdp(rng, shape);
    CHECK(mdp_from_json(mdp_to_json(m)) == m);
  }
}

TEST_CASE("save and load through a file") {
  Rng rng(11);
  const MdpModel m = testing::random_mdp(rng, {5, 5, 2, 2, 3, 0.9, 10.0, false});
  const auto path = std::filesystem::temp_directory_path() / "cvar_mdp_test_model.json";
  save_mdp(m, path);
  CHECK(load_mdp(path) == m);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_mdp(path), ParseError);
}

TEST_CASE("missing gamma is a parse error naming the field") {
  const std::string text =
      R"({"n_states": 1, "n_actions": 1, "initial_state": 0, "cost": [[1.0]],
          "transitions": [{"state": 0, "action": 0, "next": [[0, 1.0]]}]})";
  try {
    mdp_from_json(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()) == "missing field gamma");
  }
}

TEST_CASE("malformed json names a line") {
  try {
    mdp_from_json("{\n\"n_states\": 1,\n  oops\n}");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).rfind("line 3", 0) == 0);
  }
}

TEST_CASE("negative probability fails validation on load") {
  const std::string text =
      R"({"n_states": 1, "n_actions": 1, "gamma": 0.5, "initial_state": 0, "cost": [[1.0]],
          "transitions": [{"state": 0, "action": 0, "next": [[0, -1.0], [0, 2.0]]}]})";
  try {
    mdp_from_json(text);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(has_kind(e.report(), ViolationKind::kProbabilityOutOfRange));
  }
}

TEST_CASE("property: corrupting one row sum of a valid model is always caught") {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const MdpModel m = testing::random_mdp(rng, {1, 4, 1, 3, 3, 0.9, 10.0, false});
    REQUIRE(validate_mdp(m).empty());
    auto rows = m.transition_rows();
    const std::size_t r = rng.index(rows.size());
    rows[r][0].prob *= 0.5;
    const MdpModel bad(m.n_states(), m.n_actions(), m.gamma(), m.initial_state(), m.cost_table(),
                       rows);
    const auto report = validate_mdp(bad);
    REQUIRE(report.size() == 1);
    CHECK(report[0].kind == ViolationKind::kRowSum);
    CHECK(static_cast<std::size_t>(report[0].state) * m.n_actions() +
              static_cast<std::size_t>(report[0].action) ==
          r);
  }
}

TEST_CASE("trajectory cost discounting") {
  const auto t = TrajectoryCost::from_stage_costs({1.0, 2.0, 4.0}, 0.5);
  CHECK(t.discounted_total == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(t.horizon == 3);
}
