#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cvar_mdp/cli.hpp"
#include "cvar_mdp/mdp.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cvar_mdp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cvar_mdp_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_model(const fs::path& dir, const MdpModel& m) {
  const auto p = dir / "model.json";
  save_mdp(m, p);
  return p;
}

MdpModel toy() {
  return MdpModel(3, 2, 0.9, 0, {1.0, 2.0, 4.0, 3.0, 0.0, 0.0},
                  {{{0, 0.5}, {1, 0.25}, {2, 0.25}}, {{2, 1.0}}, {{0, 0.5}, {2, 0.5}}, {{1, 1.0}},
                   {{2, 1.0}}, {{2, 1.0}}});
}

}  // namespace

TEST_CASE("solve the unit self loop") {
  const auto dir = scratch("loop");
  const auto model = write_model(dir, MdpModel(1, 1, 0.9, 0, {1.0}, {{{0, 1.0}}}));
  const auto r = run({"solve", model.string(), "--out", (dir / "s").string()});
  REQUIRE(r.code == cli::kOk);
  const auto summary = nlohmann::json::parse(slurp(dir / "s" / "summary.json"));
  CHECK(summary["initial_value_y1"].get<double>() == doctest::Approx(10.0).epsilon(1e-5));
  CHECK(summary["initial_value_y0"].get<double>() == doctest::Approx(10.0).epsilon(1e-5));
  CHECK(fs::exists(dir / "s" / "values.csv"));
  CHECK(fs::exists(dir / "s" / "manifest.json"));
}

TEST_CASE("input errors exit with 2") {
  const auto dir = scratch("errors");
  auto r = run({"solve", (dir / "missing.json").string(), "--out", (dir / "s").string()});
  CHECK(r.code == cli::kInputError);
  CHECK_FALSE(r.err.empty());
  const auto model = write_model(dir, toy());
  REQUIRE(run({"solve", model.string(), "--out", (dir / "s").string()}).code == 0);
  r = run({"evaluate", (dir / "s").string(), "--alpha", "0", "--out", (dir / "e").string()});
  CHECK(r.code == cli::kInputError);
  std::ofstream(dir / "broken.json") << "{\"n_states\": 1,";
  CHECK(run({"solve", (dir / "broken.json").string()}).code == cli::kInputError);
  CHECK(run({"frobnicate"}).code == cli::kInputError);
}

TEST_CASE("evaluate is reproducible for a fixed seed") {
  const auto dir = scratch("evaluate");
  const auto model = write_model(dir, toy());
  REQUIRE(run({"solve", model.string(), "--out", (dir / "s").string()}).code == 0);
  for (const char* name : {"a", "b"}) {
    const auto r = run({"evaluate", (dir / "s").string(), "--alpha", "0.3", "--rollouts", "300",
                        "--seed", "42", "--out", (dir / name).string()});
    REQUIRE(r.code == 0);
  }
  for (const char* file : {"histogram.csv", "rollout.csv", "summary.json"}) {
    CHECK(slurp(dir / "a" / file) == slurp(dir / "b" / file));
  }
}

TEST_CASE("alpha one with many rollouts approaches the expected cost") {
  const auto dir = scratch("mean");
  const auto model = write_model(dir, toy());
  REQUIRE(run({"solve", model.string(), "--out", (dir / "s").string()}).code == 0);
  REQUIRE(run({"evaluate", (dir / "s").string(), "--alpha", "1", "--rollouts", "20000",
               "--horizon", "200", "--seed", "7", "--out", (dir / "e").string()})
              .code == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "e" / "summary.json"));
  const auto solve = nlohmann::json::parse(slurp(dir / "s" / "summary.json"));
  const double mean = summary["empirical_mean"].get<double>();
  const double se = summary["std_error"].get<double>();
  CHECK(std::abs(mean - solve["initial_value_y1"].get<double>()) <= 4.0 * se + 1e-6);
}

TEST_CASE("rerun reproduces a solve and an evaluation") {
  const auto dir = scratch("rerun");
  const auto model = write_model(dir, toy());
  REQUIRE(run({"solve", model.string(), "--out", (dir / "s").string()}).code == 0);
  REQUIRE(run({"rerun", (dir / "s" / "manifest.json").string(), "--out", (dir / "s2").string()}).code == 0);
  CHECK(slurp(dir / "s" / "values.csv") == slurp(dir / "s2" / "values.csv"));
  REQUIRE(run({"evaluate", (dir / "s").string(), "--alpha", "0.5", "--rollouts", "100", "--out",
               (dir / "e").string()})
              .code == 0);
  REQUIRE(run({"rerun", (dir / "e" / "manifest.json").string(), "--out", (dir / "e2").string()}).code == 0);
  CHECK(slurp(dir / "e" / "histogram.csv") == slurp(dir / "e2" / "histogram.csv"));
  CHECK(slurp(dir / "e" / "summary.json") == slurp(dir / "e2" / "summary.json"));
}

TEST_CASE("oracle on a tiny instance passes every check") {
  const auto dir = scratch("oracle");
  const auto model = write_model(dir, toy());
  const auto r = run({"oracle", model.string(), "--horizon", "5", "--alpha", "0.5", "--report",
                      (dir / "report.json").string()});
  CHECK(r.code == cli::kOk);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report["all_pass"].get<bool>());
}

TEST_CASE("oversized oracle instance exits 4 without output") {
  const auto dir = scratch("oracle_big");
  const auto model = write_model(dir, toy());
  const auto r = run({"oracle", model.string(), "--horizon", "30", "--report",
                      (dir / "report.json").string()});
  CHECK(r.code == cli::kSizeGuard);
  CHECK(r.out.empty());
  CHECK_FALSE(fs::exists(dir / "report.json"));
}

TEST_CASE("gridworld export and tiny experiment") {
  const auto dir = scratch("grid");
  auto r = run({"gridworld", "--preset", "desk15x15", "export"});
  REQUIRE(r.code == 0);
  const auto spec = nlohmann::json::parse(r.out);
  CHECK(spec["width"].get<int>() == 15);
  std::ofstream(dir / "line.json")
      << R"({"width": 4, "height": 1, "start": [0, 0], "destination": [3, 0], "obstacles": [],
            "delta": 0.0, "penalty_m": 40.0, "gamma": 0.95, "step_cost": 1.0})";
  r = run({"gridworld", "--spec", (dir / "line.json").string(), "experiment", "--maps", "2",
           "--rollouts", "3", "--seed", "5", "--out", (dir / "x").string()});
  REQUIRE(r.code == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "x" / "summary.json"));
  for (const auto& a : summary["policies"]) CHECK(a["failures"].get<int>() == 0);
  CHECK(run({"gridworld", "--preset", "nope", "export"}).code == cli::kInputError);
}
