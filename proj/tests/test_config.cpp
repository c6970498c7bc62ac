#include <doctest.h>

#include "hclab/config.hpp"
#include "hclab/report.hpp"

using namespace hclab;

TEST_CASE("minimal config resolves every default") {
  const RunManifest m = parse_config_text("model.epsilon = 0.25\n");
  CHECK(m.entries.size() == default_config_entries().size());
  CHECK(m.entries.at("model.epsilon") == "0.25");
  CHECK(m.entries.at("run.realizations") == "20");
  CHECK(m.config.model.epsilon == 0.25);
  CHECK(m.config.realizations == 20);
  CHECK(m.warnings.empty());
}

TEST_CASE("unknown keys are hard errors with the offending line") {
  try {
    parse_config_text("model.epsilon = 0.25\nmodel.epsilonn = 0.3\n", "cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("cfg:2") != std::string::npos);
    CHECK(msg.find("model.epsilonn") != std::string::npos);
  }
}

TEST_CASE("model invariant violations carry a line number") {
  try {
    parse_config_text("model.omega_plus = 0.3\n", "cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("cfg:1") != std::string::npos);
    CHECK(msg.find("1/4") != std::string::npos);
  }
}

TEST_CASE("non-integer L/epsilon is rejected with its line") {
  try {
    parse_config_text("experiment.boxes = 1 1.1\n", "cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("cfg:1") != std::string::npos);
  }
}

TEST_CASE("duplicate keys warn and the last value wins") {
  const RunManifest m =
      parse_config_text("run.realizations = 5\nrun.realizations = 9\n", "cfg");
  CHECK(m.config.realizations == 9);
  REQUIRE(m.warnings.size() == 1);
  CHECK(m.warnings[0].find("duplicate key") != std::string::npos);
  CHECK(m.warnings[0].find("cfg:2") != std::string::npos);
}

TEST_CASE("manifest round-trips through emission") {
  const RunManifest m = parse_config_text(
      "model.epsilon = 0.25\n"
      "model.density.kind = polynomial_thin\n"
      "model.density.kappa = 2\n"
      "run.master_seed = 99\n"
      "experiment.boxes = 1 1.5\n"
      "wegner.deltas = 0.125 0.25 0.5\n");
  const RunManifest again = parse_config_text(emit_manifest(m));
  CHECK(again.entries == m.entries);
  CHECK(again.config.master_seed == 99);
  CHECK(again.config.boxes == std::vector<double>{1.0, 1.5});
}

TEST_CASE("comments and blank lines are ignored") {
  const RunManifest m = parse_config_text(
      "# a comment\n"
      "\n"
      "model.gamma = 2.5\n");
  CHECK(m.config.model.gamma == 2.5);
}

TEST_CASE("malformed lines and values are rejected") {
  CHECK_THROWS_AS(parse_config_text("model.epsilon 0.25\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("model.epsilon = zero\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("run.oracle_dense = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("suit.theta = 3\n"), ConfigError);  // needs > 2d
}

TEST_CASE("policy grid spacing resolves to eps^gamma/8") {
  const RunManifest m = parse_config_text("model.epsilon = 0.25\nmodel.gamma = 2\n");
  CHECK(m.config.resolved_h() == doctest::Approx(0.0625 / 8.0));
  const RunManifest explicit_h = parse_config_text("grid.h = 0.05\n");
  CHECK(explicit_h.config.resolved_h() == 0.05);
}

TEST_CASE("default lifting shifts span [0, s0]") {
  const RunManifest m = parse_config_text("model.epsilon = 0.25\n");
  const auto shifts = m.config.lifting_shifts();
  REQUIRE(shifts.size() == 5);
  CHECK(shifts.front() == 0.0);
  CHECK(shifts.back() == doctest::Approx(0.0625));
}

TEST_CASE("line fit recovers a known slope") {
  std::vector<double> x, y;
  for (int i = 1; i <= 6; ++i) {
    x.push_back(std::log(static_cast<double>(i)));
    y.push_back(2.5 * x.back() + 1.0);
  }
  const LineFit fit = fit_line(x, y);
  CHECK(fit.slope == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fit.slope_ci <= 1e-10);
}

TEST_CASE("wilson interval brackets the estimate") {
  const ProportionCI ci = wilson_interval(80, 100);
  CHECK(ci.estimate == doctest::Approx(0.8));
  CHECK(ci.lo < 0.8);
  CHECK(ci.hi > 0.8);
  CHECK(ci.lo > 0.70);
  CHECK(ci.hi < 0.88);
}
