#include <doctest.h>

#include <cmath>

#include "hclab/medium.hpp"
#include "hclab/rng.hpp"

using namespace hclab;

namespace {

ModelParams reference_params() {
  ModelParams p;
  p.d = 2;
  p.epsilon = 0.25;
  p.gamma = 2.0;
  p.omega_minus = 0.1;
  p.omega_plus = 0.18;
  return p;
}

// field with one prescribed radius in every cell
RadiiField constant_field(const ModelParams& p, double box, double omega) {
  RadiiField f = sample_radii(p, Box{{0, 0, 0}, box}, 0);
  for (double& v : f.values) v = omega;
  return f;
}

}  // namespace

TEST_CASE("model invariants are enforced") {
  ModelParams p = reference_params();
  CHECK_NOTHROW(p.validate());
  p.omega_plus = 0.3;
  CHECK_THROWS_AS(p.validate(), ConfigError);  // bound 1/4
  p = reference_params();
  p.omega_minus = 0.2;
  p.omega_plus = 0.15;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = reference_params();
  p.gamma = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = reference_params();
  p.density.kind = DensityKind::PolynomialThin;
  p.density.kappa = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("derived constants at the reference parameters") {
  const DerivedConstants c = derived_constants(reference_params());
  CHECK(c.alpha_epsilon == doctest::Approx(7.5).epsilon(1e-14));
  CHECK(c.s0 == doctest::Approx(0.0625).epsilon(1e-14));
  CHECK(c.layer_thickness == doctest::Approx(0.015625).epsilon(1e-14));
  CHECK(c.lipschitz_bound == doctest::Approx(64.0).epsilon(1e-14));
}

TEST_CASE("sampled radii stay in the density support") {
  ModelParams p = reference_params();
  const RadiiField f = sample_radii(p, Box{{0, 0, 0}, 2.0}, 7);
  CHECK(f.cell_count() == 64);
  for (double v : f.values) {
    CHECK(v >= p.omega_minus);
    CHECK(v <= p.omega_plus);
  }
}

TEST_CASE("sampling is a pure function of (seed, index, params)") {
  const ModelParams p = reference_params();
  const RadiiField a = sample_radii(p, Box{{0, 0, 0}, 1.0}, 123, 5);
  const RadiiField b = sample_radii(p, Box{{0, 0, 0}, 1.0}, 123, 5);
  CHECK(a.values == b.values);
  const RadiiField c = sample_radii(p, Box{{0, 0, 0}, 1.0}, 123, 6);
  CHECK(a.values != c.values);
  // enlarging the window leaves existing cells' draws unchanged
  const RadiiField wide = sample_radii(p, Box{{0, 0, 0}, 2.0}, 123, 5);
  for (std::size_t i = 0; i < a.cell_count(); ++i) {
    const CellIndex z = a.nth_cell(i);
    CHECK(wide.value(z) == a.values[i]);
  }
}

TEST_CASE("non-integer L/epsilon is rejected") {
  CHECK_THROWS_AS(sample_radii(reference_params(), Box{{0, 0, 0}, 1.1}, 1), ConfigError);
}

TEST_CASE("polynomial-thin tail mass matches its closed form by Monte Carlo") {
  ModelParams p = reference_params();
  p.omega_minus = 0.1;
  p.omega_plus = 0.2;
  p.density.kind = DensityKind::PolynomialThin;
  p.density.kappa = 2.0;
  const double s = 0.05;
  // closed-form CDF: mu([omega_plus - s, omega_plus]) = (s / 0.1)^2 = 0.25
  const double expected = density_tail_mass(p, s);
  CHECK(expected == doctest::Approx(0.25).epsilon(1e-12));
  const int n = 100000;
  int hits = 0;
  // one-cell boxes across many realizations = i.i.d. draws
  for (int i = 0; i < n; ++i) {
    const RadiiField f = sample_radii(p, Box{{0, 0, 0}, 0.25}, 99, static_cast<std::uint64_t>(i));
    if (f.values[0] >= p.omega_plus - s) ++hits;
  }
  const double sigma = std::sqrt(expected * (1 - expected) / n);
  CHECK(std::abs(static_cast<double>(hits) / n - expected) < 3 * sigma);
}

TEST_CASE("coefficient branches at the reference cell") {
  // eps = 1/4, gamma = 2, omega_z = 0.2, cell centre c
  ModelParams p = reference_params();
  p.omega_plus = 0.22;  // admit the 0.2 radius used by the reference values
  const RadiiField f = constant_field(p, 0.25, 0.2);
  const Point center{0.125, 0.125, 0};
  auto at_radius = [&](double r) {
    return eval_coefficient(p, f, Point{center[0] + r, center[1], 0});
  };
  CHECK(at_radius(0.02) == doctest::Approx(0.0625).epsilon(1e-14));        // inclusion
  CHECK(at_radius(0.0578125) == doctest::Approx(0.53125).epsilon(1e-14));  // mid-layer
  CHECK(at_radius(0.07) == doctest::Approx(1.0).epsilon(1e-14));           // matrix
  // sharp coefficient: layer counts as matrix
  CHECK(eval_sharp_coefficient(p, f, Point{center[0] + 0.02, center[1], 0}) ==
        doctest::Approx(0.0625));
  CHECK(eval_sharp_coefficient(p, f, Point{center[0] + 0.0578125, center[1], 0}) == 1.0);
  CHECK(eval_sharp_coefficient(p, f, Point{center[0] + 0.07, center[1], 0}) == 1.0);
}

TEST_CASE("coefficient is continuous across branch boundaries") {
  const ModelParams p = reference_params();
  const RadiiField f = sample_radii(p, Box{{0, 0, 0}, 1.0}, 3);
  const CellIndex z{1, 2, 0};
  const double r_in = p.epsilon * f.value(z);
  const double r_out = r_in + p.layer_thickness();
  const Point center{p.epsilon * 1 + 0.125, p.epsilon * 2 + 0.125, 0};
  for (double r : {r_in, r_out}) {
    const double below = eval_coefficient(p, f, Point{center[0] + r - 1e-9, center[1], 0});
    const double above = eval_coefficient(p, f, Point{center[0] + r + 1e-9, center[1], 0});
    CHECK(std::abs(below - above) < 1e-6);
  }
}

TEST_CASE("out-of-window evaluation is an error") {
  const ModelParams p = reference_params();
  const RadiiField f = sample_radii(p, Box{{0, 0, 0}, 1.0}, 3);
  CHECK_THROWS_AS(eval_coefficient(p, f, Point{1.5, 0.5, 0}), OutOfWindowError);
  CHECK_THROWS_AS(eval_coefficient(p, f, Point{-0.1, 0.5, 0}), OutOfWindowError);
  // the closed box boundary is still covered
  CHECK(eval_coefficient(p, f, Point{1.0, 0.5, 0}) == doctest::Approx(1.0));
}

TEST_CASE("shift_radii bounds") {
  ModelParams p = reference_params();
  const RadiiField f = sample_radii(p, Box{{0, 0, 0}, 1.0}, 11);
  // s = 0 is the identity
  const RadiiField same = shift_radii(p, f, 0.0);
  CHECK(same.values == f.values);
  // s0 = eps^(gamma-1)/4 = 1/16; omega_minus - s0 = 0.0375 > 0, accepted
  const double s0 = derived_constants(p).s0;
  const RadiiField down = shift_radii(p, f, -s0);
  CHECK(down.min_value() > 0.0);
  CHECK(down.values[0] == doctest::Approx(f.values[0] - s0));
  // +0.2 from omega_plus <= 0.18 exceeds 1/4: rejected
  CHECK_THROWS_AS(shift_radii(p, f, 0.2), RejectedShiftError);
  // pushing any radius to zero or below is rejected
  CHECK_THROWS_AS(shift_radii(p, f, -0.11), RejectedShiftError);
}

TEST_CASE("pointwise antitonicity and sharp squeeze") {
  const ModelParams p = reference_params();
  const RadiiField f = sample_radii(p, Box{{0, 0, 0}, 1.0}, 21);
  const double s0 = derived_constants(p).s0;
  const RadiiField grown = shift_radii(p, f, s0 / 2);
  // radii grown by exactly s0 move the sharp interface to the outer layer
  // boundary, which is what the two-sided squeeze needs
  const RadiiField grown_s0 = shift_radii(p, f, s0);
  rng::Stream stream(5);
  for (int i = 0; i < 20000; ++i) {
    const Point x{stream.next_unit(), stream.next_unit(), 0};
    const double a = eval_coefficient(p, f, x);
    const double a_grown = eval_coefficient(p, grown, x);
    CHECK(a_grown <= a + 1e-15);  // antitone in the radii
    const double hat = eval_sharp_coefficient(p, f, x);
    const double hat_grown = eval_sharp_coefficient(p, grown_s0, x);
    CHECK(hat_grown <= a + 1e-15);
    CHECK(a <= hat + 1e-15);
  }
}

TEST_CASE("pointwise bounds and Lipschitz constant over random probes") {
  const ModelParams p = reference_params();
  const DerivedConstants dc = derived_constants(p);
  for (std::uint64_t seed : {1ULL, 2ULL}) {
    const RadiiField f = sample_radii(p, Box{{0, 0, 0}, 1.0}, seed);
    rng::Stream stream(seed + 100);
    for (int i = 0; i < 10000; ++i) {
      const Point x{stream.next_unit(), stream.next_unit(), 0};
      const double a = eval_coefficient(p, f, x);
      CHECK(a >= p.epsilon * p.epsilon - 1e-15);
      CHECK(a <= 1.0 + 1e-15);
      // close pair within eps^gamma/40
      Point y = x;
      const double radius = dc.layer_thickness / 10.0 * stream.next_unit();
      const double angle = 6.283185307179586 * stream.next_unit();
      y[0] = std::clamp(x[0] + radius * std::cos(angle), 0.0, 1.0);
      y[1] = std::clamp(x[1] + radius * std::sin(angle), 0.0, 1.0);
      const double dist = std::hypot(y[0] - x[0], y[1] - x[1]);
      if (dist < 1e-12) continue;
      const double b = eval_coefficient(p, f, y);
      CHECK(std::abs(a - b) / dist <= dc.lipschitz_bound + 1e-12);
    }
  }
}

TEST_CASE("witness balls stay inside their cells") {
  for (double eps : {0.25, 0.5, 0.95}) {
    ModelParams p = reference_params();
    p.epsilon = eps;
    p.omega_plus = 0.2499;
    p.omega_minus = 0.1;
    const RadiiField f = sample_radii(p, Box{{0, 0, 0}, 4 * eps}, 17);
    const WitnessSet w = witness_points(p, f);
    const double ball = std::pow(eps, p.gamma) / 10.0;
    for (std::size_t i = 0; i < w.points.size(); ++i) {
      const CellIndex z = w.cells[i];
      for (int axis = 0; axis < p.d; ++axis) {
        const double lo = eps * static_cast<double>(z[axis]);
        CHECK(w.points[i][axis] - ball > lo);
        CHECK(w.points[i][axis] + ball < lo + eps);
      }
    }
  }
}

TEST_CASE("witness inequality holds on the whole ball for s up to s0") {
  const ModelParams p = reference_params();
  const DerivedConstants dc = derived_constants(p);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RadiiField f = sample_radii(p, Box{{0, 0, 0}, 1.0}, seed);
    const WitnessSet w = witness_points(p, f);
    for (double s : {dc.s0 / 4, dc.s0 / 2, dc.s0}) {
      const RadiiField grown = shift_radii(p, f, s);
      const double ball = w.ball_radius_factor * s;
      rng::Stream stream(rng::mix({seed, 55}));
      for (std::size_t i = 0; i < w.points.size(); ++i) {
        for (int probe = 0; probe < 100; ++probe) {
          // direct evaluation of both coefficient fields at sampled points
          const double radius = ball * std::sqrt(stream.next_unit());
          const double angle = 6.283185307179586 * stream.next_unit();
          const Point y{w.points[i][0] + radius * std::cos(angle),
                        w.points[i][1] + radius * std::sin(angle), 0};
          const double diff = eval_coefficient(p, f, y) - eval_coefficient(p, grown, y);
          CHECK(diff >= w.lower_bound_rate * s - 1e-12);
        }
      }
    }
    // s = 0: difference bound 0 >= 0
    const WitnessSet w0 = witness_points(p, f);
    CHECK(w0.lower_bound_rate * 0.0 == 0.0);
  }
}
