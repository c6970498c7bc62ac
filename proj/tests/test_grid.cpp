#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "hclab/dense_oracle.hpp"
#include "hclab/grid.hpp"
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

}  // namespace

TEST_CASE("grid node counts") {
  CHECK(build_grid(Box{{0, 0, 0}, 1.0}, 0.25, 1).n() == 3);
  CHECK(build_grid(Box{{0, 0, 0}, 1.0}, 0.25, 2).n() == 9);
  CHECK(build_grid(Box{{0, 0, 0}, 1.0}, 1.0 / 3.0, 1).per_axis == 2);
  CHECK_THROWS_AS(build_grid(Box{{0, 0, 0}, 1.0}, 0.3, 2), ConfigError);
}

TEST_CASE("unit-coefficient stencil is the classic Dirichlet Laplacian") {
  const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, 0.25, 1);
  const auto op = assemble_operator(g, [](const Point&) { return 1.0; });
  // rows 16*[2, -1]: diagonal 2/h^2 = 32, off-diagonal -1/h^2 = -16
  CHECK(op.mat.coeff(0, 0) == doctest::Approx(32.0));
  CHECK(op.mat.coeff(0, 1) == doctest::Approx(-16.0));
  CHECK(op.mat.coeff(1, 0) == doctest::Approx(-16.0));
  CHECK(op.mat.coeff(0, 2) == 0.0);
  const Eigen::VectorXd eigs = oracle::eigenvalues(op);
  CHECK(eigs[0] == doctest::Approx(32.0 - 16.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(eigs[1] == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(eigs[2] == doctest::Approx(32.0 + 16.0 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("constant coefficient scales the operator linearly") {
  const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, 0.125, 2);
  const double eps2 = 0.0625;
  const auto unit = assemble_operator(g, [](const Point&) { return 1.0; });
  const auto scaled = assemble_operator(g, [&](const Point&) { return eps2; });
  const SpMat diff = (scaled.mat - eps2 * unit.mat).pruned(1e-300);
  CHECK(diff.nonZeros() == 0);
}

TEST_CASE("assembled matrices are exactly symmetric M-matrices") {
  const ModelParams p = reference_params();
  const RadiiField radii = sample_radii(p, Box{{0, 0, 0}, 1.0}, 5);
  const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, 1.0 / 16.0, 2);
  const auto op =
      assemble_operator(g, [&](const Point& x) { return eval_coefficient(p, radii, x); });
  SpMat tr = SpMat(op.mat.transpose());
  const SpMat asym = (op.mat - tr).pruned(1e-300);
  CHECK(asym.nonZeros() == 0);  // max |A_ij - A_ji| = 0 exactly
  for (int k = 0; k < op.mat.outerSize(); ++k) {
    double diag = 0, off = 0;
    for (SpMat::InnerIterator it(op.mat, k); it; ++it) {
      if (it.row() == it.col())
        diag = it.value();
      else {
        off += std::abs(it.value());
        CHECK(it.value() < 0.0);
      }
    }
    CHECK(diag > 0.0);
    CHECK(off <= diag + 1e-12);
  }
}

TEST_CASE("eigenvalue monotonicity under pointwise coefficient ordering") {
  // discrete min-max: a <= b pointwise implies lambda_k(A(a)) <= lambda_k(A(b))
  const ModelParams p = reference_params();
  const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, 1.0 / 12.0, 2);
  const RadiiField radii = sample_radii(p, Box{{0, 0, 0}, 1.0}, 9);
  const auto mid =
      assemble_operator(g, [&](const Point& x) { return eval_coefficient(p, radii, x); });
  const auto upper =
      assemble_operator(g, [&](const Point& x) { return eval_sharp_coefficient(p, radii, x); });
  const RadiiField grown = shift_radii(p, radii, derived_constants(p).s0);
  const auto lower =
      assemble_operator(g, [&](const Point& x) { return eval_sharp_coefficient(p, grown, x); });
  const Eigen::VectorXd e_mid = oracle::eigenvalues(mid);
  const Eigen::VectorXd e_upper = oracle::eigenvalues(upper);
  const Eigen::VectorXd e_lower = oracle::eigenvalues(lower);
  for (Eigen::Index k = 0; k < e_mid.size(); ++k) {
    CHECK(e_lower[k] <= e_mid[k] + 1e-9);
    CHECK(e_mid[k] <= e_upper[k] + 1e-9);
  }
}

TEST_CASE("h-refinement converges to the continuum spectrum at order two") {
  // |lambda_k(h) - pi^2 |k|^2| = O(h^2) for the unit coefficient
  for (int d : {1, 2}) {
    const double target = d == 1 ? M_PI * M_PI : 2.0 * M_PI * M_PI;  // k = (1,..,1), L = 1
    std::vector<double> errors;
    for (double h : {0.125, 0.0625, 0.03125}) {
      const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, h, d);
      const auto op = assemble_operator(g, [](const Point&) { return 1.0; });
      errors.push_back(std::abs(oracle::eigenvalues(op)[0] - target));
    }
    for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
      const double order = std::log2(errors[i] / errors[i + 1]);
      CHECK(order >= 1.8);
    }
  }
}

TEST_CASE("gershgorin encloses the dense spectrum") {
  const ModelParams p = reference_params();
  const RadiiField radii = sample_radii(p, Box{{0, 0, 0}, 1.0}, 2);
  const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, 1.0 / 12.0, 2);
  const auto op =
      assemble_operator(g, [&](const Point& x) { return eval_coefficient(p, radii, x); });
  const Eigen::VectorXd eigs = oracle::eigenvalues(op);
  double max_diag = 0;
  for (int k = 0; k < op.mat.outerSize(); ++k) max_diag = std::max(max_diag, op.mat.coeff(k, k));
  CHECK(eigs[0] >= 0.0);
  CHECK(eigs[eigs.size() - 1] <= 2.0 * max_diag + 1e-9);
}

TEST_CASE("belt mask and its complement partition the interior nodes") {
  const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, 1.0 / 16.0, 2);
  const IndexMask belt = mask_for_region(g, Region::belt(0.25));
  std::set<int> belt_set(belt.indices.begin(), belt.indices.end());
  // complement = nodes strictly inside the inner box or outside the outer ring
  int complement = 0;
  for (Eigen::Index i = 0; i < g.n(); ++i)
    if (!belt_set.count(static_cast<int>(i))) ++complement;
  CHECK(belt_set.size() + static_cast<std::size_t>(complement) ==
        static_cast<std::size_t>(g.n()));
  CHECK(!belt.indices.empty());
}

TEST_CASE("open unit box at the corner holds every interior node") {
  const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, 0.125, 2);
  const IndexMask all = mask_for_region(g, Region::open_box(Point{0, 0, 0}, 1.0));
  CHECK(all.indices.size() == static_cast<std::size_t>(g.n()));
}

TEST_CASE("cell masks at h = eps/2 hold exactly one node per cell") {
  const double eps = 0.25;
  const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, eps / 2.0, 2);
  for (int cx = 0; cx < 4; ++cx)
    for (int cy = 0; cy < 4; ++cy) {
      const Point corner{eps * cx, eps * cy, 0};
      const IndexMask m = mask_for_region(g, Region::open_box(corner, eps));
      CHECK(m.indices.size() == 1);
      const Point node = g.node(m.indices[0]);
      CHECK(node[0] == doctest::Approx(corner[0] + eps / 2));
      CHECK(node[1] == doctest::Approx(corner[1] + eps / 2));
    }
}

TEST_CASE("empty masks raise an explicit error") {
  const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, 0.25, 2);
  CHECK_THROWS_AS(mask_for_region(g, Region::open_box(Point{0, 0, 0}, 0.2)), EmptyMaskError);
}

TEST_CASE("matrix market dump round-trips through a reader") {
  const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, 0.25, 2);
  const auto op = assemble_operator(g, [](const Point&) { return 1.0; });
  const std::string path = "mm_dump_test.mtx";
  write_matrix_market(op, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "%%MatrixMarket matrix coordinate real symmetric");
  Eigen::Index rows, cols, nnz;
  in >> rows >> cols >> nnz;
  CHECK(rows == op.mat.rows());
  CHECK(cols == op.mat.cols());
  double max_err = 0;
  for (Eigen::Index e = 0; e < nnz; ++e) {
    Eigen::Index i, j;
    double v;
    in >> i >> j >> v;
    max_err = std::max(max_err, std::abs(op.mat.coeff(i - 1, j - 1) - v));
  }
  CHECK(max_err == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("harmonic face rule stays within the coefficient bounds") {
  const ModelParams p = reference_params();
  const RadiiField radii = sample_radii(p, Box{{0, 0, 0}, 1.0}, 4);
  const Grid g = build_grid(Box{{0, 0, 0}, 1.0}, 1.0 / 16.0, 2);
  const auto op = assemble_operator(
      g, [&](const Point& x) { return eval_sharp_coefficient(p, radii, x); },
      FaceRule::HarmonicNodes);
  const double h2 = g.h * g.h;
  for (int k = 0; k < op.mat.outerSize(); ++k)
    for (SpMat::InnerIterator it(op.mat, k); it; ++it)
      if (it.row() != it.col()) {
        CHECK(-it.value() * h2 >= p.epsilon * p.epsilon - 1e-12);
        CHECK(-it.value() * h2 <= 1.0 + 1e-12);
      }
}
