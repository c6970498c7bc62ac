#pragma once

#include <Eigen/Sparse>
#include <functional>
#include <string>
#include <vector>

#include "hclab/medium.hpp"

namespace hclab {

using SpMat = Eigen::SparseMatrix<double>;

// Uniform tensor grid of interior nodes on the box origin + (0, side)^d,
// Dirichlet boundary, lexicographic ordering with axis 0 fastest.
struct Grid {
  int d = 2;
  Point origin{};
  double side = 1.0;
  double h = 0.125;
  int per_axis = 7;  // interior nodes per axis = side/h - 1

  Eigen::Index n() const;
  Point node(Eigen::Index i) const;
  Eigen::Index flat(int ix, int iy, int iz) const;
};

// throws ConfigError when side/h is not an integer or the grid is degenerate
Grid build_grid(const Box& box, double h, int d);

// resolution policy: h <= eps^gamma/8 (two nodes across the layer)
bool layer_resolved(const ModelParams& p, double h);

enum class FaceRule {
  Midpoint,       // coefficient sampled at the face midpoint
  HarmonicNodes,  // harmonic mean of nodal values (for the sharp coefficient)
};

struct SparseSymmetricOperator {
  SpMat mat;
  Grid grid;
  double norm_inf = 0.0;  // max absolute row sum, cached at assembly
};

using CoefficientFn = std::function<double(const Point&)>;

// Flux-form stencil: for each interior face, weight a(face)/h^2 added to
// both adjacent diagonals and -a(face)/h^2 to the off-diagonal pair; faces
// on the Dirichlet boundary contribute to the diagonal only. Each face is
// evaluated once, so the matrix is symmetric by construction.
SparseSymmetricOperator assemble_operator(const Grid& grid, const CoefficientFn& a,
                                          FaceRule rule = FaceRule::Midpoint);

// Geometric regions of interest. Box regions are open boxes x + (0,L)^d;
// the belt is closure(outer) \ open(inner); custom boxes are closed.
struct Region {
  enum class Kind { Belt, CenterFraction, OpenBox, Custom };
  Kind kind = Kind::Custom;
  Point a{};       // corner (OpenBox/Custom lo)
  Point b{};       // Custom hi
  double side = 0; // OpenBox side, CenterFraction fraction
  double eps = 0;  // Belt cell size

  static Region belt(double eps);
  static Region center_fraction(double fraction);
  static Region open_box(const Point& corner, double side);
  static Region custom(const Point& lo, const Point& hi);

  std::string tag() const;
};

struct IndexMask {
  std::vector<int> indices;  // sorted interior node indices
  std::string tag;
};

// throws EmptyMaskError when no node falls inside the region
IndexMask mask_for_region(const Grid& grid, const Region& region);

// Matrix Market coordinate format, symmetric lower triangle.
void write_matrix_market(const SparseSymmetricOperator& op, const std::string& path);

}  // namespace hclab
