#include "hclab/grid.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hclab {

Eigen::Index Grid::n() const {
  Eigen::Index n = 1;
  for (int a = 0; a < d; ++a) n *= per_axis;
  return n;
}

Point Grid::node(Eigen::Index i) const {
  Point x{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    const auto k = i % per_axis;
    i /= per_axis;
    x[a] = origin[a] + h * static_cast<double>(k + 1);
  }
  return x;
}

Eigen::Index Grid::flat(int ix, int iy, int iz) const {
  Eigen::Index i = ix;
  if (d >= 2) i += static_cast<Eigen::Index>(per_axis) * iy;
  if (d >= 3) i += static_cast<Eigen::Index>(per_axis) * per_axis * iz;
  return i;
}

Grid build_grid(const Box& box, double h, int d) {
  if (!(h > 0)) throw ConfigError("grid spacing h must be positive");
  const double t = box.side / h;
  const double r = std::round(t);
  if (std::abs(t - r) > 1e-9 * std::max(1.0, t))
    throw ConfigError("L/h must be an integer (got side " + std::to_string(box.side) +
                      ", h " + std::to_string(h) + ")");
  const auto steps = static_cast<int>(r);
  if (steps < 2) throw ConfigError("grid needs at least one interior node (L/h >= 2)");
  Grid g;
  g.d = d;
  g.origin = box.origin;
  g.side = box.side;
  g.h = box.side / static_cast<double>(steps);  // exact relation, avoids drift
  g.per_axis = steps - 1;
  return g;
}

bool layer_resolved(const ModelParams& p, double h) {
  return h <= std::pow(p.epsilon, p.gamma) / 8.0 + 1e-15;
}

SparseSymmetricOperator assemble_operator(const Grid& grid, const CoefficientFn& a,
                                          FaceRule rule) {
  const double h = grid.h;
  const double inv_h2 = 1.0 / (h * h);
  const Eigen::Index n = grid.n();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * (2 * grid.d + 1));
  std::vector<double> diag(static_cast<std::size_t>(n), 0.0);

  auto face_value = [&](const Point& lo_node, int axis) {
    // face between lo_node and its +axis neighbor
    if (rule == FaceRule::Midpoint) {
      Point m = lo_node;
      m[axis] += 0.5 * h;
      return a(m);
    }
    Point hi_node = lo_node;
    hi_node[axis] += h;
    const double va = a(lo_node), vb = a(hi_node);
    return 2.0 * va * vb / (va + vb);
  };

  const int nx = grid.per_axis;
  const int ny = grid.d >= 2 ? grid.per_axis : 1;
  const int nz = grid.d >= 3 ? grid.per_axis : 1;
  for (int iz = 0; iz < nz; ++iz)
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) {
        const Eigen::Index i = grid.flat(ix, iy, iz);
        const Point xi = grid.node(i);
        const int idx[3] = {ix, iy, iz};
        for (int axis = 0; axis < grid.d; ++axis) {
          // +axis face: shared with the neighbor, handled once here
          const double w_hi = face_value(xi, axis) * inv_h2;
          diag[static_cast<std::size_t>(i)] += w_hi;
          if (idx[axis] + 1 < grid.per_axis) {
            Eigen::Index j = i;
            j += (axis == 0) ? 1
                             : (axis == 1 ? grid.per_axis
                                          : static_cast<Eigen::Index>(grid.per_axis) * grid.per_axis);
            diag[static_cast<std::size_t>(j)] += w_hi;
            trip.emplace_back(static_cast<int>(i), static_cast<int>(j), -w_hi);
            trip.emplace_back(static_cast<int>(j), static_cast<int>(i), -w_hi);
          }
          // -axis face only when it touches the Dirichlet boundary
          if (idx[axis] == 0) {
            Point lo = xi;
            lo[axis] -= h;
            const double w_lo = face_value(lo, axis) * inv_h2;
            diag[static_cast<std::size_t>(i)] += w_lo;
          }
        }
      }
  for (Eigen::Index i = 0; i < n; ++i)
    trip.emplace_back(static_cast<int>(i), static_cast<int>(i), diag[static_cast<std::size_t>(i)]);

  SparseSymmetricOperator op;
  op.grid = grid;
  op.mat.resize(n, n);
  op.mat.setFromTriplets(trip.begin(), trip.end());
  op.mat.makeCompressed();
  double norm = 0.0;
  for (int k = 0; k < op.mat.outerSize(); ++k) {
    double row = 0.0;
    for (SpMat::InnerIterator it(op.mat, k); it; ++it) row += std::abs(it.value());
    norm = std::max(norm, row);  // symmetric: column sums equal row sums
  }
  op.norm_inf = norm;
  return op;
}

Region Region::belt(double eps) {
  Region r;
  r.kind = Kind::Belt;
  r.eps = eps;
  return r;
}

Region Region::center_fraction(double fraction) {
  Region r;
  r.kind = Kind::CenterFraction;
  r.side = fraction;
  return r;
}

Region Region::open_box(const Point& corner, double side) {
  Region r;
  r.kind = Kind::OpenBox;
  r.a = corner;
  r.side = side;
  return r;
}

Region Region::custom(const Point& lo, const Point& hi) {
  Region r;
  r.kind = Kind::Custom;
  r.a = lo;
  r.b = hi;
  return r;
}

std::string Region::tag() const {
  switch (kind) {
    case Kind::Belt: return "belt";
    case Kind::CenterFraction: return "center_fraction";
    case Kind::OpenBox: return "open_box";
    case Kind::Custom: return "custom";
  }
  return "?";
}

namespace {

bool in_open_box(const Point& x, const Point& lo, double side, int d, double tol) {
  for (int a = 0; a < d; ++a)
    if (!(x[a] - lo[a] > tol && lo[a] + side - x[a] > tol)) return false;
  return true;
}

bool in_closed_box(const Point& x, const Point& lo, const Point& hi, int d, double tol) {
  for (int a = 0; a < d; ++a)
    if (x[a] < lo[a] - tol || x[a] > hi[a] + tol) return false;
  return true;
}

}  // namespace

IndexMask mask_for_region(const Grid& grid, const Region& region) {
  const double tol = 1e-9 * grid.h;
  IndexMask mask;
  mask.tag = region.tag();
  const Eigen::Index n = grid.n();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point x = grid.node(i);
    bool inside = false;
    switch (region.kind) {
      case Region::Kind::Belt: {
        // closure(Lambda_{L-eps}(x0+s_eps)) \ Lambda_{L-3eps}(x0+s_{3eps})
        const double eps = region.eps;
        Point outer_lo = grid.origin, inner_lo = grid.origin;
        Point outer_hi{}, inner_hi{};
        for (int a = 0; a < grid.d; ++a) {
          outer_lo[a] += 0.5 * eps;
          outer_hi[a] = grid.origin[a] + grid.side - 0.5 * eps;
          inner_lo[a] += 1.5 * eps;
          inner_hi[a] = grid.origin[a] + grid.side - 1.5 * eps;
        }
        const bool in_outer = in_closed_box(x, outer_lo, outer_hi, grid.d, tol);
        const bool in_inner =
            in_open_box(x, inner_lo, inner_hi[0] - inner_lo[0], grid.d, tol);
        inside = in_outer && !in_inner;
        break;
      }
      case Region::Kind::CenterFraction: {
        const double side = grid.side * region.side;
        Point lo = grid.origin;
        for (int a = 0; a < grid.d; ++a) lo[a] += 0.5 * (grid.side - side);
        inside = in_open_box(x, lo, side, grid.d, tol);
        break;
      }
      case Region::Kind::OpenBox:
        inside = in_open_box(x, region.a, region.side, grid.d, tol);
        break;
      case Region::Kind::Custom:
        inside = in_closed_box(x, region.a, region.b, grid.d, tol);
        break;
    }
    if (inside) mask.indices.push_back(static_cast<int>(i));
  }
  if (mask.indices.empty())
    throw EmptyMaskError("region '" + mask.tag + "' contains no interior node");
  return mask;
}

void write_matrix_market(const SparseSymmetricOperator& op, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  Eigen::Index nnz_lower = 0;
  for (int k = 0; k < op.mat.outerSize(); ++k)
    for (SpMat::InnerIterator it(op.mat, k); it; ++it)
      if (it.row() >= it.col()) ++nnz_lower;
  out << "%%MatrixMarket matrix coordinate real symmetric\n";
  out << op.mat.rows() << " " << op.mat.cols() << " " << nnz_lower << "\n";
  char buf[64];
  for (int k = 0; k < op.mat.outerSize(); ++k)
    for (SpMat::InnerIterator it(op.mat, k); it; ++it)
      if (it.row() >= it.col()) {
        std::snprintf(buf, sizeof buf, "%ld %ld %.17g\n", static_cast<long>(it.row() + 1),
                      static_cast<long>(it.col() + 1), it.value());
        out << buf;
      }
}

}  // namespace hclab
