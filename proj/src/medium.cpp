#include "hclab/medium.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hclab/rng.hpp"

namespace hclab {

namespace {

double sq(double x) { return x * x; }

// squared distance from x to the center of cell z (center = eps*z + s_eps)
double dist_to_center(const ModelParams& p, const CellIndex& z, const Point& x, int d) {
  double r2 = 0;
  for (int a = 0; a < d; ++a) {
    const double c = p.epsilon * static_cast<double>(z[a]) + 0.5 * p.epsilon;
    r2 += sq(x[a] - c);
  }
  return std::sqrt(r2);
}

}  // namespace

void ModelParams::validate() const {
  std::ostringstream err;
  if (d != 2 && d != 3)
    err << "model.d must be 2 or 3 (got " << d << ")";
  else if (!(epsilon > 0.0 && epsilon < 1.0))
    err << "model.epsilon must lie in (0,1) (got " << epsilon << ")";
  else if (!(gamma >= 2.0))
    err << "model.gamma must be >= 2 (got " << gamma << ")";
  else if (!(omega_minus > 0.0 && omega_minus < omega_plus && omega_plus < 0.25))
    err << "radius bounds must satisfy 0 < omega_minus < omega_plus < 1/4 (got "
        << omega_minus << ", " << omega_plus << ")";
  else if (!(epsilon * omega_plus + layer_thickness() < 0.5 * epsilon))
    err << "containment violated: eps*omega_plus + eps^gamma/4 must be < eps/2";
  else if (density.kind == DensityKind::PolynomialThin && !(density.kappa > 0.0))
    err << "model.density.kappa must be > 0 (got " << density.kappa << ")";
  else
    return;
  throw ConfigError(err.str());
}

double ModelParams::layer_thickness() const { return std::pow(epsilon, gamma) / 4.0; }

DerivedConstants derived_constants(const ModelParams& p) {
  DerivedConstants c;
  c.alpha_epsilon = 2.0 * (1.0 - sq(p.epsilon)) / std::pow(p.epsilon, p.gamma - 1.0);
  c.s0 = std::pow(p.epsilon, p.gamma - 1.0) / 4.0;
  c.layer_thickness = p.layer_thickness();
  c.lipschitz_bound = 4.0 / std::pow(p.epsilon, p.gamma);
  return c;
}

std::size_t RadiiField::cell_count() const {
  std::size_t n = 1;
  for (int a = 0; a < d; ++a) n *= static_cast<std::size_t>(cells[a]);
  return n;
}

bool RadiiField::contains(const CellIndex& z) const {
  for (int a = 0; a < d; ++a)
    if (z[a] < cell_lo[a] || z[a] >= cell_lo[a] + cells[a]) return false;
  return true;
}

std::size_t RadiiField::flat_index(const CellIndex& z) const {
  std::size_t idx = 0, stride = 1;
  for (int a = 0; a < d; ++a) {
    idx += static_cast<std::size_t>(z[a] - cell_lo[a]) * stride;
    stride *= static_cast<std::size_t>(cells[a]);
  }
  return idx;
}

double RadiiField::value(const CellIndex& z) const { return values[flat_index(z)]; }

CellIndex RadiiField::nth_cell(std::size_t flat) const {
  CellIndex z{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    z[a] = cell_lo[a] + static_cast<std::int64_t>(flat % static_cast<std::size_t>(cells[a]));
    flat /= static_cast<std::size_t>(cells[a]);
  }
  return z;
}

double RadiiField::max_value() const { return *std::max_element(values.begin(), values.end()); }
double RadiiField::min_value() const { return *std::min_element(values.begin(), values.end()); }

namespace {

double inverse_cdf(const ModelParams& p, double u) {
  const double lo = p.omega_minus, hi = p.omega_plus;
  switch (p.density.kind) {
    case DensityKind::Uniform:
      return lo + u * (hi - lo);
    case DensityKind::PolynomialThin:
      // density ~ (omega_plus - x)^(kappa-1); exact inverse, no rejection
      return hi - (hi - lo) * std::pow(1.0 - u, 1.0 / p.density.kappa);
  }
  return lo;
}

std::int64_t to_lattice(double coord, double eps, const char* what) {
  const double t = coord / eps;
  const double r = std::round(t);
  if (std::abs(t - r) > 1e-9)
    throw ConfigError(std::string(what) + " must be an integer multiple of epsilon");
  return static_cast<std::int64_t>(r);
}

}  // namespace

RadiiField sample_radii(const ModelParams& p, const Box& box, std::uint64_t master_seed,
                        std::uint64_t realization) {
  p.validate();
  RadiiField f;
  f.d = p.d;
  f.master_seed = master_seed;
  f.realization = realization;
  const std::int64_t n_cells = to_lattice(box.side, p.epsilon, "box side L");
  if (n_cells < 1) throw ConfigError("box side must be at least epsilon");
  for (int a = 0; a < p.d; ++a) {
    f.cell_lo[a] = to_lattice(box.origin[a], p.epsilon, "box origin");
    f.cells[a] = static_cast<int>(n_cells);
  }
  f.values.resize(f.cell_count());
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const CellIndex z = f.nth_cell(i);
    const std::uint64_t key = rng::mix({master_seed, realization, rng::zigzag(z[0]),
                                        rng::zigzag(z[1]), rng::zigzag(z[2])});
    f.values[i] = inverse_cdf(p, rng::unit_double(rng::splitmix64(key)));
  }
  return f;
}

double density_tail_mass(const ModelParams& p, double s) {
  if (s <= 0.0) return 0.0;
  const double span = p.omega_plus - p.omega_minus;
  if (s >= span) return 1.0;
  switch (p.density.kind) {
    case DensityKind::Uniform:
      return s / span;
    case DensityKind::PolynomialThin:
      return std::pow(s / span, p.density.kappa);
  }
  return 0.0;
}

namespace {

// locate the covering cell, tolerating points on the closed box boundary
CellIndex locate_cell(const ModelParams& p, const RadiiField& f, const Point& x) {
  CellIndex z{0, 0, 0};
  for (int a = 0; a < p.d; ++a) {
    const double t = x[a] / p.epsilon - static_cast<double>(f.cell_lo[a]);
    if (t < -1e-9 || t > static_cast<double>(f.cells[a]) + 1e-9) {
      std::ostringstream err;
      err << "point outside the sampled window (axis " << a << ", coordinate " << x[a] << ")";
      throw OutOfWindowError(err.str());
    }
    auto rel = static_cast<std::int64_t>(std::floor(t));
    rel = std::clamp<std::int64_t>(rel, 0, f.cells[a] - 1);
    z[a] = f.cell_lo[a] + rel;
  }
  return z;
}

}  // namespace

double eval_coefficient(const ModelParams& p, const RadiiField& radii, const Point& x) {
  const CellIndex z = locate_cell(p, radii, x);
  const double r = dist_to_center(p, z, x, p.d);
  const double r_in = p.epsilon * radii.value(z);
  const double layer = p.layer_thickness();
  const double r_out = r_in + layer;
  if (r <= r_in) return sq(p.epsilon);
  if (r >= r_out) return 1.0;
  // dist(x, matrix) = r_out - r inside the layer
  return 1.0 - (1.0 - sq(p.epsilon)) * (r_out - r) / layer;
}

double eval_sharp_coefficient(const ModelParams& p, const RadiiField& radii, const Point& x) {
  const CellIndex z = locate_cell(p, radii, x);
  const double r = dist_to_center(p, z, x, p.d);
  return r <= p.epsilon * radii.value(z) ? sq(p.epsilon) : 1.0;
}

RadiiField shift_radii(const ModelParams& p, const RadiiField& radii, double s) {
  const double containment_bound = 0.5 - std::pow(p.epsilon, p.gamma - 1.0) / 4.0;
  RadiiField out = radii;
  for (double& v : out.values) {
    const double w = v + s;
    if (!(w > 0.0 && w < 0.25)) {
      std::ostringstream err;
      err << "shift " << s << " pushes radius " << v << " to " << w << ", outside (0, 1/4)";
      throw RejectedShiftError(err.str());
    }
    if (!(w < containment_bound)) {
      std::ostringstream err;
      err << "shift " << s << " breaks containment: radius " << w << " >= " << containment_bound;
      throw RejectedShiftError(err.str());
    }
    v = w;
  }
  out.total_shift += s;
  return out;
}

WitnessSet witness_points(const ModelParams& p, const RadiiField& radii) {
  const DerivedConstants dc = derived_constants(p);
  const double eps_g = std::pow(p.epsilon, p.gamma);
  // Offset beyond the inclusion radius. (3/16) eps^gamma keeps the whole
  // witness ball inside the constant-difference plateau for all s <= s0;
  // the clamp keeps the equidistribution ball inside the cell for extreme
  // (epsilon, omega_z) combinations.
  const double c_lo = eps_g * (0.125 + std::pow(p.epsilon, p.gamma - 1.0) / 40.0);
  WitnessSet w;
  w.ball_radius_factor = eps_g / 10.0;
  w.lower_bound_rate = dc.alpha_epsilon;
  w.cells.reserve(radii.cell_count());
  w.points.reserve(radii.cell_count());
  for (std::size_t i = 0; i < radii.cell_count(); ++i) {
    const CellIndex z = radii.nth_cell(i);
    const double omega_z = radii.values[i];
    const double c_hi = std::min(
        eps_g / 4.0, 0.5 * p.epsilon - p.epsilon * omega_z - eps_g / 10.0 - 1e-9 * p.epsilon);
    const double offset = std::clamp(3.0 * eps_g / 16.0, c_lo, c_hi);
    Point pt{0, 0, 0};
    for (int a = 0; a < p.d; ++a)
      pt[a] = p.epsilon * static_cast<double>(z[a]) + 0.5 * p.epsilon;
    pt[0] += p.epsilon * omega_z + offset;
    w.cells.push_back(z);
    w.points.push_back(pt);
  }
  return w;
}

}  // namespace hclab
