#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hclab/errors.hpp"

namespace hclab {

// Points live in at most three dimensions; unused axes are zero.
using Point = std::array<double, 3>;
using CellIndex = std::array<std::int64_t, 3>;

enum class DensityKind { Uniform, PolynomialThin };

struct DensitySpec {
  DensityKind kind = DensityKind::Uniform;
  double kappa = 1.0;  // thinness exponent, PolynomialThin only
};

// Deterministic knobs of the random medium: cell size epsilon, layer
// exponent gamma (layer thickness eps^gamma/4), radius bounds as
// fractions of epsilon, and the radius distribution.
struct ModelParams {
  int d = 2;
  double epsilon = 0.25;
  double gamma = 2.0;
  double omega_minus = 0.10;
  double omega_plus = 0.18;
  DensitySpec density;

  // throws ConfigError on any violated invariant
  void validate() const;

  double layer_thickness() const;  // eps^gamma / 4
};

struct DerivedConstants {
  double alpha_epsilon;    // 2(1 - eps^2) / eps^(gamma-1)
  double s0;               // eps^(gamma-1) / 4
  double layer_thickness;  // eps^gamma / 4
  double lipschitz_bound;  // 4 / eps^gamma
};

DerivedConstants derived_constants(const ModelParams& p);

// Axis-aligned box x + (0, L)^d with x in eps*Z^d and L in eps*N.
struct Box {
  Point origin{};
  double side = 1.0;
};

// One realization: radii for every cell whose center lies in the box.
// Values are keyed by the absolute lattice index of the cell, so
// enlarging the window never changes existing draws.
struct RadiiField {
  int d = 2;
  CellIndex cell_lo{};          // lattice index of the lowest covered cell
  std::array<int, 3> cells{1, 1, 1};  // cells per axis
  std::vector<double> values;   // lex order, axis 0 fastest
  std::uint64_t master_seed = 0;
  std::uint64_t realization = 0;
  double total_shift = 0.0;     // net shift applied via shift_radii

  std::size_t cell_count() const;
  bool contains(const CellIndex& z) const;
  std::size_t flat_index(const CellIndex& z) const;
  double value(const CellIndex& z) const;
  CellIndex nth_cell(std::size_t flat) const;
  double max_value() const;
  double min_value() const;
};

// i.i.d. draws from the density via inverse CDF on a per-cell counter
// stream keyed by (master_seed, realization, cell index).
RadiiField sample_radii(const ModelParams& p, const Box& box, std::uint64_t master_seed,
                        std::uint64_t realization = 0);

// Tail mass mu([omega_plus - s, omega_plus]) in closed form.
double density_tail_mass(const ModelParams& p, double s);

// Exact three-branch coefficient: eps^2 in the inclusion, linear ramp in
// the layer, 1 in the matrix. Throws OutOfWindowError when x is not
// covered by the field.
double eval_coefficient(const ModelParams& p, const RadiiField& radii, const Point& x);

// Two-branch sharp coefficient (layer counts as matrix).
double eval_sharp_coefficient(const ModelParams& p, const RadiiField& radii, const Point& x);

// omega_z -> omega_z + s for every cell; rejects shifts leaving (0, 1/4)
// or breaking the containment invariant.
RadiiField shift_radii(const ModelParams& p, const RadiiField& radii, double s);

// Witness machinery: one point per cell inside the coefficient ramp such
// that a_omega - a_(omega+s e) >= alpha_eps * s on B_((eps^gamma/10) s)(x_z)
// for all 0 <= s <= s0, and B_(eps^gamma/10)(x_z) stays inside the cell.
struct WitnessSet {
  std::vector<CellIndex> cells;
  std::vector<Point> points;
  double ball_radius_factor;  // eps^gamma / 10; ball radius for shift s is factor*s
  double lower_bound_rate;    // alpha_eps;     bound for shift s is rate*s
};

WitnessSet witness_points(const ModelParams& p, const RadiiField& radii);

}  // namespace hclab
