#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <complex>
#include <memory>
#include <mutex>

#include "hclab/grid.hpp"

namespace hclab {

struct Inertia {
  Eigen::Index n_minus = 0;
  Eigen::Index n_zero = 0;
  Eigen::Index n_plus = 0;
};

// relative pivot threshold below which a shift counts as unresolved
inline constexpr double kPivotRelTol = 1e-12;
// endpoint perturbation applied by the documented contract, relative to |A|_inf
inline constexpr double kShiftNudgeRel = 1e-9;

// LDL^T factorization of P (A - E I) P^T with fill-reducing (AMD) ordering.
// The inertia of the diagonal factor counts eigenvalues on either side of E
// (Sylvester). Immutable after construction; solves are safe concurrently.
class ShiftedFactorization {
 public:
  ShiftedFactorization(const SparseSymmetricOperator& op, double shift);

  double shift() const { return shift_; }
  const Inertia& inertia() const { return inertia_; }
  bool resolved() const { return resolved_; }
  double norm_inf() const { return norm_inf_; }
  // eigenvalues <= shift, valid only when resolved()
  Eigen::Index count_below() const { return inertia_.n_minus + inertia_.n_zero; }

  // relative residual <= 1e-10 after one refinement step, with an LU
  // (stronger pivoting) refactorization fallback
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

  // backward-stable triangular solve without the residual contract; for
  // inverse iteration at shifts deliberately close to an eigenvalue
  Eigen::VectorXd solve_unchecked(const Eigen::VectorXd& rhs) const;

 private:
  struct Impl;  // owns the non-movable Eigen solver state

  Eigen::VectorXd apply_shifted(const Eigen::VectorXd& x) const;

  SpMat matrix_;  // unshifted copy, kept for refinement residuals
  double shift_ = 0.0;
  double norm_inf_ = 0.0;
  Inertia inertia_;
  bool resolved_ = false;
  std::shared_ptr<Impl> impl_;
};

ShiftedFactorization factor(const SparseSymmetricOperator& op, double shift);

// Resolved cumulative count #{lambda <= E}, applying the +eta perturbation
// contract (up to 3 attempts) at unresolved shifts. Returns the count and
// the shift actually used.
struct ResolvedCount {
  Eigen::Index count = 0;
  double shift_used = 0.0;
};
ResolvedCount count_below(const SparseSymmetricOperator& op, double energy);

// eigenvalues in the half-open window (a, b]
Eigen::Index count_eigenvalues(const SparseSymmetricOperator& op, double a, double b);

struct EigenSet {
  double window_lo = 0.0;
  double window_hi = 0.0;
  Eigen::VectorXd values;     // sorted ascending
  Eigen::MatrixXd vectors;    // orthonormal columns matching values
  Eigen::VectorXd residuals;  // |A v - lambda v| per pair
  Eigen::Index certified_count = 0;  // inertia count of the window
};

struct SolverOptions {
  double tol_eig = 1e-12;   // residual tolerance relative to |A|_inf
  int max_pairs = 200;
  int max_restarts = 8;
  int max_iterations = 0;   // 0 = automatic
};

// Shift-invert Lanczos at the window midpoint with full reorthogonalization
// and deflation restarts; the returned multiplicity always equals the
// inertia count of the window (else CertifiedFailure).
EigenSet eigenpairs_in_window(const SparseSymmetricOperator& op, double a, double b,
                              const SolverOptions& opts = {});

// lowest k eigenpairs, certified against inertia at a spectral gap above
EigenSet lowest_eigenpairs(const SparseSymmetricOperator& op, int k,
                           const SolverOptions& opts = {});

// largest singular value of chi_rows (A - E)^{-1} chi_cols by power
// iteration on the normal operator with a deterministic seeded start.
double block_resolvent_norm(const SparseSymmetricOperator& op, double energy,
                            const IndexMask& rows, const IndexMask& cols,
                            double tol = 1e-6);

// Gershgorin enclosure [lo, hi] of the spectrum
std::pair<double, double> gershgorin_interval(const SparseSymmetricOperator& op);

// exp(-i t A) psi by Chebyshev expansion on the Gershgorin enclosure;
// terms truncated once the Bessel coefficients drop below tol.
Eigen::VectorXcd chebyshev_evolve(const SparseSymmetricOperator& op,
                                  const Eigen::VectorXcd& state, double t,
                                  double tol = 1e-10, int max_terms = 200000);

// CSV dump of a solved window: columns index, eigenvalue, residual
void write_spectrum_csv(const EigenSet& set, const std::string& path);

namespace detail {
// J_0..J_k by Miller downward recurrence (normalized via J_0 + 2 sum J_2m = 1)
std::vector<double> bessel_j_sequence(double x, int k_max);
}  // namespace detail

}  // namespace hclab
