#pragma once

#include <stdexcept>
#include <string>

namespace hclab {

// Configuration problems (bad keys, invariant violations in parameters,
// non-integer L/epsilon, ...). CLI maps these to exit status 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Run-time assertion failures (violated monotonicity, oracle mismatch, ...).
// CLI maps these to exit status 2.
struct InvariantViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Point queried outside the sampled radii window.
struct OutOfWindowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// shift_radii would push a radius outside (0, 1/4) or break containment.
struct RejectedShiftError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shift E too close to the spectrum for the factorization to resolve.
struct UnresolvedShiftError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Window eigensolve could not match the inertia certificate.
struct CertifiedFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Chebyshev propagation would need more terms than allowed.
struct DegreeOverflowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A region mask came out empty (degenerate geometry).
struct EmptyMaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hclab
