#pragma once

#include <Eigen/Dense>

#include "hclab/grid.hpp"

namespace hclab {

// Dense LAPACK-backed reference path, independent of the sparse engine.
// Used by `selftest`, by the drivers' --oracle-dense mode, and by tests.
namespace oracle {

inline constexpr Eigen::Index kMaxDenseNodes = 12 * 12 * 12;

Eigen::VectorXd eigenvalues(const SparseSymmetricOperator& op);

Eigen::Index count_in_window(const SparseSymmetricOperator& op, double a, double b);

// largest singular value of the masked resolvent block
double resolvent_block_norm(const SparseSymmetricOperator& op, double energy,
                            const IndexMask& rows, const IndexMask& cols);

// exp(-i t A) psi via full eigendecomposition
Eigen::VectorXcd evolve(const SparseSymmetricOperator& op, const Eigen::VectorXcd& state,
                        double t);

}  // namespace oracle

}  // namespace hclab
