#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hclab/report.hpp"
#include "hclab/spectral.hpp"

namespace hclab {

// --------------------------------------------------------------------------
// harness: realization-parallel helpers shared by the nine drivers
// --------------------------------------------------------------------------

// runs body(0..count-1) on a bounded worker pool; rethrows the exception of
// the lowest failing index so failures are deterministic
void parallel_for(int count, int workers, const std::function<void(int)>& body);

int resolve_workers(int configured);

RadiiField field_for(const ExperimentConfig& cfg, double box_side, std::uint64_t realization);

// grid + coefficient for one realization; enforces the resolution policy
// unless grid.allow_underresolved is set
SparseSymmetricOperator build_box_operator(const ExperimentConfig& cfg, double box_side,
                                           CoefficientKind kind, const RadiiField& radii);

Grid grid_for(const ExperimentConfig& cfg, double box_side);

// Exact discrete Weyl-type ceiling: the number of analytic eigenvalues of
// eps^2 times the discrete Dirichlet Laplacian that are <= energy. The
// assembled operator can never have more eigenvalues below `energy`
// (min-max with a >= eps^2), so exceeding it aborts with diagnostics.
Eigen::Index weyl_ceiling(const ExperimentConfig& cfg, const Grid& grid, double energy);

// count + guardrail + optional dense-oracle equality check
Eigen::Index guarded_window_count(const ExperimentConfig& cfg,
                                  const SparseSymmetricOperator& op, double a, double b);

SolverOptions solver_options(const ExperimentConfig& cfg);

// --------------------------------------------------------------------------
// drivers
// --------------------------------------------------------------------------

ExperimentReport run_gap_scan(const RunManifest& manifest);
ExperimentReport run_squeeze(const RunManifest& manifest);
ExperimentReport run_lifting(const RunManifest& manifest);
ExperimentReport run_wegner(const RunManifest& manifest);
ExperimentReport run_ise(const RunManifest& manifest);
ExperimentReport run_combes_thomas(const RunManifest& manifest);
ExperimentReport run_suitability(const RunManifest& manifest);
ExperimentReport run_projector_decay(const RunManifest& manifest);
ExperimentReport run_dynamics(const RunManifest& manifest);

// dense-oracle self test on small grids; prints one line per check,
// returns 0 when green and 2 otherwise
int run_selftest();

const std::vector<std::string>& driver_names();
bool is_driver(const std::string& name);

// dispatch by subcommand name; throws ConfigError for unknown names
ExperimentReport run_driver(const std::string& name, const RunManifest& manifest);

}  // namespace hclab
