#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "hclab/dense_oracle.hpp"
#include "hclab/experiments.hpp"

namespace hclab {

void parallel_for(int count, int workers, const std::function<void(int)>& body) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  int first_error_index = count;
  auto work = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

int resolve_workers(int configured) {
  if (configured > 0) return configured;
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::max(1u, std::min(hw, 4u)));
}

RadiiField field_for(const ExperimentConfig& cfg, double box_side, std::uint64_t realization) {
  return sample_radii(cfg.model, Box{{0, 0, 0}, box_side}, cfg.master_seed, realization);
}

Grid grid_for(const ExperimentConfig& cfg, double box_side) {
  return build_grid(Box{{0, 0, 0}, box_side}, cfg.resolved_h(), cfg.model.d);
}

SparseSymmetricOperator build_box_operator(const ExperimentConfig& cfg, double box_side,
                                           CoefficientKind kind, const RadiiField& radii) {
  const Grid grid = grid_for(cfg, box_side);
  if (kind != CoefficientKind::Unit && !layer_resolved(cfg.model, grid.h) &&
      !cfg.allow_underresolved)
    throw ConfigError("grid spacing " + std::to_string(grid.h) +
                      " does not resolve the boundary layer (need h <= eps^gamma/8 = " +
                      std::to_string(std::pow(cfg.model.epsilon, cfg.model.gamma) / 8.0) +
                      "); set grid.allow_underresolved = true to override");
  switch (kind) {
    case CoefficientKind::Unit:
      return assemble_operator(grid, [](const Point&) { return 1.0; });
    case CoefficientKind::Layered:
      return assemble_operator(
          grid, [&](const Point& x) { return eval_coefficient(cfg.model, radii, x); });
    case CoefficientKind::Sharp:
      return assemble_operator(
          grid, [&](const Point& x) { return eval_sharp_coefficient(cfg.model, radii, x); },
          cfg.sharp_harmonic ? FaceRule::HarmonicNodes : FaceRule::Midpoint);
  }
  throw ConfigError("unknown coefficient kind");
}

Eigen::Index weyl_ceiling(const ExperimentConfig& cfg, const Grid& grid, double energy) {
  // analytic spectrum of the discrete Dirichlet Laplacian on this grid,
  // scaled by eps^2 (the coefficient floor)
  const int n = grid.per_axis;
  const double h = grid.h;
  const double eps2 = cfg.model.epsilon * cfg.model.epsilon;
  std::vector<double> axis(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    const double s = std::sin(0.5 * M_PI * static_cast<double>(k) * h / grid.side);
    axis[static_cast<std::size_t>(k - 1)] = 4.0 / (h * h) * s * s;
  }
  Eigen::Index count = 0;
  if (grid.d == 1) {
    for (double v : axis)
      if (eps2 * v <= energy) ++count;
  } else if (grid.d == 2) {
    for (double vx : axis)
      for (double vy : axis)
        if (eps2 * (vx + vy) <= energy) ++count;
  } else {
    for (double vx : axis)
      for (double vy : axis) {
        if (eps2 * (vx + vy) > energy) continue;
        for (double vz : axis)
          if (eps2 * (vx + vy + vz) <= energy) ++count;
      }
  }
  return count;
}

Eigen::Index guarded_window_count(const ExperimentConfig& cfg,
                                  const SparseSymmetricOperator& op, double a, double b) {
  const Eigen::Index count = count_eigenvalues(op, a, b);
  const Eigen::Index ceiling = weyl_ceiling(cfg, op.grid, b);
  if (count_below(op, b).count > ceiling) {
    std::ostringstream err;
    err << "Weyl guardrail: " << count_below(op, b).count << " eigenvalues below " << b
        << " exceed the discrete ceiling " << ceiling << " (grid " << op.grid.per_axis << "^"
        << op.grid.d << ", h " << op.grid.h << ") -- assembly bug suspected";
    throw InvariantViolation(err.str());
  }
  if (cfg.oracle_dense) {
    if (op.grid.n() > oracle::kMaxDenseNodes)
      throw ConfigError("--oracle-dense requires grids of at most 12^d nodes");
    const Eigen::Index dense = oracle::count_in_window(op, a, b);
    if (dense != count) {
      std::ostringstream err;
      err << "oracle mismatch: inertia count " << count << " vs dense " << dense
          << " in window (" << a << ", " << b << "]";
      throw InvariantViolation(err.str());
    }
  }
  return count;
}

SolverOptions solver_options(const ExperimentConfig& cfg) {
  SolverOptions opts;
  opts.tol_eig = cfg.tol_eig;
  opts.max_pairs = cfg.max_pairs;
  return opts;
}

const std::vector<std::string>& driver_names() {
  static const std::vector<std::string> names = {
      "gap-scan",   "squeeze",     "lifting",         "wegner",   "ise",
      "combes-thomas", "suitability", "projector-decay", "dynamics"};
  return names;
}

bool is_driver(const std::string& name) {
  const auto& names = driver_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

ExperimentReport run_driver(const std::string& name, const RunManifest& manifest) {
  if (name == "gap-scan") return run_gap_scan(manifest);
  if (name == "squeeze") return run_squeeze(manifest);
  if (name == "lifting") return run_lifting(manifest);
  if (name == "wegner") return run_wegner(manifest);
  if (name == "ise") return run_ise(manifest);
  if (name == "combes-thomas") return run_combes_thomas(manifest);
  if (name == "suitability") return run_suitability(manifest);
  if (name == "projector-decay") return run_projector_decay(manifest);
  if (name == "dynamics") return run_dynamics(manifest);
  throw ConfigError("unknown subcommand '" + name + "'");
}

}  // namespace hclab
