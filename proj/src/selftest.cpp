#include <cmath>
#include <cstdio>
#include <functional>

#include "hclab/dense_oracle.hpp"
#include "hclab/experiments.hpp"
#include "hclab/rng.hpp"

namespace hclab {

namespace {

struct Checker {
  int failures = 0;
  void check(const char* name, const std::function<bool()>& body) {
    bool ok = false;
    std::string detail;
    try {
      ok = body();
    } catch (const std::exception& e) {
      detail = e.what();
    }
    if (ok) {
      std::printf("ok - %s\n", name);
    } else {
      ++failures;
      std::printf("FAIL - %s%s%s\n", name, detail.empty() ? "" : ": ", detail.c_str());
    }
  }
};

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.model.d = 2;
  cfg.model.epsilon = 0.25;
  cfg.model.gamma = 2.0;
  cfg.model.omega_minus = 0.1;
  cfg.model.omega_plus = 0.18;
  cfg.grid_h = 1.0 / 13.0;  // 12 interior nodes per axis
  cfg.allow_underresolved = true;
  cfg.master_seed = 424242;
  return cfg;
}

}  // namespace

int run_selftest() {
  Checker c;
  const ExperimentConfig cfg = small_config();

  c.check("coefficient bounds and Lipschitz probe", [&] {
    const RadiiField radii = field_for(cfg, 1.0, 0);
    const DerivedConstants dc = derived_constants(cfg.model);
    rng::Stream stream(7);
    for (int i = 0; i < 5000; ++i) {
      Point x{stream.next_unit(), stream.next_unit(), 0};
      const double a = eval_coefficient(cfg.model, radii, x);
      if (a < cfg.model.epsilon * cfg.model.epsilon - 1e-15 || a > 1.0 + 1e-15) return false;
      Point y = x;
      const double step = dc.layer_thickness / 10.0;
      y[0] = std::min(0.999, x[0] + step * stream.next_unit());
      const double b = eval_coefficient(cfg.model, radii, y);
      const double gap = std::abs(y[0] - x[0]);
      if (gap > 1e-12 && std::abs(a - b) / gap > dc.lipschitz_bound + 1e-12) return false;
    }
    return true;
  });

  c.check("inertia window counts equal dense counts", [&] {
    for (std::uint64_t r = 0; r < 5; ++r) {
      const RadiiField radii = field_for(cfg, 1.0, r);
      const SparseSymmetricOperator op =
          build_box_operator(cfg, 1.0, CoefficientKind::Layered, radii);
      const Eigen::VectorXd dense = oracle::eigenvalues(op);
      rng::Stream stream(rng::mix({99, r}));
      const auto [glo, ghi] = gershgorin_interval(op);
      for (int w = 0; w < 30; ++w) {
        double a = glo + (ghi - glo) * stream.next_unit();
        double b = glo + (ghi - glo) * stream.next_unit();
        if (a > b) std::swap(a, b);
        if (!(a < b)) continue;
        Eigen::Index dense_count = 0;
        for (Eigen::Index i = 0; i < dense.size(); ++i)
          if (dense[i] > a && dense[i] <= b) ++dense_count;
        if (count_eigenvalues(op, a, b) != dense_count) return false;
      }
    }
    return true;
  });

  c.check("window eigenpairs match dense to 1e-8", [&] {
    const RadiiField radii = field_for(cfg, 1.0, 1);
    const SparseSymmetricOperator op =
        build_box_operator(cfg, 1.0, CoefficientKind::Layered, radii);
    const Eigen::VectorXd dense = oracle::eigenvalues(op);
    // window endpoints placed inside spectral gaps, never on an eigenvalue
    const double lo = dense[0] - 1.0;
    const double hi = 0.5 * (dense[19] + dense[20]);
    const EigenSet set = eigenpairs_in_window(op, lo, hi);
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < dense.size(); ++i)
      if (dense[i] > lo && dense[i] <= hi) ++count;
    if (set.values.size() != count) return false;
    for (Eigen::Index i = 0; i < set.values.size(); ++i)
      if (std::abs(set.values[i] - dense[i]) > 1e-8 * std::abs(dense[i])) return false;
    return true;
  });

  c.check("resolvent block norms match dense to 1e-6", [&] {
    const RadiiField radii = field_for(cfg, 1.0, 2);
    const SparseSymmetricOperator op =
        build_box_operator(cfg, 1.0, CoefficientKind::Layered, radii);
    const double lambda_min = lowest_eigenpairs(op, 1).values[0];
    const double energy = 0.25 * lambda_min;
    Point far = op.grid.origin;
    far[0] += 3 * cfg.model.epsilon;
    const IndexMask m1 = mask_for_region(op.grid, Region::open_box(op.grid.origin, 0.25));
    const IndexMask m2 = mask_for_region(op.grid, Region::open_box(far, 0.25));
    const double fast = block_resolvent_norm(op, energy, m1, m2, 1e-9);
    const double slow = oracle::resolvent_block_norm(op, energy, m1, m2);
    return std::abs(fast - slow) <= 1e-6 * std::max(slow, 1e-12);
  });

  c.check("chebyshev evolution matches dense propagator", [&] {
    const RadiiField radii = field_for(cfg, 1.0, 3);
    const SparseSymmetricOperator op =
        build_box_operator(cfg, 1.0, CoefficientKind::Layered, radii);
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(op.grid.n());
    psi[op.grid.n() / 2] = 1.0;
    const Eigen::VectorXcd fast = chebyshev_evolve(op, psi, 1.0, 1e-12);
    const Eigen::VectorXcd slow = oracle::evolve(op, psi, 1.0);
    return (fast - slow).norm() <= 1e-8;
  });

  c.check("unit-coefficient spectrum matches the discrete Laplacian", [&] {
    ExperimentConfig unit_cfg = cfg;
    unit_cfg.grid_h = 0.125;
    const RadiiField radii = field_for(unit_cfg, 1.0, 0);
    const SparseSymmetricOperator op =
        build_box_operator(unit_cfg, 1.0, CoefficientKind::Unit, radii);
    const Eigen::VectorXd dense = oracle::eigenvalues(op);
    const int n = op.grid.per_axis;
    std::vector<double> analytic;
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= n; ++j) {
        const double si = std::sin(0.5 * M_PI * i * op.grid.h);
        const double sj = std::sin(0.5 * M_PI * j * op.grid.h);
        analytic.push_back(4.0 / (op.grid.h * op.grid.h) * (si * si + sj * sj));
      }
    std::sort(analytic.begin(), analytic.end());
    for (Eigen::Index i = 0; i < dense.size(); ++i)
      if (std::abs(dense[i] - analytic[static_cast<std::size_t>(i)]) >
          1e-10 * analytic[static_cast<std::size_t>(i)])
        return false;
    return true;
  });

  std::printf(c.failures == 0 ? "selftest: all checks passed\n"
                              : "selftest: %d check(s) failed\n",
              c.failures);
  return c.failures == 0 ? 0 : 2;
}

}  // namespace hclab
