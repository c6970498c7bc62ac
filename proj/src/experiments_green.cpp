#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "hclab/dense_oracle.hpp"
#include "hclab/experiments.hpp"

namespace hclab {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ExperimentReport make_report(const std::string& driver, const RunManifest& manifest) {
  ExperimentReport r;
  r.driver = driver;
  r.manifest = manifest;
  return r;
}

std::string fmt_int(long long v) { return std::to_string(v); }

std::string box_tag(double box_side) {
  std::ostringstream s;
  s << "L" << box_side;
  std::string t = s.str();
  std::replace(t.begin(), t.end(), '.', 'p');
  return t;
}

// cells along the first axis starting from the lowest corner cell
std::vector<IndexMask> axis_cell_masks(const Grid& grid, const ModelParams& model) {
  const int n_cells = static_cast<int>(std::llround(grid.side / model.epsilon));
  std::vector<IndexMask> masks;
  for (int k = 0; k < n_cells; ++k) {
    Point corner = grid.origin;
    corner[0] += k * model.epsilon;
    masks.push_back(mask_for_region(grid, Region::open_box(corner, model.epsilon)));
  }
  return masks;
}

double nudged_block_norm(const SparseSymmetricOperator& op, double energy,
                         const IndexMask& rows, const IndexMask& cols, double tol,
                         bool* skipped) {
  const double eta = kShiftNudgeRel * std::max(op.norm_inf, 1e-300);
  for (int attempt = 0; attempt <= 3; ++attempt) {
    try {
      return block_resolvent_norm(op, energy + attempt * eta, rows, cols, tol);
    } catch (const UnresolvedShiftError&) {
      continue;
    }
  }
  if (skipped) *skipped = true;
  return 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// combes_thomas_probe: off-diagonal resolvent decay below the spectrum
// ---------------------------------------------------------------------------

ExperimentReport run_combes_thomas(const RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ExperimentConfig& cfg = manifest.config;
  const double L = cfg.boxes.front();
  const int R = cfg.realizations;
  std::vector<double> fracs = cfg.ct.gap_fractions;
  std::sort(fracs.begin(), fracs.end());
  if (fracs.empty() || fracs.front() <= 0.0 || fracs.back() > 1.0)
    throw ConfigError("ct.gap_fractions must lie in (0, 1]");
  const double power_tol = cfg.oracle_dense ? 1e-9 : 1e-6;

  struct Row {
    double lambda_min = 0;
    std::vector<std::vector<double>> norms;  // [frac][distance]
  };
  std::vector<Row> rows(static_cast<std::size_t>(R));

  parallel_for(R, resolve_workers(cfg.workers), [&](int r) {
    const RadiiField radii = field_for(cfg, L, static_cast<std::uint64_t>(r));
    const SparseSymmetricOperator op = build_box_operator(cfg, L, cfg.coefficient, radii);
    const std::vector<IndexMask> masks = axis_cell_masks(op.grid, cfg.model);
    Row& row = rows[static_cast<std::size_t>(r)];
    row.lambda_min = lowest_eigenpairs(op, 1, solver_options(cfg)).values[0];
    const auto [glo, ghi] = gershgorin_interval(op);
    (void)glo;
    for (double frac : fracs) {
      const double g = frac * row.lambda_min;
      const double energy = row.lambda_min - g;
      // certify the spectral distance by inertia
      if (count_below(op, energy + 0.999 * g).count != 0)
        throw InvariantViolation("combes-thomas: certified distance check failed");
      std::vector<double> norms;
      for (std::size_t k = 0; k < masks.size(); ++k) {
        const double norm =
            block_resolvent_norm(op, energy, masks.front(), masks[k], power_tol);
        if (cfg.oracle_dense) {
          if (op.grid.n() > oracle::kMaxDenseNodes)
            throw ConfigError("--oracle-dense requires grids of at most 12^d nodes");
          const double dense = oracle::resolvent_block_norm(op, energy, masks.front(), masks[k]);
          if (std::abs(norm - dense) > 1e-6 * std::max(dense, 1e-12))
            throw InvariantViolation("oracle mismatch in resolvent block norm");
        }
        norms.push_back(norm);
      }
      // diagonal sanity floor: v^T (A-E)^{-1} v >= 1/(lambda_max - E)
      if (norms.front() < (1.0 - 1e-6) / (ghi - energy))
        throw InvariantViolation("combes-thomas: diagonal block below the resolvent floor");
      row.norms.push_back(std::move(norms));
    }
  });

  ExperimentReport report = make_report("combes-thomas", manifest);
  report.records.columns = {"realization", "gap_fraction", "distance", "norm"};
  for (int r = 0; r < R; ++r)
    for (std::size_t f = 0; f < fracs.size(); ++f)
      for (std::size_t k = 0; k < rows[static_cast<std::size_t>(r)].norms[f].size(); ++k)
        report.records.rows.push_back(
            {fmt_int(r), fmt_num(fracs[f]), fmt_num(cfg.model.epsilon * static_cast<double>(k)),
             fmt_num(rows[static_cast<std::size_t>(r)].norms[f][k])});

  nlohmann::ordered_json fits = nlohmann::ordered_json::array();
  double prev_abs_slope = 0.0;
  for (std::size_t f = 0; f < fracs.size(); ++f) {
    std::vector<double> xs, ys;
    double g_mean = 0;
    for (int r = 0; r < R; ++r) {
      const Row& row = rows[static_cast<std::size_t>(r)];
      g_mean += fracs[f] * row.lambda_min;
      for (std::size_t k = 1; k < row.norms[f].size(); ++k)
        if (row.norms[f][k] > 0) {
          xs.push_back(cfg.model.epsilon * static_cast<double>(k));
          ys.push_back(std::log(row.norms[f][k]));
        }
    }
    g_mean /= R;
    const LineFit fit = fit_line(xs, ys);
    if (!(fit.slope < 0))
      throw InvariantViolation("combes-thomas: fitted distance slope is not negative");
    if (f > 0 && !(std::abs(fit.slope) > prev_abs_slope))
      throw InvariantViolation(
          "combes-thomas: decay rate did not increase with the spectral distance");
    prev_abs_slope = std::abs(fit.slope);

    Curve curve;
    curve.name = "g" + std::to_string(f) + "_decay";
    curve.columns = {"distance", "log_norm"};
    for (std::size_t i = 0; i < xs.size(); ++i) curve.rows.push_back({xs[i], ys[i]});
    curve.params = {{"gap_fraction", fmt_num(fracs[f])},
                    {"slope", fmt_num(fit.slope)},
                    {"slope_ci", fmt_num(fit.slope_ci)},
                    {"c_ct_hat", fmt_num(g_mean / std::max(std::abs(fit.slope), 1e-300))}};
    report.curves.push_back(std::move(curve));

    nlohmann::ordered_json j;
    j["gap_fraction"] = fracs[f];
    j["mean_gap"] = g_mean;
    j["slope"] = fit.slope;
    j["slope_ci"] = fit.slope_ci;
    j["c_ct_hat"] = g_mean / std::max(std::abs(fit.slope), 1e-300);
    fits.push_back(j);
  }
  report.summary["fits"] = fits;
  report.wall_seconds = seconds_since(t0);
  return report;
}

// ---------------------------------------------------------------------------
// suitability_mc: multiscale-analysis hypothesis probability
// ---------------------------------------------------------------------------

ExperimentReport run_suitability(const RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ExperimentConfig& cfg = manifest.config;
  if (!cfg.suit.e0_set)
    throw ConfigError("suit.e0 is required (take a gap-scan band edge or any E below lambda_min)");
  if (cfg.suit.e_grid < 1) throw ConfigError("suit.e_grid must be >= 1");
  const int R = cfg.realizations;
  const double power_tol = cfg.oracle_dense ? 1e-9 : 1e-6;

  struct Probe {
    double energy;
    double norm;
    bool skipped;
  };
  // data[r][b] = probes
  std::vector<std::vector<std::vector<Probe>>> data(static_cast<std::size_t>(R));

  parallel_for(R, resolve_workers(cfg.workers), [&](int r) {
    auto& per_box = data[static_cast<std::size_t>(r)];
    per_box.resize(cfg.boxes.size());
    for (std::size_t b = 0; b < cfg.boxes.size(); ++b) {
      const double L = cfg.boxes[b];
      const RadiiField radii = field_for(cfg, L, static_cast<std::uint64_t>(r));
      const SparseSymmetricOperator op = build_box_operator(cfg, L, cfg.coefficient, radii);
      const IndexMask belt = mask_for_region(op.grid, Region::belt(cfg.model.epsilon));
      const IndexMask center = mask_for_region(op.grid, Region::center_fraction(1.0 / 3.0));
      const double span = 0.5 / std::sqrt(L);
      for (int j = 0; j < cfg.suit.e_grid; ++j) {
        Probe probe{};
        probe.energy =
            cfg.suit.e0 +
            (cfg.suit.e_grid == 1 ? 0.0
                                  : span * static_cast<double>(j) / (cfg.suit.e_grid - 1));
        probe.skipped = false;
        probe.norm = nudged_block_norm(op, probe.energy, belt, center, power_tol, &probe.skipped);
        if (cfg.oracle_dense && !probe.skipped) {
          if (op.grid.n() > oracle::kMaxDenseNodes)
            throw ConfigError("--oracle-dense requires grids of at most 12^d nodes");
          const double dense = oracle::resolvent_block_norm(op, probe.energy, belt, center);
          if (std::abs(probe.norm - dense) > 1e-6 * std::max(dense, 1e-12))
            throw InvariantViolation("oracle mismatch in suitability block norm");
        }
        per_box[b].push_back(probe);
      }
    }
  });

  ExperimentReport report = make_report("suitability", manifest);
  report.records.columns = {"realization", "L", "E", "norm", "ok", "skipped"};
  nlohmann::ordered_json per_l = nlohmann::ordered_json::array();
  Curve trend;
  trend.name = "trend";
  trend.columns = {"L", "p_suitable", "ci_low", "ci_high"};
  for (std::size_t b = 0; b < cfg.boxes.size(); ++b) {
    const double L = cfg.boxes[b];
    const double threshold = std::pow(L, -cfg.suit.theta);
    int good = 0, skipped_total = 0;
    for (int r = 0; r < R; ++r) {
      bool all_ok = true;
      for (const Probe& probe : data[static_cast<std::size_t>(r)][b]) {
        const bool ok = !probe.skipped && probe.norm <= threshold;
        if (probe.skipped)
          ++skipped_total;
        else if (!ok)
          all_ok = false;
        report.records.rows.push_back({fmt_int(r), fmt_num(L), fmt_num(probe.energy),
                                       fmt_num(probe.norm), fmt_int(ok ? 1 : 0),
                                       fmt_int(probe.skipped ? 1 : 0)});
      }
      if (all_ok) ++good;
    }
    const ProportionCI ci = wilson_interval(good, R);
    trend.rows.push_back({L, ci.estimate, ci.lo, ci.hi});
    nlohmann::ordered_json j;
    j["L"] = L;
    j["threshold"] = threshold;
    j["p_suitable"] = ci.estimate;
    j["p_ci"] = {ci.lo, ci.hi};
    j["skipped_probes"] = skipped_total;
    per_l.push_back(j);
  }
  report.curves.push_back(std::move(trend));
  report.summary["theta"] = cfg.suit.theta;
  report.summary["e0"] = cfg.suit.e0;
  report.summary["per_L"] = per_l;
  report.wall_seconds = seconds_since(t0);
  return report;
}

// ---------------------------------------------------------------------------
// projector_decay: Hilbert-Schmidt blocks of the window spectral projector
// ---------------------------------------------------------------------------

ExperimentReport run_projector_decay(const RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ExperimentConfig& cfg = manifest.config;
  if (!cfg.projector.window_set)
    throw ConfigError("projector.window_lo and projector.window_hi are required");
  const double L = cfg.boxes.front();
  if (!(L > 1.0 + cfg.model.epsilon))
    throw ConfigError("projector-decay needs a box with L > 1 + epsilon for unit-box pairs");
  const int R = cfg.realizations;

  const int n_pairs = static_cast<int>(std::floor((L - 1.0) / cfg.model.epsilon + 1e-9)) + 1;
  struct Row {
    Eigen::Index count = 0;
    std::vector<double> hs;  // per distance
  };
  std::vector<Row> rows(static_cast<std::size_t>(R));

  parallel_for(R, resolve_workers(cfg.workers), [&](int r) {
    const RadiiField radii = field_for(cfg, L, static_cast<std::uint64_t>(r));
    const SparseSymmetricOperator op = build_box_operator(cfg, L, cfg.coefficient, radii);
    Row& row = rows[static_cast<std::size_t>(r)];
    row.count = guarded_window_count(cfg, op, cfg.projector.window_lo, cfg.projector.window_hi);
    if (row.count == 0) return;  // empty window is a valid outcome
    const EigenSet set = eigenpairs_in_window(op, cfg.projector.window_lo,
                                              cfg.projector.window_hi, solver_options(cfg));
    // Gram blocks: |chi_x P chi_y|_HS^2 = tr(Gx Gy) with G = V_mask^T V_mask
    auto gram = [&](const IndexMask& mask) {
      Eigen::MatrixXd sub(mask.indices.size(), set.vectors.cols());
      for (std::size_t i = 0; i < mask.indices.size(); ++i)
        sub.row(static_cast<Eigen::Index>(i)) = set.vectors.row(mask.indices[i]);
      return Eigen::MatrixXd(sub.transpose() * sub);
    };
    const IndexMask ref_mask = mask_for_region(op.grid, Region::open_box(op.grid.origin, 1.0));
    const Eigen::MatrixXd g_ref = gram(ref_mask);
    for (int k = 0; k < n_pairs; ++k) {
      Point corner = op.grid.origin;
      corner[0] += k * cfg.model.epsilon;
      const IndexMask mask = mask_for_region(op.grid, Region::open_box(corner, 1.0));
      const Eigen::MatrixXd g = gram(mask);
      const double hs2 = (g_ref * g).trace();
      row.hs.push_back(std::sqrt(std::max(hs2, 0.0)));
      if (cfg.oracle_dense) {
        if (op.grid.n() > oracle::kMaxDenseNodes)
          throw ConfigError("--oracle-dense requires grids of at most 12^d nodes");
        const Eigen::MatrixXd p = set.vectors * set.vectors.transpose();
        Eigen::MatrixXd block(ref_mask.indices.size(), mask.indices.size());
        for (std::size_t i = 0; i < ref_mask.indices.size(); ++i)
          for (std::size_t j = 0; j < mask.indices.size(); ++j)
            block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                p(ref_mask.indices[i], mask.indices[j]);
        if (std::abs(block.norm() - row.hs.back()) > 1e-8 * std::max(1.0, block.norm()))
          throw InvariantViolation("projector-decay: HS block mismatch vs dense projector");
      }
    }
  });

  ExperimentReport report = make_report("projector-decay", manifest);
  report.records.columns = {"realization", "window_count", "distance", "hs_norm"};
  int empty_windows = 0;
  std::vector<double> dist, log_hs;
  std::vector<double> mean_hs(static_cast<std::size_t>(n_pairs), 0.0);
  int contributing = 0;
  for (int r = 0; r < R; ++r) {
    const Row& row = rows[static_cast<std::size_t>(r)];
    if (row.count == 0) {
      ++empty_windows;
      report.records.rows.push_back({fmt_int(r), "0", fmt_num(0.0), fmt_num(0.0)});
      continue;
    }
    ++contributing;
    for (int k = 0; k < n_pairs; ++k) {
      const double distance = cfg.model.epsilon * static_cast<double>(k);
      report.records.rows.push_back({fmt_int(r), fmt_int(row.count), fmt_num(distance),
                                     fmt_num(row.hs[static_cast<std::size_t>(k)])});
      mean_hs[static_cast<std::size_t>(k)] += row.hs[static_cast<std::size_t>(k)];
      if (k > 0 && row.hs[static_cast<std::size_t>(k)] > 0) {
        dist.push_back(distance);
        log_hs.push_back(std::log(row.hs[static_cast<std::size_t>(k)]));
      }
    }
  }

  // stretched-exponential fit: log hs = log C - rate * dist^zeta
  double best_zeta = 1.0, best_rate = 0.0, best_sse = 1e300, best_logc = 0.0;
  if (!dist.empty()) {
    for (int zi = 1; zi <= 10; ++zi) {
      const double zeta = 0.1 * zi;
      std::vector<double> xs;
      xs.reserve(dist.size());
      for (double d : dist) xs.push_back(std::pow(d, zeta));
      const LineFit fit = fit_line(xs, log_hs);
      double sse = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = log_hs[i] - (fit.intercept + fit.slope * xs[i]);
        sse += e * e;
      }
      if (sse < best_sse) {
        best_sse = sse;
        best_zeta = zeta;
        best_rate = -fit.slope;
        best_logc = fit.intercept;
      }
    }
  }

  Curve curve;
  curve.name = "hs_decay";
  curve.columns = {"distance", "mean_hs_norm"};
  if (contributing > 0)
    for (int k = 0; k < n_pairs; ++k)
      curve.rows.push_back({cfg.model.epsilon * static_cast<double>(k),
                            mean_hs[static_cast<std::size_t>(k)] / contributing});
  curve.params = {{"zeta_hat", fmt_num(best_zeta)},
                  {"rate", fmt_num(best_rate)},
                  {"log_c", fmt_num(best_logc)}};
  report.curves.push_back(std::move(curve));

  report.summary["window"] = {cfg.projector.window_lo, cfg.projector.window_hi};
  report.summary["empty_window_realizations"] = empty_windows;
  report.summary["zeta_hat"] = best_zeta;
  report.summary["rate"] = best_rate;
  // decay is probed for the spectral projector itself (f identically 1),
  // not for a supremum over bounded spectral functions
  report.summary["proxy"] = "spectral projector (f identically 1)";
  report.wall_seconds = seconds_since(t0);
  return report;
}

// ---------------------------------------------------------------------------
// dynamical_moments: Chebyshev-propagated spatial moments
// ---------------------------------------------------------------------------

ExperimentReport run_dynamics(const RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ExperimentConfig& cfg = manifest.config;
  if (!cfg.dyn.window_set)
    throw ConfigError("dyn.window_lo and dyn.window_hi are required");
  const double L = cfg.boxes.front();
  const int R = cfg.realizations;
  const int order = cfg.dyn.moment_order;
  if (order < 1) throw ConfigError("dyn.moment_order must be >= 1");

  struct Sample {
    double t, moment, drift;
  };
  struct Row {
    bool skipped = false;
    std::vector<Sample> medium, control;
  };
  std::vector<Row> rows(static_cast<std::size_t>(R));

  parallel_for(R, resolve_workers(cfg.workers), [&](int r) {
    const RadiiField radii = field_for(cfg, L, static_cast<std::uint64_t>(r));
    Row& row = rows[static_cast<std::size_t>(r)];
    auto run_side = [&](const SparseSymmetricOperator& op, std::vector<Sample>& out) -> bool {
      const Grid& grid = op.grid;
      Point center = grid.origin;
      for (int a = 0; a < grid.d; ++a) center[a] += 0.5 * grid.side;
      // indicator of the cell containing the box centre
      Point cell_corner = grid.origin;
      for (int a = 0; a < grid.d; ++a) {
        const auto k = static_cast<std::int64_t>(
            std::floor((center[a] - grid.origin[a]) / cfg.model.epsilon - 0.5));
        cell_corner[a] = grid.origin[a] + cfg.model.epsilon * static_cast<double>(k);
      }
      const IndexMask cell = mask_for_region(grid, Region::open_box(cell_corner, cfg.model.epsilon));
      Eigen::VectorXd indicator = Eigen::VectorXd::Zero(grid.n());
      for (int idx : cell.indices) indicator[idx] = 1.0;
      indicator.normalize();
      const Eigen::Index count =
          guarded_window_count(cfg, op, cfg.dyn.window_lo, cfg.dyn.window_hi);
      if (count == 0) return false;
      const EigenSet set =
          eigenpairs_in_window(op, cfg.dyn.window_lo, cfg.dyn.window_hi, solver_options(cfg));
      Eigen::VectorXd filtered = set.vectors * (set.vectors.transpose() * indicator);
      if (filtered.norm() < 1e-12) return false;
      filtered.normalize();
      Eigen::VectorXcd psi0 = filtered.cast<std::complex<double>>();
      Eigen::VectorXd weight(grid.n());
      for (Eigen::Index i = 0; i < grid.n(); ++i) {
        const Point x = grid.node(i);
        double dist2 = 0;
        for (int a = 0; a < grid.d; ++a) dist2 += (x[a] - center[a]) * (x[a] - center[a]);
        weight[i] = std::pow(dist2, 0.5 * order);  // |x - centre|^n
      }
      for (double t : cfg.dyn.times) {
        const Eigen::VectorXcd psi = chebyshev_evolve(op, psi0, t, 1e-10, cfg.max_terms);
        if (cfg.oracle_dense) {
          if (grid.n() > oracle::kMaxDenseNodes)
            throw ConfigError("--oracle-dense requires grids of at most 12^d nodes");
          const Eigen::VectorXcd dense = oracle::evolve(op, psi0, t);
          if ((psi - dense).norm() > 1e-6)
            throw InvariantViolation("oracle mismatch in chebyshev evolution");
        }
        double moment = 0;
        for (Eigen::Index i = 0; i < grid.n(); ++i) moment += weight[i] * std::norm(psi[i]);
        if (!std::isfinite(moment))
          throw InvariantViolation("dynamics: non-finite moment");
        out.push_back({t, moment, std::abs(psi.norm() - 1.0)});
      }
      return true;
    };
    const SparseSymmetricOperator op_medium =
        build_box_operator(cfg, L, cfg.coefficient, radii);
    const SparseSymmetricOperator op_control =
        build_box_operator(cfg, L, CoefficientKind::Unit, radii);
    const bool ok_medium = run_side(op_medium, row.medium);
    const bool ok_control = run_side(op_control, row.control);
    row.skipped = !(ok_medium && ok_control);
  });

  ExperimentReport report = make_report("dynamics", manifest);
  report.records.columns = {"realization", "kind", "t", "moment", "norm_drift"};
  double sup_medium = 0, sup_control = 0;
  int skipped = 0;
  for (int r = 0; r < R; ++r) {
    const Row& row = rows[static_cast<std::size_t>(r)];
    if (row.skipped) {
      ++skipped;
      continue;
    }
    for (const Sample& s : row.medium) {
      report.records.rows.push_back(
          {fmt_int(r), "medium", fmt_num(s.t), fmt_num(s.moment), fmt_num(s.drift)});
      sup_medium = std::max(sup_medium, s.moment);
    }
    for (const Sample& s : row.control) {
      report.records.rows.push_back(
          {fmt_int(r), "control", fmt_num(s.t), fmt_num(s.moment), fmt_num(s.drift)});
      sup_control = std::max(sup_control, s.moment);
    }
  }

  Curve curve;
  curve.name = box_tag(L) + "_moments";
  curve.columns = {"t", "mean_moment_medium", "mean_moment_control"};
  for (std::size_t ti = 0; ti < cfg.dyn.times.size(); ++ti) {
    double mm = 0, mc = 0;
    int n = 0;
    for (int r = 0; r < R; ++r) {
      const Row& row = rows[static_cast<std::size_t>(r)];
      if (row.skipped) continue;
      mm += row.medium[ti].moment;
      mc += row.control[ti].moment;
      ++n;
    }
    if (n > 0) curve.rows.push_back({cfg.dyn.times[ti], mm / n, mc / n});
  }
  report.curves.push_back(std::move(curve));

  report.summary["moment_order"] = order;
  report.summary["window"] = {cfg.dyn.window_lo, cfg.dyn.window_hi};
  report.summary["sup_moment_medium"] = sup_medium;
  report.summary["sup_moment_control"] = sup_control;
  report.summary["skipped_realizations"] = skipped;
  report.wall_seconds = seconds_since(t0);
  return report;
}

}  // namespace hclab
