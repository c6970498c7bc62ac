#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
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

void oracle_check_values(const ExperimentConfig& cfg, const SparseSymmetricOperator& op,
                         const EigenSet& set, double a, double b) {
  if (!cfg.oracle_dense) return;
  if (op.grid.n() > oracle::kMaxDenseNodes)
    throw ConfigError("--oracle-dense requires grids of at most 12^d nodes");
  const Eigen::VectorXd all = oracle::eigenvalues(op);
  std::vector<double> in_window;
  for (Eigen::Index i = 0; i < all.size(); ++i)
    if (all[i] > a && all[i] <= b) in_window.push_back(all[i]);
  if (static_cast<Eigen::Index>(in_window.size()) != set.values.size())
    throw InvariantViolation("oracle mismatch: dense finds " +
                             std::to_string(in_window.size()) + " window eigenvalues, engine " +
                             std::to_string(set.values.size()));
  for (Eigen::Index i = 0; i < set.values.size(); ++i) {
    const double ref = in_window[static_cast<std::size_t>(i)];
    if (std::abs(set.values[i] - ref) > 1e-6 * std::max(std::abs(ref), 1e-6 * op.norm_inf))
      throw InvariantViolation("oracle mismatch: eigenvalue " + fmt_num(set.values[i]) +
                               " vs dense " + fmt_num(ref));
  }
}

void post_weyl_check(const ExperimentConfig& cfg, const SparseSymmetricOperator& op,
                     const EigenSet& set) {
  if (set.values.size() == 0) return;
  const double top = set.values[set.values.size() - 1];
  const Eigen::Index ceiling = weyl_ceiling(cfg, op.grid, top);
  if (set.values.size() > ceiling)
    throw InvariantViolation("Weyl guardrail: " + std::to_string(set.values.size()) +
                             " eigenvalues below " + fmt_num(top) + " exceed the ceiling " +
                             std::to_string(ceiling));
}

}  // namespace

// ---------------------------------------------------------------------------
// gap_scan: spectra of coupled boxes, empty-interval candidates
// ---------------------------------------------------------------------------

ExperimentReport run_gap_scan(const RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ExperimentConfig& cfg = manifest.config;
  for (std::size_t i = 1; i < cfg.boxes.size(); ++i)
    if (!(cfg.boxes[i] > cfg.boxes[i - 1]))
      throw ConfigError("gap-scan needs a strictly increasing box list");

  const int R = cfg.realizations;
  const auto n_boxes = cfg.boxes.size();
  // spectra[r][b] = eigenvalues of the b-th box for realization r
  std::vector<std::vector<std::vector<double>>> spectra(
      static_cast<std::size_t>(R), std::vector<std::vector<double>>(n_boxes));
  std::vector<std::string> flagged(static_cast<std::size_t>(R));

  parallel_for(R, resolve_workers(cfg.workers), [&](int r) {
    for (std::size_t b = 0; b < n_boxes; ++b) {
      const double L = cfg.boxes[b];
      const RadiiField radii = field_for(cfg, L, static_cast<std::uint64_t>(r));
      const SparseSymmetricOperator op = build_box_operator(cfg, L, cfg.coefficient, radii);
      const Eigen::Index count = guarded_window_count(cfg, op, 0.0, cfg.gap.e_max);
      if (count > cfg.max_pairs)
        throw ConfigError("gap.e_max " + fmt_num(cfg.gap.e_max) + " encloses " +
                          std::to_string(count) + " eigenvalues at L = " + fmt_num(L) +
                          ", above engine.max_pairs");
      try {
        EigenSet set = eigenpairs_in_window(op, 0.0, cfg.gap.e_max, solver_options(cfg));
        oracle_check_values(cfg, op, set, 0.0, cfg.gap.e_max);
        spectra[static_cast<std::size_t>(r)][b].assign(set.values.data(),
                                                       set.values.data() + set.values.size());
      } catch (const CertifiedFailure& e) {
        // flagged, never dropped silently: the realization is excluded from
        // the interval aggregation and listed in the report
        flagged[static_cast<std::size_t>(r)] =
            "L=" + fmt_num(L) + ": " + e.what();
        for (std::size_t bb = 0; bb < n_boxes; ++bb)
          spectra[static_cast<std::size_t>(r)][bb].clear();
        return;
      }
    }
  });

  ExperimentReport report = make_report("gap-scan", manifest);
  report.records.columns = {"realization", "L", "k", "eigenvalue"};
  for (int r = 0; r < R; ++r)
    for (std::size_t b = 0; b < n_boxes; ++b) {
      const auto& vals = spectra[static_cast<std::size_t>(r)][b];
      for (std::size_t k = 0; k < vals.size(); ++k)
        report.records.rows.push_back({fmt_int(r), fmt_num(cfg.boxes[b]),
                                       fmt_int(static_cast<long long>(k + 1)),
                                       fmt_num(vals[k])});
    }

  // empty intervals of the union over a prefix of the box list
  auto union_values = [&](std::size_t prefix) {
    std::vector<double> all;
    for (int r = 0; r < R; ++r)
      for (std::size_t b = 0; b < prefix; ++b)
        all.insert(all.end(), spectra[static_cast<std::size_t>(r)][b].begin(),
                   spectra[static_cast<std::size_t>(r)][b].end());
    std::sort(all.begin(), all.end());
    return all;
  };
  auto empty_intervals = [&](const std::vector<double>& sorted, double min_width) {
    std::vector<std::array<double, 2>> out;
    if (sorted.empty()) return out;
    if (sorted.front() > 0.0) out.push_back({0.0, sorted.front()});
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
      if (sorted[i + 1] - sorted[i] >= min_width) out.push_back({sorted[i], sorted[i + 1]});
    return out;
  };

  const std::vector<double> all = union_values(n_boxes);
  const auto candidates = empty_intervals(all, cfg.gap.min_gap_width);

  nlohmann::ordered_json summary;
  summary["eigenvalues_total"] = all.size();
  summary["e_max"] = cfg.gap.e_max;
  summary["min_gap_width"] = cfg.gap.min_gap_width;
  nlohmann::ordered_json flagged_json = nlohmann::ordered_json::array();
  for (int r = 0; r < R; ++r)
    if (!flagged[static_cast<std::size_t>(r)].empty()) {
      nlohmann::ordered_json f;
      f["realization"] = r;
      f["error"] = flagged[static_cast<std::size_t>(r)];
      flagged_json.push_back(f);
    }
  summary["flagged_realizations"] = flagged_json;
  nlohmann::ordered_json cand_json = nlohmann::ordered_json::array();
  for (const auto& iv : candidates) {
    nlohmann::ordered_json c;
    c["lo"] = iv[0];
    c["hi"] = iv[1];
    // band-edge statistics: first eigenvalue above the interval, per realization
    double mean = 0, mn = 1e300, mx = -1e300;
    int have = 0;
    for (int r = 0; r < R; ++r) {
      double best = 1e300;
      for (std::size_t b = 0; b < n_boxes; ++b)
        for (double v : spectra[static_cast<std::size_t>(r)][b])
          if (v > iv[0] && v < best) best = v;
      if (best < 1e300) {
        mean += best;
        mn = std::min(mn, best);
        mx = std::max(mx, best);
        ++have;
      }
    }
    if (have > 0) {
      c["e0_mean"] = mean / have;
      c["e0_min"] = mn;
      c["e0_max"] = mx;
    }
    // per-prefix stability: covering empty interval after each box prefix
    nlohmann::ordered_json stab = nlohmann::ordered_json::array();
    for (std::size_t prefix = 1; prefix <= n_boxes; ++prefix) {
      const std::vector<double> uv = union_values(prefix);
      double lo = 0.0, hi = cfg.gap.e_max;
      for (double v : uv) {
        if (v <= iv[0]) lo = std::max(lo, v);
        if (v >= iv[1]) hi = std::min(hi, v);
      }
      nlohmann::ordered_json s;
      s["boxes"] = prefix;
      s["lo"] = lo;
      s["hi"] = hi;
      stab.push_back(s);
    }
    c["stability"] = stab;
    cand_json.push_back(c);
  }
  summary["gap_candidates"] = cand_json;
  report.summary = summary;

  Curve spectrum;
  spectrum.name = "union_spectrum";
  spectrum.columns = {"index", "eigenvalue"};
  for (std::size_t i = 0; i < all.size(); ++i)
    spectrum.rows.push_back({static_cast<double>(i + 1), all[i]});
  report.curves.push_back(std::move(spectrum));
  Curve gaps;
  gaps.name = "gap_candidates";
  gaps.columns = {"lo", "hi", "width"};
  for (const auto& iv : candidates) gaps.rows.push_back({iv[0], iv[1], iv[1] - iv[0]});
  report.curves.push_back(std::move(gaps));

  report.wall_seconds = seconds_since(t0);
  return report;
}

// ---------------------------------------------------------------------------
// squeeze_check: two-sided eigenvalue bound between sharp configurations
// ---------------------------------------------------------------------------

ExperimentReport run_squeeze(const RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ExperimentConfig& cfg = manifest.config;
  const double L = cfg.boxes.front();
  // The layer thickness in radius-fraction units: radii grown by s0 move
  // the sharp interface exactly to the outer layer boundary, which is what
  // makes the pointwise squeeze (and hence min-max) exact at matching h.
  const double delta = derived_constants(cfg.model).s0;
  const int K = cfg.squeeze.k_count;
  const int R = cfg.realizations;

  struct Row {
    std::vector<double> lam_lower, lam_mid, lam_upper, res_lower, res_mid, res_upper;
  };
  std::vector<Row> rows(static_cast<std::size_t>(R));

  parallel_for(R, resolve_workers(cfg.workers), [&](int r) {
    const RadiiField radii = field_for(cfg, L, static_cast<std::uint64_t>(r));
    const RadiiField grown = shift_radii(cfg.model, radii, delta);
    // all three operators share the midpoint face rule so the pointwise
    // coefficient ordering transfers to every face weight
    ExperimentConfig mid_cfg = cfg;
    mid_cfg.sharp_harmonic = false;
    const SparseSymmetricOperator a_mid =
        build_box_operator(mid_cfg, L, CoefficientKind::Layered, radii);
    const SparseSymmetricOperator a_upper =
        build_box_operator(mid_cfg, L, CoefficientKind::Sharp, radii);
    const SparseSymmetricOperator a_lower =
        build_box_operator(mid_cfg, L, CoefficientKind::Sharp, grown);
    const SolverOptions opts = solver_options(cfg);
    const EigenSet s_mid = lowest_eigenpairs(a_mid, K, opts);
    const EigenSet s_upper = lowest_eigenpairs(a_upper, K, opts);
    const EigenSet s_lower = lowest_eigenpairs(a_lower, K, opts);
    post_weyl_check(cfg, a_mid, s_mid);
    if (cfg.oracle_dense) {
      const Eigen::VectorXd dense = oracle::eigenvalues(a_mid);
      for (int k = 0; k < K; ++k)
        if (std::abs(s_mid.values[k] - dense[k]) > 1e-6 * std::max(std::abs(dense[k]), 1.0))
          throw InvariantViolation("oracle mismatch in squeeze lowest eigenvalues");
    }
    Row& row = rows[static_cast<std::size_t>(r)];
    for (int k = 0; k < K; ++k) {
      row.lam_lower.push_back(s_lower.values[k]);
      row.lam_mid.push_back(s_mid.values[k]);
      row.lam_upper.push_back(s_upper.values[k]);
      row.res_lower.push_back(s_lower.residuals[k]);
      row.res_mid.push_back(s_mid.residuals[k]);
      row.res_upper.push_back(s_upper.residuals[k]);
    }
  });

  ExperimentReport report = make_report("squeeze", manifest);
  report.records.columns = {"realization", "k",         "lam_sharp_grown", "lam_layered",
                            "lam_sharp",   "margin_lo", "margin_hi"};
  int violations = 0;
  double min_margin = 1e300, min_k1_margin = 1e300;
  for (int r = 0; r < R; ++r) {
    const Row& row = rows[static_cast<std::size_t>(r)];
    for (int k = 0; k < K; ++k) {
      const double m_lo = row.lam_mid[k] - row.lam_lower[k];
      const double m_hi = row.lam_upper[k] - row.lam_mid[k];
      // residual-based slack: the true discrete inequality is exact
      const double slack_lo = 8.0 * (row.res_mid[k] + row.res_lower[k]);
      const double slack_hi = 8.0 * (row.res_mid[k] + row.res_upper[k]);
      if (m_lo < -slack_lo || m_hi < -slack_hi) ++violations;
      min_margin = std::min({min_margin, m_lo, m_hi});
      if (k == 0) min_k1_margin = std::min(min_k1_margin, std::min(m_lo, m_hi));
      report.records.rows.push_back({fmt_int(r), fmt_int(k + 1), fmt_num(row.lam_lower[k]),
                                     fmt_num(row.lam_mid[k]), fmt_num(row.lam_upper[k]),
                                     fmt_num(m_lo), fmt_num(m_hi)});
    }
  }
  report.summary["delta_radius_units"] = delta;
  report.summary["violations"] = violations;
  report.summary["min_margin"] = min_margin;
  report.summary["min_k1_margin"] = min_k1_margin;
  report.wall_seconds = seconds_since(t0);
  if (violations > 0)
    throw InvariantViolation("squeeze: " + std::to_string(violations) +
                             " eigenvalue-ordering violations (assembly bug suspected)");
  return report;
}

// ---------------------------------------------------------------------------
// lifting_curve: eigenvalue rise under radius shrinkage, fitted exponent
// ---------------------------------------------------------------------------

ExperimentReport run_lifting(const RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ExperimentConfig& cfg = manifest.config;
  const double L = cfg.boxes.front();
  const int K = cfg.lifting.k_count;
  const int R = cfg.realizations;
  std::vector<double> shifts = cfg.lifting_shifts();
  std::sort(shifts.begin(), shifts.end());

  struct Row {
    std::vector<std::vector<double>> lam;  // [shift][k]
    std::vector<std::vector<double>> res;
  };
  std::vector<Row> rows(static_cast<std::size_t>(R));

  parallel_for(R, resolve_workers(cfg.workers), [&](int r) {
    const RadiiField radii = field_for(cfg, L, static_cast<std::uint64_t>(r));
    Row& row = rows[static_cast<std::size_t>(r)];
    row.lam.resize(shifts.size());
    row.res.resize(shifts.size());
    const SolverOptions opts = solver_options(cfg);
    for (std::size_t si = 0; si < shifts.size(); ++si) {
      const double s = shifts[si];
      const RadiiField shrunk = s == 0.0 ? radii : shift_radii(cfg.model, radii, -s);
      const SparseSymmetricOperator op =
          build_box_operator(cfg, L, CoefficientKind::Layered, shrunk);
      const EigenSet set = lowest_eigenpairs(op, K, opts);
      post_weyl_check(cfg, op, set);
      if (cfg.oracle_dense) {
        const Eigen::VectorXd dense = oracle::eigenvalues(op);
        for (int k = 0; k < K; ++k)
          if (std::abs(set.values[k] - dense[k]) > 1e-6 * std::max(std::abs(dense[k]), 1.0))
            throw InvariantViolation("oracle mismatch in lifting lowest eigenvalues");
      }
      for (int k = 0; k < K; ++k) {
        row.lam[si].push_back(set.values[k]);
        row.res[si].push_back(set.residuals[k]);
      }
    }
  });

  ExperimentReport report = make_report("lifting", manifest);
  report.records.columns = {"realization", "k", "s", "lambda", "delta"};
  int violations = 0;
  for (int r = 0; r < R; ++r) {
    const Row& row = rows[static_cast<std::size_t>(r)];
    for (int k = 0; k < K; ++k) {
      double prev_delta = 0.0;
      for (std::size_t si = 0; si < shifts.size(); ++si) {
        const double delta = row.lam[si][static_cast<std::size_t>(k)] -
                             row.lam[0][static_cast<std::size_t>(k)];
        const double slack = 8.0 * (row.res[si][static_cast<std::size_t>(k)] +
                                    row.res[0][static_cast<std::size_t>(k)]);
        if (delta < -slack) ++violations;                       // nonnegativity
        if (si > 0 && delta < prev_delta - slack) ++violations;  // monotone in s
        prev_delta = delta;
        report.records.rows.push_back({fmt_int(r), fmt_int(k + 1), fmt_num(shifts[si]),
                                       fmt_num(row.lam[si][static_cast<std::size_t>(k)]),
                                       fmt_num(delta)});
      }
    }
  }

  // log-log fits of the mean lift, per k and pooled
  nlohmann::ordered_json fits = nlohmann::ordered_json::array();
  std::vector<double> pooled_x, pooled_y;
  for (int k = 0; k < K; ++k) {
    Curve curve;
    curve.name = "k" + std::to_string(k + 1) + "_lift";
    curve.columns = {"s", "mean_delta"};
    std::vector<double> xs, ys;
    for (std::size_t si = 0; si < shifts.size(); ++si) {
      if (shifts[si] <= 0.0) continue;
      double mean = 0;
      for (int r = 0; r < R; ++r)
        mean += rows[static_cast<std::size_t>(r)].lam[si][static_cast<std::size_t>(k)] -
                rows[static_cast<std::size_t>(r)].lam[0][static_cast<std::size_t>(k)];
      mean /= R;
      curve.rows.push_back({shifts[si], mean});
      if (mean > 0) {
        xs.push_back(std::log(shifts[si]));
        ys.push_back(std::log(mean));
        pooled_x.push_back(std::log(shifts[si]));
        pooled_y.push_back(std::log(mean));
      }
    }
    const LineFit fit = fit_line(xs, ys);
    curve.params = {{"tau_hat", fmt_num(fit.slope)}, {"tau_ci", fmt_num(fit.slope_ci)}};
    report.curves.push_back(std::move(curve));
    nlohmann::ordered_json f;
    f["k"] = k + 1;
    f["tau_hat"] = fit.slope;
    f["tau_ci"] = fit.slope_ci;
    f["points"] = fit.points;
    fits.push_back(f);
  }
  const LineFit pooled = fit_line(pooled_x, pooled_y);
  report.summary["per_k"] = fits;
  report.summary["tau_hat"] = pooled.slope;
  report.summary["tau_ci"] = pooled.slope_ci;
  report.summary["violations"] = violations;
  report.wall_seconds = seconds_since(t0);
  if (violations > 0)
    throw InvariantViolation("lifting: " + std::to_string(violations) +
                             " monotonicity violations");
  return report;
}

// ---------------------------------------------------------------------------
// wegner_mc: window-count statistics
// ---------------------------------------------------------------------------

ExperimentReport run_wegner(const RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ExperimentConfig& cfg = manifest.config;
  const int R = cfg.realizations;
  const std::vector<double> deltas = cfg.wegner_deltas();
  const std::vector<double>& energies = cfg.wegner.energies;
  if (energies.empty()) throw ConfigError("wegner.energies must not be empty");

  // counts[r][b][e][d]
  using CountGrid = std::vector<std::vector<std::vector<Eigen::Index>>>;
  std::vector<CountGrid> counts(static_cast<std::size_t>(R));

  parallel_for(R, resolve_workers(cfg.workers), [&](int r) {
    CountGrid grid_counts(cfg.boxes.size());
    for (std::size_t b = 0; b < cfg.boxes.size(); ++b) {
      const double L = cfg.boxes[b];
      const RadiiField radii = field_for(cfg, L, static_cast<std::uint64_t>(r));
      const SparseSymmetricOperator op = build_box_operator(cfg, L, cfg.coefficient, radii);
      std::map<double, Eigen::Index> below;  // cache per endpoint
      auto cumulative = [&](double e) {
        auto it = below.find(e);
        if (it != below.end()) return it->second;
        const Eigen::Index c = count_below(op, e).count;
        below[e] = c;
        return c;
      };
      grid_counts[b].resize(energies.size());
      for (std::size_t ei = 0; ei < energies.size(); ++ei) {
        Eigen::Index prev = -1;
        for (double d : deltas) {
          const Eigen::Index c = cumulative(energies[ei] + d) - cumulative(energies[ei] - d);
          if (cfg.oracle_dense) {
            if (op.grid.n() > oracle::kMaxDenseNodes)
              throw ConfigError("--oracle-dense requires grids of at most 12^d nodes");
            const Eigen::Index dense =
                oracle::count_in_window(op, energies[ei] - d, energies[ei] + d);
            if (dense != c)
              throw InvariantViolation("oracle mismatch: wegner count " + std::to_string(c) +
                                       " vs dense " + std::to_string(dense));
          }
          if (c < prev)
            throw InvariantViolation("wegner: count not monotone in delta at E = " +
                                     fmt_num(energies[ei]));
          prev = c;
          grid_counts[b][ei].push_back(c);
        }
      }
    }
    counts[static_cast<std::size_t>(r)] = std::move(grid_counts);
  });

  ExperimentReport report = make_report("wegner", manifest);
  report.records.columns = {"realization", "L", "E", "delta", "count"};
  for (int r = 0; r < R; ++r)
    for (std::size_t b = 0; b < cfg.boxes.size(); ++b)
      for (std::size_t ei = 0; ei < energies.size(); ++ei)
        for (std::size_t di = 0; di < deltas.size(); ++di)
          report.records.rows.push_back(
              {fmt_int(r), fmt_num(cfg.boxes[b]), fmt_num(energies[ei]), fmt_num(deltas[di]),
               fmt_int(counts[static_cast<std::size_t>(r)][b][ei][di])});

  auto mean_sd = [&](std::size_t b, std::size_t ei, std::size_t di) {
    double mean = 0;
    for (int r = 0; r < R; ++r) mean += static_cast<double>(counts[static_cast<std::size_t>(r)][b][ei][di]);
    mean /= R;
    double var = 0;
    for (int r = 0; r < R; ++r) {
      const double d = static_cast<double>(counts[static_cast<std::size_t>(r)][b][ei][di]) - mean;
      var += d * d;
    }
    var = R > 1 ? var / (R - 1) : 0.0;
    return std::pair<double, double>(mean, std::sqrt(var));
  };

  nlohmann::ordered_json fits = nlohmann::ordered_json::array();
  const double noise_floor = 1.0 / static_cast<double>(R);
  for (std::size_t b = 0; b < cfg.boxes.size(); ++b)
    for (std::size_t ei = 0; ei < energies.size(); ++ei) {
      Curve curve;
      curve.name = box_tag(cfg.boxes[b]) + "_E" + std::to_string(ei) + "_delta";
      curve.columns = {"delta", "mean_count", "ci_low", "ci_high"};
      std::vector<double> xs, ys;
      double prev_mean = -1.0;
      for (std::size_t di = 0; di < deltas.size(); ++di) {
        const auto [mean, sd] = mean_sd(b, ei, di);
        const double half = 1.96 * sd / std::sqrt(static_cast<double>(R));
        curve.rows.push_back({deltas[di], mean, std::max(0.0, mean - half), mean + half});
        if (mean < prev_mean)
          throw InvariantViolation("wegner: mean count not monotone in delta");
        prev_mean = mean;
        if (mean >= noise_floor) {
          xs.push_back(std::log(deltas[di]));
          ys.push_back(std::log(mean));
        }
      }
      const LineFit fit = fit_line(xs, ys);
      curve.params = {{"delta_slope", fmt_num(fit.slope)},
                      {"delta_slope_ci", fmt_num(fit.slope_ci)}};
      report.curves.push_back(std::move(curve));
      nlohmann::ordered_json f;
      f["L"] = cfg.boxes[b];
      f["E"] = energies[ei];
      f["delta_slope"] = fit.slope;
      f["delta_slope_ci"] = fit.slope_ci;
      f["fit_points"] = fit.points;
      fits.push_back(f);
    }

  // L-dependence at fixed (E, delta)
  nlohmann::ordered_json l_fits = nlohmann::ordered_json::array();
  if (cfg.boxes.size() > 1) {
    for (std::size_t ei = 0; ei < energies.size(); ++ei) {
      Curve curve;
      curve.name = "E" + std::to_string(ei) + "_Lsweep";
      curve.columns = {"L", "delta", "mean_count"};
      for (std::size_t di = 0; di < deltas.size(); ++di) {
        std::vector<double> xs, ys;
        double prev_mean = -1.0;
        for (std::size_t b = 0; b < cfg.boxes.size(); ++b) {
          const auto [mean, sd] = mean_sd(b, ei, di);
          (void)sd;
          curve.rows.push_back({cfg.boxes[b], deltas[di], mean});
          if (mean < prev_mean)
            throw InvariantViolation("wegner: mean count not monotone in L");
          prev_mean = mean;
          if (mean >= noise_floor) {
            xs.push_back(std::log(cfg.boxes[b]));
            ys.push_back(std::log(mean));
          }
        }
        const LineFit fit = fit_line(xs, ys);
        nlohmann::ordered_json f;
        f["E"] = energies[ei];
        f["delta"] = deltas[di];
        f["L_slope"] = fit.slope;
        f["L_slope_ci"] = fit.slope_ci;
        l_fits.push_back(f);
      }
      report.curves.push_back(std::move(curve));
    }
  }
  report.summary["delta_fits"] = fits;
  report.summary["L_fits"] = l_fits;
  report.wall_seconds = seconds_since(t0);
  return report;
}

// ---------------------------------------------------------------------------
// ise_mc: band-edge interval hits and the thin-density event A_{s,L}
// ---------------------------------------------------------------------------

ExperimentReport run_ise(const RunManifest& manifest) {
  const auto t0 = Clock::now();
  const ExperimentConfig& cfg = manifest.config;
  if (!cfg.ise.e0_set)
    throw ConfigError("ise.e0 is required (take the upper edge of a gap-scan candidate)");
  const double e0 = cfg.ise.e0;
  const int R = cfg.realizations;
  const std::vector<double>& c3s = cfg.ise.c3;
  if (c3s.empty()) throw ConfigError("ise.c3 must not be empty");

  struct Cell {
    Eigen::Index window_count = 0;
    bool all_below = false;
    double s = 0;
  };
  // data[r][b][c]
  std::vector<std::vector<std::vector<Cell>>> data(static_cast<std::size_t>(R));

  parallel_for(R, resolve_workers(cfg.workers), [&](int r) {
    auto& per_box = data[static_cast<std::size_t>(r)];
    per_box.resize(cfg.boxes.size());
    for (std::size_t b = 0; b < cfg.boxes.size(); ++b) {
      const double L = cfg.boxes[b];
      const RadiiField radii = field_for(cfg, L, static_cast<std::uint64_t>(r));
      const SparseSymmetricOperator op = build_box_operator(cfg, L, cfg.coefficient, radii);
      std::map<double, Eigen::Index> below;
      auto cumulative = [&](double e) {
        auto it = below.find(e);
        if (it != below.end()) return it->second;
        const Eigen::Index c = count_below(op, e).count;
        below[e] = c;
        return c;
      };
      for (double c3 : c3s) {
        Cell cell;
        const double width = std::pow(L, -c3);
        cell.window_count = cumulative(e0 + width) - cumulative(e0);
        if (cfg.oracle_dense) {
          if (op.grid.n() > oracle::kMaxDenseNodes)
            throw ConfigError("--oracle-dense requires grids of at most 12^d nodes");
          if (oracle::count_in_window(op, e0, e0 + width) != cell.window_count)
            throw InvariantViolation("oracle mismatch in ise window count");
        }
        cell.s = std::pow(L, -c3 / cfg.ise.tau);
        cell.all_below = true;
        for (double v : radii.values)
          if (v >= cfg.model.omega_plus - cell.s) {
            cell.all_below = false;
            break;
          }
        per_box[b].push_back(cell);
      }
    }
  });

  ExperimentReport report = make_report("ise", manifest);
  report.records.columns = {"realization", "L", "c3", "window_count", "hit", "s", "all_below"};
  for (int r = 0; r < R; ++r)
    for (std::size_t b = 0; b < cfg.boxes.size(); ++b)
      for (std::size_t c = 0; c < c3s.size(); ++c) {
        const Cell& cell = data[static_cast<std::size_t>(r)][b][c];
        report.records.rows.push_back({fmt_int(r), fmt_num(cfg.boxes[b]), fmt_num(c3s[c]),
                                       fmt_int(cell.window_count),
                                       fmt_int(cell.window_count > 0 ? 1 : 0), fmt_num(cell.s),
                                       fmt_int(cell.all_below ? 1 : 0)});
      }

  // per-realization nesting check along decreasing window width
  for (int r = 0; r < R; ++r)
    for (std::size_t b = 0; b < cfg.boxes.size(); ++b) {
      std::vector<std::size_t> order(c3s.size());
      for (std::size_t c = 0; c < c3s.size(); ++c) order[c] = c;
      const double L = cfg.boxes[b];
      std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return std::pow(L, -c3s[x]) > std::pow(L, -c3s[y]);
      });
      bool prev_hit = true;
      for (std::size_t c : order) {
        const bool hit = data[static_cast<std::size_t>(r)][b][c].window_count > 0;
        if (hit && !prev_hit)
          throw InvariantViolation("ise: interval hits not nested across window widths");
        prev_hit = hit;
      }
    }

  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (std::size_t b = 0; b < cfg.boxes.size(); ++b) {
    const double L = cfg.boxes[b];
    const auto n_cells = static_cast<double>(
        field_for(cfg, L, 0).cell_count());
    Curve hit_curve;
    hit_curve.name = box_tag(L) + "_hit";
    hit_curve.columns = {"c3", "p_hit", "ci_low", "ci_high"};
    Curve event_curve;
    event_curve.name = box_tag(L) + "_event";
    event_curve.columns = {"c3", "p_emp", "p_closed_form", "p_union_bound"};
    for (std::size_t c = 0; c < c3s.size(); ++c) {
      int hits = 0, events = 0;
      for (int r = 0; r < R; ++r) {
        hits += data[static_cast<std::size_t>(r)][b][c].window_count > 0 ? 1 : 0;
        events += data[static_cast<std::size_t>(r)][b][c].all_below ? 1 : 0;
      }
      const ProportionCI hit_ci = wilson_interval(hits, R);
      const double s = data[0][b][c].s;
      const double tail = density_tail_mass(cfg.model, s);
      const double closed = std::pow(1.0 - tail, n_cells);
      const double kappa =
          cfg.model.density.kind == DensityKind::PolynomialThin ? cfg.model.density.kappa : 1.0;
      // union bound over the (L/eps)^d cells: 1 - #cells-ish * tail
      const double union_bound =
          1.0 - std::pow(L / cfg.model.epsilon, cfg.model.d) * std::pow(s, kappa);
      hit_curve.rows.push_back({c3s[c], hit_ci.estimate, hit_ci.lo, hit_ci.hi});
      const double p_emp = static_cast<double>(events) / R;
      event_curve.rows.push_back({c3s[c], p_emp, closed, union_bound});
      nlohmann::ordered_json cell;
      cell["L"] = L;
      cell["c3"] = c3s[c];
      cell["p_hit"] = hit_ci.estimate;
      cell["p_hit_ci"] = {hit_ci.lo, hit_ci.hi};
      cell["s"] = s;
      cell["p_event_empirical"] = p_emp;
      cell["p_event_closed_form"] = closed;
      cell["p_event_union_bound"] = union_bound;
      const double sigma = std::sqrt(std::max(closed * (1.0 - closed), 1e-300) / R);
      cell["event_deviation_sigmas"] = (p_emp - closed) / sigma;
      cell["thinness_constant"] =
          std::pow(cfg.model.omega_plus - cfg.model.omega_minus, -kappa);
      cells.push_back(cell);
    }
    report.curves.push_back(std::move(hit_curve));
    report.curves.push_back(std::move(event_curve));
  }
  report.summary["e0"] = e0;
  report.summary["tau"] = cfg.ise.tau;
  report.summary["c4"] = cfg.ise.c4;
  report.summary["cells"] = cells;
  report.wall_seconds = seconds_since(t0);
  return report;
}

}  // namespace hclab
