#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hclab/dense_oracle.hpp"
#include "hclab/experiments.hpp"

using namespace hclab;

namespace {

// small, fast, oracle-checkable configuration shared by the driver tests
RunManifest small_manifest(const std::string& extra = "") {
  return parse_config_text(
      "model.epsilon = 0.25\n"
      "model.omega_minus = 0.1\n"
      "model.omega_plus = 0.18\n"
      "run.realizations = 4\n"
      "run.master_seed = 31\n"
      "run.oracle_dense = true\n"
      "grid.h = 0.1\n"
      "grid.allow_underresolved = true\n" +
      extra);
}

}  // namespace

TEST_CASE("parallel_for matches serial execution and propagates errors") {
  std::vector<int> serial(40, 0), parallel(40, 0);
  for (int i = 0; i < 40; ++i) serial[static_cast<std::size_t>(i)] = i * i;
  parallel_for(40, 4, [&](int i) { parallel[static_cast<std::size_t>(i)] = i * i; });
  CHECK(parallel == serial);
  CHECK_THROWS_AS(parallel_for(8, 3,
                               [](int i) {
                                 if (i >= 4) throw InvariantViolation("boom");
                               }),
                  InvariantViolation);
}

TEST_CASE("weyl ceiling bounds the assembled operator counts") {
  const RunManifest m = small_manifest();
  const RadiiField radii = field_for(m.config, 1.0, 0);
  const auto op = build_box_operator(m.config, 1.0, CoefficientKind::Layered, radii);
  const Eigen::VectorXd dense = oracle::eigenvalues(op);
  for (double e : {5.0, 20.0, 100.0, 1000.0}) {
    Eigen::Index below = 0;
    for (Eigen::Index i = 0; i < dense.size(); ++i)
      if (dense[i] <= e) ++below;
    CHECK(below <= weyl_ceiling(m.config, op.grid, e));
  }
}

TEST_CASE("resolution policy blocks under-resolved media unless overridden") {
  RunManifest m = small_manifest();
  m.config.allow_underresolved = false;
  const RadiiField radii = field_for(m.config, 1.0, 0);
  CHECK_THROWS_AS(build_box_operator(m.config, 1.0, CoefficientKind::Layered, radii),
                  ConfigError);
  // the unit coefficient has no layer to resolve
  CHECK_NOTHROW(build_box_operator(m.config, 1.0, CoefficientKind::Unit, radii));
}

TEST_CASE("gap-scan control run: unit coefficient has no interior gap") {
  // Dirichlet Laplacian spectra over growing boxes fill in; with the
  // reporting width set above the largest analytic spacing, the only empty
  // interval is the leading one below lambda_min.
  RunManifest m = small_manifest(
      "experiment.coefficient = unit\n"
      "experiment.boxes = 1 1.5 2\n"
      "run.realizations = 1\n"
      "gap.e_max = 120\n");
  // largest spacing of the union of analytic spectra, computed per box
  std::vector<double> all;
  for (double L : {1.0, 1.5, 2.0}) {
    const Grid g = grid_for(m.config, L);
    for (int i = 1; i <= g.per_axis; ++i)
      for (int j = 1; j <= g.per_axis; ++j) {
        const double si = std::sin(0.5 * M_PI * i * g.h / L);
        const double sj = std::sin(0.5 * M_PI * j * g.h / L);
        const double v = 4.0 / (g.h * g.h) * (si * si + sj * sj);
        if (v <= 120.0) all.push_back(v);
      }
  }
  std::sort(all.begin(), all.end());
  double max_spacing = 0;
  for (std::size_t i = 0; i + 1 < all.size(); ++i)
    max_spacing = std::max(max_spacing, all[i + 1] - all[i]);
  m.config.gap.min_gap_width = max_spacing * 1.01;
  m.entries["gap.min_gap_width"] = fmt_num(m.config.gap.min_gap_width);

  const ExperimentReport report = run_gap_scan(m);
  const auto& candidates = report.summary.at("gap_candidates");
  REQUIRE(candidates.size() == 1);  // only the interval below lambda_min
  CHECK(candidates[0].at("lo").get<double>() == 0.0);
  CHECK(candidates[0].at("hi").get<double>() == doctest::Approx(all.front()));
}

TEST_CASE("gap-scan: coupled boxes nest and report stable candidates") {
  RunManifest m = small_manifest(
      "experiment.boxes = 1 1.5\n"
      "gap.e_max = 40\n"
      "run.realizations = 2\n");
  const ExperimentReport report = run_gap_scan(m);
  CHECK(report.records.rows.size() > 0);
  // stability entries cover every prefix of the box list
  for (const auto& cand : report.summary.at("gap_candidates"))
    CHECK(cand.at("stability").size() == 2);
}

TEST_CASE("squeeze driver: zero violations on random media") {
  RunManifest m = small_manifest(
      "squeeze.k_count = 6\n"
      "run.realizations = 3\n");
  const ExperimentReport report = run_squeeze(m);
  CHECK(report.summary.at("violations").get<int>() == 0);
  CHECK(report.summary.at("min_k1_margin").get<double>() > 0.0);
  CHECK(report.records.rows.size() == 3 * 6);
}

TEST_CASE("lifting driver: monotone nonnegative lifts and positive tau") {
  RunManifest m = small_manifest(
      "lifting.k_count = 3\n"
      "run.realizations = 3\n");
  const ExperimentReport report = run_lifting(m);
  CHECK(report.summary.at("violations").get<int>() == 0);
  CHECK(report.summary.at("tau_hat").get<double>() > 0.0);
  // one record per (realization, k, shift)
  CHECK(report.records.rows.size() == 3 * 3 * 5);
}

TEST_CASE("wegner driver: counts match dense and means are monotone") {
  RunManifest m = small_manifest(
      "wegner.energies = 25 45\n"
      "wegner.deltas = 0.5 1 2 4\n"
      "run.realizations = 6\n");
  const ExperimentReport report = run_wegner(m);
  // monotonicity is asserted inside the driver; spot-check the fit output
  const auto& fits = report.summary.at("delta_fits");
  CHECK(fits.size() == 2);
  for (const auto& fit : fits) CHECK(std::isfinite(fit.at("delta_slope").get<double>()));
}

TEST_CASE("ise driver: empirical event probability matches the closed form") {
  RunManifest m = small_manifest(
      "model.density.kind = polynomial_thin\n"
      "model.density.kappa = 2\n"
      "experiment.boxes = 1.5 2\n"
      "run.realizations = 64\n"
      "run.oracle_dense = false\n"
      "ise.e0 = 2.4\n"
      "ise.c3 = 0.5 1 1.5\n"
      "ise.tau = 1\n");
  const ExperimentReport report = run_ise(m);
  // probability of the window hit is nonincreasing in c3 (nested windows)
  for (const auto& curve : report.curves) {
    if (curve.name.find("_hit") == std::string::npos) continue;
    double prev = 2.0;
    for (const auto& row : curve.rows) {
      CHECK(row[1] <= prev + 1e-12);
      prev = row[1];
    }
  }
  for (const auto& cell : report.summary.at("cells"))
    CHECK(std::abs(cell.at("event_deviation_sigmas").get<double>()) < 4.0);
}

TEST_CASE("combes-thomas driver: negative slopes steepen with the gap") {
  RunManifest m = small_manifest(
      "experiment.boxes = 1.5\n"
      "run.realizations = 2\n"
      "ct.gap_fractions = 0.5 1\n");
  const ExperimentReport report = run_combes_thomas(m);
  const auto& fits = report.summary.at("fits");
  REQUIRE(fits.size() == 2);
  const double s0 = fits[0].at("slope").get<double>();
  const double s1 = fits[1].at("slope").get<double>();
  CHECK(s0 < 0.0);
  CHECK(s1 < s0);
}

TEST_CASE("suitability driver: below-spectrum energies are suitable") {
  RunManifest m = small_manifest(
      "experiment.boxes = 1.5\n"
      "run.realizations = 3\n"
      "suit.e0 = 0.05\n"
      "suit.theta = 4.5\n"
      "suit.e_grid = 3\n");
  const ExperimentReport report = run_suitability(m);
  const auto& per_l = report.summary.at("per_L");
  REQUIRE(per_l.size() == 1);
  // far below the spectrum the Combes-Thomas regime makes every probe pass
  CHECK(per_l[0].at("p_suitable").get<double>() == 1.0);
}

TEST_CASE("projector driver: HS blocks match the dense projector") {
  RunManifest m = small_manifest(
      "experiment.boxes = 1.5\n"
      "run.realizations = 2\n"
      "projector.window_lo = 0\n"
      "projector.window_hi = 30\n");
  const ExperimentReport report = run_projector_decay(m);
  CHECK(report.summary.at("empty_window_realizations").get<int>() == 0);
  CHECK(report.summary.at("zeta_hat").get<double>() > 0.0);
}

TEST_CASE("projector driver: empty windows are reported, not errors") {
  RunManifest m = small_manifest(
      "experiment.boxes = 1.5\n"
      "run.realizations = 2\n"
      "run.oracle_dense = false\n"
      "projector.window_lo = 0.001\n"
      "projector.window_hi = 0.002\n");
  const ExperimentReport report = run_projector_decay(m);
  CHECK(report.summary.at("empty_window_realizations").get<int>() == 2);
}

TEST_CASE("dynamics driver: finite moments, conserved norm, spreading control") {
  RunManifest m = small_manifest(
      "experiment.boxes = 1.5\n"
      "run.realizations = 2\n"
      "dyn.times = 0 0.5 1\n"
      "dyn.window_lo = 0\n"
      "dyn.window_hi = 40\n");
  const ExperimentReport report = run_dynamics(m);
  CHECK(report.summary.at("skipped_realizations").get<int>() == 0);
  CHECK(report.summary.at("sup_moment_medium").get<double>() > 0.0);
  for (const auto& row : report.records.rows) {
    const double drift = std::stod(row[4]);
    CHECK(drift <= 1e-7);
  }
}

TEST_CASE("driver records are byte-identical across reruns and worker counts") {
  RunManifest m = small_manifest(
      "wegner.energies = 30\n"
      "wegner.deltas = 0.5 1 2\n"
      "run.realizations = 6\n");
  m.config.workers = 1;
  const std::string first = records_csv(run_wegner(m));
  m.config.workers = 3;
  const std::string second = records_csv(run_wegner(m));
  CHECK(first == second);
  const std::string third = records_csv(run_wegner(m));
  CHECK(second == third);
}

TEST_CASE("unknown driver name is a configuration error") {
  const RunManifest m = small_manifest();
  CHECK_THROWS_AS(run_driver("not-a-driver", m), ConfigError);
  CHECK(is_driver("wegner"));
  CHECK(!is_driver("selftest"));
}

TEST_CASE("lifting on a one-cell toy matches the dense-oracle curve") {
  // single inclusion in a small box; engine lifts vs dense eigenvalues
  RunManifest m = small_manifest(
      "experiment.boxes = 0.25\n"
      "grid.h = 0.019230769230769232\n"  // 0.25/13: 12 nodes per axis
      "run.realizations = 1\n"
      "lifting.k_count = 2\n");
  const ExperimentReport report = run_lifting(m);  // oracle mode checks every solve
  CHECK(report.summary.at("violations").get<int>() == 0);
  // reproduce the delta curve independently with the dense path
  const auto& cfg = m.config;
  const RadiiField radii = field_for(cfg, 0.25, 0);
  const Eigen::VectorXd base = oracle::eigenvalues(
      build_box_operator(cfg, 0.25, CoefficientKind::Layered, radii));
  for (const auto& row : report.records.rows) {
    const double s = std::stod(row[2]);
    if (s == 0.0) continue;
    const int k = std::stoi(row[1]);
    const RadiiField shrunk = shift_radii(cfg.model, radii, -s);
    const Eigen::VectorXd lifted = oracle::eigenvalues(
        build_box_operator(cfg, 0.25, CoefficientKind::Layered, shrunk));
    const double expected = lifted[k - 1] - base[k - 1];
    CHECK(std::stod(row[4]) == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("wegner windows below the spectrum report zero mean count") {
  RunManifest m = small_manifest(
      "wegner.energies = 0.5\n"
      "wegner.deltas = 0.05 0.1 0.2\n"
      "run.realizations = 4\n");
  const ExperimentReport report = run_wegner(m);
  for (const auto& row : report.records.rows) CHECK(row[4] == "0");
}

TEST_CASE("suitability probability is monotone when theta decreases") {
  // the event norm <= L^-theta nests: smaller theta accepts more
  const std::string common =
      "experiment.boxes = 1.5\n"
      "run.realizations = 4\n"
      "run.oracle_dense = false\n"
      "suit.e0 = 2.0\n"
      "suit.e_grid = 3\n";
  RunManifest strict = small_manifest(common + "suit.theta = 7\n");
  RunManifest loose = small_manifest(common + "suit.theta = 4.2\n");
  const double p_strict =
      run_suitability(strict).summary.at("per_L")[0].at("p_suitable").get<double>();
  const double p_loose =
      run_suitability(loose).summary.at("per_L")[0].at("p_suitable").get<double>();
  CHECK(p_loose >= p_strict);
}

TEST_CASE("projector diagonal blocks sum below the projector rank") {
  // unit boxes at integer corners partition Lambda_2
  RunManifest m = small_manifest(
      "experiment.boxes = 2\n"
      "run.realizations = 1\n"
      "run.oracle_dense = false\n"
      "projector.window_lo = 0\n"
      "projector.window_hi = 30\n");
  const auto& cfg = m.config;
  const RadiiField radii = field_for(cfg, 2.0, 0);
  const auto op = build_box_operator(cfg, 2.0, CoefficientKind::Layered, radii);
  const EigenSet set = eigenpairs_in_window(op, 0.0, 30.0, solver_options(cfg));
  REQUIRE(set.values.size() > 0);
  double diag_sum = 0.0;
  for (int bx = 0; bx < 2; ++bx)
    for (int by = 0; by < 2; ++by) {
      const IndexMask mask = mask_for_region(
          op.grid, Region::open_box(Point{static_cast<double>(bx), static_cast<double>(by), 0},
                                    1.0));
      Eigen::MatrixXd sub(mask.indices.size(), set.vectors.cols());
      for (std::size_t i = 0; i < mask.indices.size(); ++i)
        sub.row(static_cast<Eigen::Index>(i)) = set.vectors.row(mask.indices[i]);
      const Eigen::MatrixXd gram = sub.transpose() * sub;
      diag_sum += (gram * gram).trace();  // |chi_x P chi_x|_HS^2
    }
  CHECK(diag_sum <= static_cast<double>(set.values.size()) + 1e-9);
}

TEST_CASE("empty sweeps emit header-only plot files") {
  ExperimentReport report;
  report.driver = "probe";
  report.manifest = small_manifest();
  Curve empty;
  empty.name = "empty_sweep";
  empty.columns = {"x", "y"};
  report.curves.push_back(empty);
  write_report(report, "plotdata_test_out");
  std::ifstream in("plotdata_test_out/probe_empty_sweep.tsv");
  REQUIRE(in.good());
  int data_lines = 0;
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') ++data_lines;
  CHECK(data_lines == 0);
  std::filesystem::remove_all("plotdata_test_out");
}
