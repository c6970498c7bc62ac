#include <CLI11.hpp>
#include <cstdio>
#include <exception>

#include "hclab/experiments.hpp"
#include "hclab/version.hpp"

namespace {

// exit statuses: 0 success, 2 assertion/invariant failure, 3 configuration error
constexpr int kExitOk = 0;
constexpr int kExitAssertion = 2;
constexpr int kExitConfig = 3;

int run(const std::string& subcommand, const std::string& config_path,
        const std::string& out_override, bool oracle_dense, int workers,
        const std::string& dump_path) {
  if (subcommand == "selftest") return hclab::run_selftest();

  hclab::RunManifest manifest = hclab::parse_config(config_path);
  if (oracle_dense) {
    manifest.config.oracle_dense = true;
    manifest.entries["run.oracle_dense"] = "true";
  }
  if (workers > 0) {
    manifest.config.workers = workers;
    manifest.entries["run.workers"] = std::to_string(workers);
  }
  const std::string out_dir =
      out_override.empty() ? manifest.config.output_dir : out_override;

  if (!dump_path.empty()) {
    const auto& cfg = manifest.config;
    const hclab::RadiiField radii = hclab::field_for(cfg, cfg.boxes.front(), 0);
    const auto op =
        hclab::build_box_operator(cfg, cfg.boxes.front(), cfg.coefficient, radii);
    hclab::write_matrix_market(op, dump_path);
    std::printf("wrote %s (%ld x %ld, %ld nonzeros)\n", dump_path.c_str(),
                static_cast<long>(op.mat.rows()), static_cast<long>(op.mat.cols()),
                static_cast<long>(op.mat.nonZeros()));
  }

  const hclab::ExperimentReport report = hclab::run_driver(subcommand, manifest);
  hclab::write_report(report, out_dir);
  std::printf("%s: %zu records, %.2fs, reports in %s/\n", report.driver.c_str(),
              report.records.rows.size(), report.wall_seconds, out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectral laboratory for high-contrast random media"};
  app.set_version_flag("--version", hclab::kToolVersion);
  app.require_subcommand(1);

  std::string config_path, out_override, dump_path;
  bool oracle_dense = false;
  int workers = 0;

  std::vector<CLI::App*> subs;
  for (const std::string& name : hclab::driver_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " driver");
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--out", out_override, "output directory (overrides run.output_dir)");
    sub->add_flag("--oracle-dense", oracle_dense,
                  "cross-check every spectral quantity against the dense oracle");
    sub->add_option("--workers", workers, "worker threads (overrides run.workers)");
    sub->add_option("--dump-operator", dump_path,
                    "write the first realization's operator in Matrix Market format");
    subs.push_back(sub);
  }
  CLI::App* selftest = app.add_subcommand("selftest", "dense-oracle suite on small grids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help/--version
    app.exit(e);
    return kExitConfig;
  }

  std::string chosen;
  if (selftest->parsed()) chosen = "selftest";
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i]->parsed()) chosen = hclab::driver_names()[i];

  try {
    return run(chosen, config_path, out_override, oracle_dense, workers, dump_path);
  } catch (const hclab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitAssertion;
  }
}
