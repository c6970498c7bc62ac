#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "hclab/config.hpp"

namespace hclab {

std::string fmt_num(double v);  // %.17g, the canonical number format of all artifacts

// One fitted or swept curve; emitted as a TSV with '#' header comments
// naming the axes and the fitted parameters.
struct Curve {
  std::string name;  // file stem suffix, e.g. "L1_delta"
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<std::string, std::string>> params;  // fitted values etc.
};

// Per-realization records with fixed columns; rows are preformatted so the
// CSV is byte-identical across reruns.
struct RecordTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

struct ExperimentReport {
  std::string driver;
  RunManifest manifest;
  RecordTable records;
  nlohmann::ordered_json summary;
  std::vector<Curve> curves;
  double wall_seconds = 0.0;
};

// writes <driver>_report.json, <driver>_records.csv and one TSV per curve
void write_report(const ExperimentReport& report, const std::string& out_dir);

std::string records_csv(const ExperimentReport& report);
nlohmann::ordered_json report_json(const ExperimentReport& report);

// least-squares line fit with a 95% confidence half-width on the slope
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_ci = 0.0;  // 1.96 * standard error
  int points = 0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Wilson 95% score interval for a binomial proportion
struct ProportionCI {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};
ProportionCI wilson_interval(int successes, int trials);

}  // namespace hclab
