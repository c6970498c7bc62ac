#include "hclab/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace hclab {

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string records_csv(const ExperimentReport& report) {
  std::string out = "# driver: " + report.driver + "\n# columns: ";
  for (std::size_t i = 0; i < report.records.columns.size(); ++i) {
    if (i) out += ", ";
    out += report.records.columns[i];
  }
  out += "\n";
  for (std::size_t i = 0; i < report.records.columns.size(); ++i) {
    if (i) out += ",";
    out += report.records.columns[i];
  }
  out += "\n";
  for (const auto& row : report.records.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ",";
      out += row[i];
    }
    out += "\n";
  }
  return out;
}

nlohmann::ordered_json report_json(const ExperimentReport& report) {
  nlohmann::ordered_json j;
  j["tool"] = report.manifest.tool_version;
  j["driver"] = report.driver;
  j["format_version"] = 1;
  nlohmann::ordered_json manifest;
  for (const auto& [key, value] : report.manifest.entries) manifest[key] = value;
  j["manifest"] = manifest;
  j["warnings"] = report.manifest.warnings;
  nlohmann::ordered_json records;
  records["columns"] = report.records.columns;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : report.records.rows) rows.push_back(row);
  records["rows"] = rows;
  j["records"] = records;
  j["summary"] = report.summary;
  j["wall_clock_s"] = report.wall_seconds;
  return j;
}

void write_report(const ExperimentReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / (report.driver + "_report.json"));
    out << report_json(report).dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(out_dir) / (report.driver + "_records.csv"));
    out << records_csv(report);
  }
  for (const auto& curve : report.curves) {
    std::ofstream out(fs::path(out_dir) / (report.driver + "_" + curve.name + ".tsv"));
    out << "# " << report.driver << " " << curve.name << "\n";
    out << "# columns:";
    for (const auto& c : curve.columns) out << " " << c;
    out << "\n";
    for (const auto& [key, value] : curve.params) out << "# " << key << ": " << value << "\n";
    for (const auto& row : curve.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << "\t";
        out << fmt_num(row[i]);
      }
      out << "\n";
    }
  }
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit fit;
  fit.points = static_cast<int>(x.size());
  if (x.size() != y.size() || x.size() < 2) return fit;
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (x.size() > 2) {
    double ss_res = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - (fit.intercept + fit.slope * x[i]);
      ss_res += r * r;
    }
    const double se = std::sqrt(ss_res / (n - 2.0) / sxx);
    fit.slope_ci = 1.96 * se;
  }
  return fit;
}

ProportionCI wilson_interval(int successes, int trials) {
  ProportionCI ci;
  if (trials <= 0) return ci;
  const double z = 1.959963984540054;
  const double n = trials;
  const double p = static_cast<double>(successes) / n;
  ci.estimate = p;
  const double denom = 1.0 + z * z / n;
  const double center = (p + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
  ci.lo = std::max(0.0, center - half);
  ci.hi = std::min(1.0, center + half);
  return ci;
}

}  // namespace hclab
