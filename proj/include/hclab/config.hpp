#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hclab/medium.hpp"

namespace hclab {

enum class CoefficientKind { Layered, Sharp, Unit };

// Resolved experiment configuration. Every field has a config key; all
// randomness flows from run.master_seed.
struct ExperimentConfig {
  ModelParams model;

  std::uint64_t master_seed = 1;
  int realizations = 20;
  int workers = 0;  // 0 = auto (bounded by hardware)
  std::string output_dir = "out";
  bool oracle_dense = false;

  double grid_h = 0.0;  // 0 = resolution policy h = eps^gamma/8
  bool allow_underresolved = false;
  bool sharp_harmonic = false;  // harmonic face rule for the sharp coefficient

  std::vector<double> boxes{1.0};
  CoefficientKind coefficient = CoefficientKind::Layered;

  int max_pairs = 200;
  double tol_eig = 1e-12;
  int max_terms = 200000;

  struct {
    double e_max = 20.0;
    double min_gap_width = 0.5;
  } gap;
  struct {
    int k_count = 10;
  } squeeze;
  struct {
    int k_count = 5;
    std::vector<double> shifts;  // empty = {0, s0/8, s0/4, s0/2, s0}
  } lifting;
  struct {
    std::vector<double> energies{12.0};
    std::vector<double> deltas;  // empty = energies[0] * 2^-8 .. 2^-3
  } wegner;
  struct {
    double e0 = 0.0;
    bool e0_set = false;
    std::vector<double> c3{0.5, 1.0, 1.5};
    double c4 = 2.0;
    double tau = 1.0;
  } ise;
  struct {
    std::vector<double> gap_fractions{0.5, 1.0};
  } ct;
  struct {
    double theta = 5.0;
    double e0 = 0.0;
    bool e0_set = false;
    int e_grid = 5;
  } suit;
  struct {
    double window_lo = 0.0;
    double window_hi = 0.0;
    bool window_set = false;
  } projector;
  struct {
    std::vector<double> times{0.0, 0.5, 1.0, 2.0};
    int moment_order = 2;
    double window_lo = 0.0;
    double window_hi = 0.0;
    bool window_set = false;
  } dyn;

  double resolved_h() const;  // grid_h or the policy value
  std::vector<double> lifting_shifts() const;
  std::vector<double> wegner_deltas() const;
};

// Parsed config file plus resolved defaults. `entries` holds the full
// resolved key -> value map (raw strings, sorted); it is embedded verbatim
// in every report.
struct RunManifest {
  std::map<std::string, std::string> entries;
  std::vector<std::string> warnings;
  std::string config_path;
  std::string tool_version;
  ExperimentConfig config;
};

RunManifest parse_config(const std::string& path);
RunManifest parse_config_text(const std::string& text, const std::string& name = "<memory>");

// key = value lines, sorted by key; parse(emit(m)) reproduces m.entries
std::string emit_manifest(const RunManifest& m);

// full sorted list of known keys with their default values
const std::map<std::string, std::string>& default_config_entries();

}  // namespace hclab
