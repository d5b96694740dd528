#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "boltz/entropy.hpp"
#include "boltz/functions.hpp"
#include "boltz/kernel.hpp"
#include "boltz/metric_norms.hpp"
#include "boltz/quadrature.hpp"
#include "boltz/weakform.hpp"

namespace boltz {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// INI-style configuration: [section] headers followed by key = value lines;
// '#' and ';' start comments. Section and key names are case-sensitive.
// Unknown sections or keys are rejected at Scenario construction.
struct ConfigFile {
  std::vector<std::pair<std::string, std::map<std::string, std::string>>>
      sections;

  static ConfigFile parse_string(const std::string& text);
  static ConfigFile load(const std::string& path);

  const std::map<std::string, std::string>* find(
      const std::string& name) const;
};

struct NamedFunction {
  std::string name;
  FunctionRep rep;
};

struct ChecksSpec {
  // subset of {"upper", "lower", "entropy", "identities"}
  std::vector<std::string> run{"identities"};
  int k_min = -2;
  int k_max = 6;
  // append the built-in 12-mixture family to the f list
  bool use_family = false;
};

struct Scenario {
  KernelParams kernel;
  QuadratureSpec quad;
  double radius_r = 1.0;    // assumption L ball radius
  double radius_delta = 0.5;  // assumption L tube radius

  Density g;
  FunctionRep g_rep;          // mixture behind g (empty if indicator)
  bool g_is_indicator = false;

  std::vector<NamedFunction> fs, hs;
  ChecksSpec checks;

  static Scenario from_config(const ConfigFile& cfg);

  const FunctionRep* find_function(const std::string& name) const;
};

// Canonical 12-mixture test family: offsets, widths, and (for the last four)
// a negative secondary lobe. Members 1-8 are strictly positive.
std::vector<NamedFunction> mixture_family(int n);

struct CheckRow {
  std::string check;
  std::string case_name;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  double error_bound = 0.0;
  double drift = 0.0;
  bool pass = false;
};

struct PlotTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct VerificationReport {
  std::vector<CheckRow> rows;
  std::vector<PlotTable> plots;
  // derived constants, name -> value (C', C_g, C~_g, surrogates, ...)
  std::vector<std::pair<std::string, double>> constants;
  std::uint64_t seed = 0;
  int threads = 0;
};

// Ratio entries with both sides below this magnitude are excluded from
// min/max statistics (degenerate 0/0).
inline constexpr double kRatioFloor = 1e-10;

std::vector<CheckRow> verify_upper(const Scenario& sc,
                                   VerificationReport* report = nullptr);
std::vector<CheckRow> verify_lower(const Scenario& sc,
                                   VerificationReport* report = nullptr);
std::vector<CheckRow> verify_entropy(const Scenario& sc,
                                     VerificationReport* report = nullptr);
std::vector<CheckRow> verify_identities(const Scenario& sc,
                                        VerificationReport* report = nullptr);

// Runs the checks listed in `which` ("all" expands to the four above) in a
// fixed order and assembles the report.
VerificationReport run_checks(const Scenario& sc,
                              const std::vector<std::string>& which);

// Writes one CSV per check (columns check, case, lhs, rhs, ratio,
// error_bound, drift, pass), one CSV per plot table, and summary.json into
// out_dir (created if missing). All numbers are printed with %.17g.
void write_report(const VerificationReport& report, const std::string& out_dir);

std::string format_g17(double x);

}  // namespace boltz
