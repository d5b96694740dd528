#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "boltz/harness.hpp"
#include "boltz/reduction.hpp"

using namespace boltz;

namespace {

const char* kSmallConfig = R"(
# comment line
[kernel]
n = 2
gamma = 0.0
s = 0.25          ; trailing comment

[quadrature]
backend = deterministic
outer_nodes = 10
outer_panels = 2
nodes_per_cell = 5
dyadic_depth = 10
sphere_azimuth = 12
r_infinity = 6
seed = 99

[assumptions]
radius_r = 1.0
delta = 0.5

[checks]
run = lower
k_min = -1
k_max = 1

[functions.g]
type = maxwellian
rho = 1.0
u = 0.0 0.0
temp = 1.0

[functions.f1]
type = gaussian
amp = 1.0
center = 0.2 -0.1 0.0
beta = 1.5

[functions.f2]
type = mixture
components = 2
amp_1 = 0.7
center_1 = 0.3 0.0 0.0
beta_1 = 2.0
amp_2 = 0.3
center_2 = -0.3 0.1 0.0
beta_2 = 1.0

[functions.h1]
type = gaussian
amp = 0.8
center = 0.0 0.3 0.0
beta = 1.2
)";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("config parsing round trip") {
  ConfigFile cfg = ConfigFile::parse_string(kSmallConfig);
  const auto* kernel = cfg.find("kernel");
  REQUIRE(kernel != nullptr);
  CHECK(kernel->at("n") == "2");
  CHECK(kernel->at("s") == "0.25");  // trailing comment stripped
  REQUIRE(cfg.find("functions.f2") != nullptr);
  CHECK(cfg.find("functions.f2")->at("components") == "2");
  CHECK(cfg.find("nonexistent") == nullptr);

  Scenario sc = Scenario::from_config(cfg);
  CHECK(sc.kernel.n == 2);
  CHECK(sc.kernel.s == doctest::Approx(0.25));
  CHECK(sc.quad.outer_nodes == 10);
  CHECK(sc.quad.seed == 99);
  CHECK(sc.fs.size() == 2);
  CHECK(sc.hs.size() == 1);
  CHECK(sc.checks.run == std::vector<std::string>{"lower"});
  CHECK(sc.find_function("f2") != nullptr);
  CHECK(sc.find_function("f2")->comps.size() == 2);
  CHECK(sc.find_function("zzz") == nullptr);
}

TEST_CASE("config rejects malformed input") {
  ConfigFile unknown_key = ConfigFile::parse_string(
      "[kernel]\nn = 2\nbogus = 1\n[functions.g]\ntype = ball\n"
      "[functions.f1]\ntype = gaussian\n");
  CHECK_THROWS_AS(Scenario::from_config(unknown_key), ConfigError);

  ConfigFile unknown_section = ConfigFile::parse_string(
      "[mystery]\nx = 1\n[functions.g]\ntype = ball\n");
  CHECK_THROWS_AS(Scenario::from_config(unknown_section), ConfigError);

  CHECK_THROWS_AS(ConfigFile::parse_string("key_outside_section = 1\n"),
                  ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse_string("[a]\nno equals sign here\n"),
                  ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse_string("[a]\nx = 1\nx = 2\n"),
                  ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse_string("[a]\n[a]\n"), ConfigError);

  ConfigFile bad_radius = ConfigFile::parse_string(
      "[assumptions]\nradius_r = 0.4\ndelta = 0.5\n"
      "[functions.g]\ntype = ball\n[functions.f1]\ntype = gaussian\n");
  CHECK_THROWS_AS(Scenario::from_config(bad_radius), ConfigError);

  ConfigFile no_g = ConfigFile::parse_string(
      "[functions.f1]\ntype = gaussian\n");
  CHECK_THROWS_AS(Scenario::from_config(no_g), ConfigError);

  ConfigFile bad_type = ConfigFile::parse_string(
      "[functions.g]\ntype = cauchy\n[functions.f1]\ntype = gaussian\n");
  CHECK_THROWS_AS(Scenario::from_config(bad_type), ConfigError);
}

TEST_CASE("mixture family shape") {
  for (int n : {2, 3}) {
    auto fam = mixture_family(n);
    REQUIRE(fam.size() == 12);
    for (int i = 0; i < 8; ++i)
      for (const auto& c : fam[i].rep.comps) CHECK(c.amp > 0.0);
    for (int i = 8; i < 12; ++i) {
      bool has_negative = false;
      for (const auto& c : fam[i].rep.comps)
        has_negative = has_negative || c.amp < 0.0;
      CHECK(has_negative);
      CHECK(fam[i].rep.comps.front().amp > 0.0);
    }
    for (const auto& nf : fam) {
      CHECK(nf.rep.n == n);
      CHECK(nf.rep.support_radius() > 0.0);
    }
  }
}

TEST_CASE("format_g17 round trips doubles") {
  for (double x : {0.1, -3.0, 1e-17, 123456.789012345678, 0.0}) {
    CHECK(std::stod(format_g17(x)) == x);
  }
}

TEST_CASE("verify_lower produces a report and CSV output") {
  Scenario sc = Scenario::from_config(ConfigFile::parse_string(kSmallConfig));
  VerificationReport report = run_checks(sc, sc.checks.run);
  REQUIRE(!report.rows.empty());
  bool has_min = false;
  for (const auto& row : report.rows) {
    CHECK(row.check == "lower");
    if (row.case_name == "min_ratio") {
      has_min = true;
      CHECK(row.ratio > 0.0);
      CHECK(row.drift < 0.5);
    }
  }
  CHECK(has_min);

  auto dir = std::filesystem::temp_directory_path() / "boltz_report_test";
  std::filesystem::remove_all(dir);
  write_report(report, dir.string());
  std::string csv = slurp(dir / "check_lower.csv");
  CHECK(csv.rfind("check,case,lhs,rhs,ratio,error_bound,drift,pass\n", 0) ==
        0);
  std::string json = slurp(dir / "summary.json");
  CHECK(json.find("\"seed\": 99") != std::string::npos);
  CHECK(json.find("\"C_tilde_g\"") != std::string::npos);
}

TEST_CASE("reports are byte-identical across thread counts") {
  Scenario sc = Scenario::from_config(ConfigFile::parse_string(kSmallConfig));
  // determinism is what matters here, not accuracy: shrink the quadrature
  sc.quad.outer_nodes = 6;
  sc.quad.outer_panels = 1;
  sc.quad.nodes_per_cell = 4;
  sc.quad.dyadic_depth = 8;
  sc.quad.sphere_azimuth = 8;
  sc.fs.resize(1);
  auto base = std::filesystem::temp_directory_path();
  set_worker_count(1);
  write_report(run_checks(sc, {"lower"}), (base / "boltz_rep_t1").string());
  set_worker_count(8);
  write_report(run_checks(sc, {"lower"}), (base / "boltz_rep_t8").string());
  CHECK(slurp(base / "boltz_rep_t1" / "check_lower.csv") ==
        slurp(base / "boltz_rep_t8" / "check_lower.csv"));
}
