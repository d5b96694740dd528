// Command-line driver: verification reports, norm evaluation, and direct
// evaluation of the trilinear collision form for functions declared in an
// INI config.
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "boltz/harness.hpp"
#include "boltz/reduction.hpp"

namespace {

boltz::Scenario load_scenario(const std::string& config_path, long long seed,
                              int threads, int refine) {
  boltz::Scenario sc =
      boltz::Scenario::from_config(boltz::ConfigFile::load(config_path));
  if (seed >= 0) sc.quad.seed = static_cast<std::uint64_t>(seed);
  if (threads > 0) boltz::set_worker_count(threads);
  for (int i = 0; i < refine; ++i) sc.quad = sc.quad.refined(1);
  return sc;
}

const boltz::FunctionRep& named_rep(const boltz::Scenario& sc,
                                    const std::string& name) {
  const boltz::FunctionRep* rep = sc.find_function(name);
  if (!rep)
    throw boltz::ConfigError("no mixture function named '" + name +
                             "' in config");
  return *rep;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boltzmann collision operator verification suite"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", check = "all", fn_name;
  std::string g_name = "g", f_name, h_name;
  long long seed = -1;
  int threads = 0, refine = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file path")->required();
    cmd->add_option("--seed", seed, "override quadrature seed");
    cmd->add_option("--threads", threads, "worker thread count");
    cmd->add_option("--refine", refine, "apply k quadrature refinements");
  };

  CLI::App* verify = app.add_subcommand("verify", "run verification checks");
  add_common(verify);
  verify->add_option("--check", check, "upper|lower|entropy|identities|all")
      ->check(CLI::IsMember({"upper", "lower", "entropy", "identities",
                             "all"}));
  verify->add_option("--out", out_dir, "output directory");

  CLI::App* norms = app.add_subcommand("norms", "evaluate norms of a function");
  add_common(norms);
  norms->add_option("--function", fn_name, "function name from the config")
      ->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a functional");
  CLI::App* tri = eval->add_subcommand("trilinear",
                                       "trilinear collision form <Q(g,f),h>");
  eval->require_subcommand(1);
  tri->set_help_flag("--help", "print help");  // frees -h/--h for the h slot
  add_common(tri);
  tri->add_option("--g", g_name, "density name (default: g)");
  tri->add_option("--f", f_name, "f function name")->required();
  tri->add_option("--h", h_name, "h function name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) {
      boltz::Scenario sc = load_scenario(config_path, seed, threads, refine);
      std::vector<std::string> which =
          check == "all" ? sc.checks.run : std::vector<std::string>{check};
      boltz::VerificationReport report = boltz::run_checks(sc, which);
      boltz::write_report(report, out_dir);
      bool ok = true;
      for (const auto& row : report.rows) {
        std::printf("%-10s %-24s %s\n", row.check.c_str(),
                    row.case_name.c_str(), row.pass ? "pass" : "FAIL");
        ok = ok && row.pass;
      }
      std::printf("report written to %s\n", out_dir.c_str());
      return ok ? 0 : 1;
    }
    if (*norms) {
      boltz::Scenario sc = load_scenario(config_path, seed, threads, refine);
      const boltz::FunctionRep& f = named_rep(sc, fn_name);
      boltz::SeminormSpec spec;
      spec.s = sc.kernel.s;
      spec.gamma = sc.kernel.gamma;
      double l2 = boltz::weighted_lp(f, {2.0, 0.0}, sc.quad);
      double l2w =
          boltz::weighted_lp(f, {2.0, sc.kernel.gamma + 2.0 * sc.kernel.s},
                             sc.quad);
      boltz::SeminormResult dot = boltz::seminorm_dot_n(f, spec, sc.quad);
      double full = boltz::norm_n_full(f, spec, sc.quad);
      double iso = boltz::iso_sobolev(f, sc.kernel.s, sc.kernel.gamma, sc.quad);
      std::printf("function          %s\n", fn_name.c_str());
      std::printf("L2                %s\n", boltz::format_g17(l2).c_str());
      std::printf("L2_weighted       %s\n", boltz::format_g17(l2w).c_str());
      std::printf("seminorm_dot      %s\n",
                  boltz::format_g17(dot.value).c_str());
      std::printf("norm_N            %s\n", boltz::format_g17(full).c_str());
      std::printf("iso_sobolev       %s\n", boltz::format_g17(iso).c_str());
      return 0;
    }
    if (*tri) {
      boltz::Scenario sc = load_scenario(config_path, seed, threads, refine);
      boltz::Density g = g_name == "g"
                             ? sc.g
                             : boltz::Density::from_rep(named_rep(sc, g_name));
      boltz::WeakResult res =
          boltz::trilinear_sigma(g, named_rep(sc, f_name),
                                 named_rep(sc, h_name), sc.kernel, sc.quad);
      std::printf("value  %s\n", boltz::format_g17(res.value).c_str());
      std::printf("error  %s\n", boltz::format_g17(res.error).c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
