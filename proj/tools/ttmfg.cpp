#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "ttmfg/cubature.hpp"
#include "ttmfg/experiment.hpp"
#include "ttmfg/parallel.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kNotConverged = 3;
constexpr int kInvariant = 4;

int cmd_run(const std::string& path, const std::string& out, bool allow_long, const std::vector<std::string>& sets) {
  ttmfg::RunSpec spec = ttmfg::load_run_spec(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ttmfg::ConfigError("--set expects key=value, got '" + kv + "'");
    ttmfg::apply_setting(spec, ttmfg::detail::trim(kv.substr(0, eq)), ttmfg::detail::trim(kv.substr(eq + 1)));
  }
  if (!out.empty()) spec.output_dir = out;
  spec.validate();
  if (spec.long_running && !allow_long) {
    std::cerr << "ttmfg: '" << spec.name << "' is a long-running spec; pass --long to run it\n";
    return kUsage;
  }
  bool converged = true;
  for (int d : spec.dims) {
    const auto rep = ttmfg::run_dimension(spec, d);
    const std::string csv = ttmfg::write_report(rep, spec.output_dir);
    std::cout << "# " << spec.name << " d=" << d << " -> " << csv << "\n" << ttmfg::to_csv(rep);
    if (!rep.converged()) {
      converged = false;
      std::cerr << "ttmfg: policy iteration did not converge for d=" << d << " (rows flagged converged=0)\n";
    }
  }
  return converged ? kOk : kNotConverged;
}

int cmd_rules(const std::string& kind, int dim, double nu, double dt) {
  const auto rule = ttmfg::make_rule(ttmfg::parse_rule_kind(kind), dim, nu, dt);
  std::printf("# %s d=%d nu=%g dt=%g nodes=%zu\n", std::string(ttmfg::to_string(rule.kind)).c_str(), dim, nu, dt,
              rule.size());
  std::printf("weight");
  for (int k = 0; k < dim; ++k) std::printf(",xi%d", k + 1);
  std::printf("\n");
  for (std::size_t l = 0; l < rule.size(); ++l) {
    std::printf("%.17g", rule.weights[l]);
    for (double v : rule.node(l)) std::printf(",%.17g", v);
    std::printf("\n");
  }
  return kOk;
}

int cmd_verify(bool corrupt) {
  ttmfg::VerifyOptions opt;
  opt.corrupt_sl2p = corrupt;
  bool ok = true;
  std::printf("group,status,measured,threshold\n");
  for (const auto& g : ttmfg::verify(opt)) {
    std::printf("%s,%s,%.6e,%.6e\n", g.name.c_str(), g.passed ? "PASS" : "FAIL", g.measured, g.threshold);
    ok = ok && g.passed;
  }
  return ok ? kOk : kInvariant;
}

int cmd_report_fit(const std::string& dir) {
  const auto r = ttmfg::report_fit(dir);
  std::printf("# %s %s, %zu dimensions\n", r.benchmark.c_str(), r.rule.c_str(), r.dims.size());
  std::printf("%s", r.table().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-train semi-Lagrangian mean field game solver"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker count (default: TTMFG_THREADS or 1)")->check(CLI::PositiveNumber);

  auto* run = app.add_subcommand("run", "Run an experiment config");
  std::string cfg, out;
  bool allow_long = false;
  std::vector<std::string> sets;
  run->add_option("config", cfg, "Config file")->required();
  run->add_option("--out", out, "Output directory (overrides output_dir)");
  run->add_flag("--long", allow_long, "Allow long-running specs");
  run->add_option("--set", sets, "Override a key: --set key=value");
  run->add_option("--threads", threads, "Worker count")->check(CLI::PositiveNumber);

  auto* rules = app.add_subcommand("rules", "Cubature rules");
  auto* print = rules->add_subcommand("print", "Print nodes and weights");
  rules->require_subcommand(1);
  std::string kind = "sl2p";
  int dim = 2;
  double nu = 0.1, dt = 0.01;
  print->add_option("--kind", kind, "sl1, sl2e, sl2p or deterministic");
  print->add_option("--dim", dim, "Dimension")->check(CLI::PositiveNumber);
  print->add_option("--nu", nu, "Viscosity");
  print->add_option("--dt", dt, "Time step");

  auto* verify = app.add_subcommand("verify", "Run the cubature and TT invariant suites");
  bool corrupt = false;
  verify->add_flag("--corrupt-sl2p", corrupt, "Perturb one SL2p weight (mutation check)");

  auto* fit = app.add_subcommand("report-fit", "Fit run time against dimension");
  std::string dir;
  fit->add_option("dir", dir, "Directory of report manifests")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (threads > 0) ttmfg::set_worker_count(threads);

  try {
    if (*run) return cmd_run(cfg, out, allow_long, sets);
    if (*print) return cmd_rules(kind, dim, nu, dt);
    if (*verify) return cmd_verify(corrupt);
    if (*fit) return cmd_report_fit(dir);
  } catch (const ttmfg::ConfigError& e) {
    std::cerr << "ttmfg: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "ttmfg: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
