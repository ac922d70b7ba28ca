// qmemtime: decoherence-time analysis of linear quantum stochastic systems.
//
//   qmemtime <command> --config run.json [overrides]
//
// Commands: validate, simulate, tau, optimize-energy, optimize-coupling, sweep.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qmem/config.hpp"

namespace {

unsigned threads_from_env() {
  const char* env = std::getenv("QMEMTIME_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  try {
    const long v = std::stol(env);
    return v > 0 ? static_cast<unsigned>(v) : 0u;
  } catch (const std::exception&) {
    return 0;
  }
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoherence-time analysis of linear quantum stochastic systems"};
  app.set_version_flag("--version", "qmemtime 0.1.0");

  std::string command;
  std::string config_path;
  std::vector<double> eps, e1, e2;
  double step = 0, tol = 0, horizon = 0, settle = 0, margin = 0;
  std::string out_path;
  bool dump = false;

  app.add_option("command", command, "validate | simulate | tau | optimize-energy | optimize-coupling | sweep")
      ->required()
      ->check(CLI::IsMember({"validate", "simulate", "tau", "optimize-energy", "optimize-coupling", "sweep"}));
  app.add_option("-c,--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  auto* eps_opt = app.add_option("--eps", eps, "fidelity levels, comma separated")->delimiter(',');
  auto* step_opt = app.add_option("--step", step, "marching step for the crossing search");
  auto* tol_opt = app.add_option("--tol", tol, "bisection tolerance on the crossing time");
  auto* horizon_opt = app.add_option("--horizon", horizon, "give up after this time");
  auto* settle_opt = app.add_option("--settle", settle, "settling factor for the steady-state certificate");
  auto* margin_opt = app.add_option("--margin", margin, "relative margin below the threshold for an infinite time");
  auto* out_opt = app.add_option("-o,--out", out_path, "output file ('-' for stdout)");
  auto* e1_opt = app.add_option("--e1", e1, "subsystem 1 energy, comma separated")->delimiter(',');
  auto* e2_opt = app.add_option("--e2", e2, "subsystem 2 energy, comma separated")->delimiter(',');
  app.add_flag("--dump-config", dump, "print the effective configuration and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? qmem::kExitOk : qmem::kExitConfig;
  }

  qmem::CommandOverrides ov;
  if (*eps_opt) ov.eps = eps;
  if (*step_opt) ov.step = step;
  if (*tol_opt) ov.tol = tol;
  if (*horizon_opt) ov.horizon = horizon;
  if (*settle_opt) ov.settle = settle;
  if (*margin_opt) ov.margin = margin;
  if (*out_opt) ov.out = out_path;
  if (*e1_opt) ov.e1 = to_eigen(e1);
  if (*e2_opt) ov.e2 = to_eigen(e2);
  ov.threads = threads_from_env();

  qmem::RunConfig cfg;
  try {
    cfg = qmem::parse_config_file(config_path);
    qmem::apply_overrides(cfg, ov);
  } catch (const qmem::InvalidInput& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return qmem::kExitConfig;
  } catch (const std::exception& e) {
    // e.g. an inadmissible structure detected while checking shapes
    std::cerr << "error: " << e.what() << "\n";
    return qmem::kExitDomain;
  }

  if (dump) {
    std::cout << qmem::to_json(cfg).dump(2) << "\n";
    return qmem::kExitOk;
  }
  return qmem::run_command(cfg, command, std::cout, std::cerr, ov.threads);
}
