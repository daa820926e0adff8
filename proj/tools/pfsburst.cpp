// Experiment runner: load and user-count sweeps, estimator validation.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "pfsburst/errors.hpp"
#include "pfsburst/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

void print_summary(const std::vector<pfs::SummaryRow>& rows) {
  std::printf("%-10s %-6s %-6s", "point", "rho", "users");
  for (const char* e : pfs::kEstimatorNames) std::printf(" %9s", (std::string(e) + "_mae").c_str());
  std::printf("\n");
  for (const auto& r : rows) {
    std::printf("%-10g %-6g %-6d", r.sweep_value, r.rho, r.users_per_cell);
    for (const auto& e : r.est) std::printf(" %9.4f", e.mean_abs);
    std::printf("\n");
  }
}

void flag_partial(const std::filesystem::path& dir, const std::string& what) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream marker(dir / "INCOMPLETE");
  marker << what << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Throughput estimators for proportional fair scheduling under bursty traffic"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int seed_count = 0;
  bool print_defaults = false;

  auto* sweep = app.add_subcommand("run-sweep", "Sweep the traffic load and compare estimators with simulation");
  sweep->add_option("config", config_path, "Config file (JSON)");
  sweep->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  sweep->add_option("--seeds", seed_count, "Use seeds 1..N instead of the configured list")->check(CLI::PositiveNumber);
  sweep->add_flag("--print-defaults", print_defaults, "Print the default config and exit");

  auto* users = app.add_subcommand("user-sweep", "Sweep the number of users per cell");
  users->add_option("config", config_path, "Config file (JSON)")->required();
  users->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  users->add_option("--seeds", seed_count, "Use seeds 1..N instead of the configured list")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Run the estimator invariant checks");
  validate->add_option("config", config_path, "Config file (JSON)")->required();
  double rel_tol = 1e-8;
  double sigma_perturbation = 0.0;
  validate->add_option("--quadrature-tol", rel_tol, "Relative tolerance of the quadrature checks");
  validate->add_option("--sigma-perturbation", sigma_perturbation,
                       "Relative perturbation of sigma on the subset-sum side (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (print_defaults) {
    std::cout << pfs::to_json(pfs::default_config()).dump(2) << '\n';
    return kOk;
  }
  if (config_path.empty()) {
    std::cerr << "error: a config file is required\n";
    return kConfigError;
  }

  pfs::ExperimentConfig config;
  try {
    config = pfs::load_config(config_path);
    if (seed_count > 0) {
      config.seeds.clear();
      for (int s = 1; s <= seed_count; ++s) config.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (!out_dir.empty()) config.output_dir = out_dir;
    config.validate();
  } catch (const pfs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  const std::filesystem::path dir = config.output_dir;
  try {
    if (*validate) {
      const auto results = pfs::validate_estimators(config, {rel_tol, sigma_perturbation});
      bool ok = true;
      nlohmann::json report = nlohmann::json::array();
      for (const auto& r : results) {
        ok = ok && r.status == "pass";
        report.push_back({{"check", r.name}, {"status", r.status}, {"detail", r.detail}});
      }
      std::cout << report.dump(2) << '\n';
      return ok ? kOk : kRuntimeError;
    }
    const std::string kind = *users ? "user-sweep" : "run-sweep";
    const pfs::SweepResult result = *users ? pfs::run_user_sweep(config) : pfs::run_sweep(config);
    pfs::write_outputs(dir, kind, config, result);
    print_summary(result.summary);
    return kOk;
  } catch (const pfs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    if (!*validate) flag_partial(dir, e.what());
    return kRuntimeError;
  }
}
