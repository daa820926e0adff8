#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "pfsburst/estimators.hpp"
#include "pfsburst/simulator.hpp"

namespace pfs {

inline constexpr const char* kCsvSchema = "pfsburst-csv/1";

struct LayoutConfig {
  int rings = 2;
  double inter_site_distance_m = 500.0;
  bool wraparound = true;
};

struct TrafficSweepConfig {
  double alpha = 1.5;
  double beta = 10.0;  // seconds
  /// Fixed off rate; when set it overrides `rho` with a single load point.
  std::optional<double> lambda_off;
  std::vector<double> rho{0.25, 0.5, 0.75};
};

struct UserSweepConfig {
  std::vector<int> users_per_cell{5, 10, 20, 30};
  double rho = 0.5;
};

struct ExperimentConfig {
  LayoutConfig layout;
  int users_per_cell = 20;
  double min_distance_m = 35.0;
  double shadowing_sigma_db = 8.0;
  double tx_power_dbm = 29.0;  // per resource block
  double noise_figure_db = 9.0;
  double bandwidth_hz = 180e3;
  double sinr_cap = 1e6;
  TrafficSweepConfig traffic;
  UserSweepConfig user_sweep;
  SchedulerConfig scheduler;
  long long measure_tti = 1'000'000;
  /// Warm-up in seconds; empty means 10 (D_on + D_off) at each load.
  std::optional<double> warmup_s;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
  std::uint64_t drop_seed = 1;
  int threads = 0;  // 0: hardware concurrency
  std::string output_dir = "out";

  void validate() const;
};

ExperimentConfig default_config();
nlohmann::json to_json(const ExperimentConfig& config);

/// Overlays `j` on the defaults. Unknown keys and wrong types throw
/// ConfigError naming the offending field.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Reads and parses a config file; syntax errors report line and column.
ExperimentConfig load_config(const std::filesystem::path& path);

RateMap rate_map(const ExperimentConfig& config);
double noise_power_w(const ExperimentConfig& config);

/// One drop: per-user positions and link budgets in every cell.
struct Drop {
  CellLayout layout;
  RateMap map;
  std::vector<std::vector<LinkBudget>> links;  // [cell][user]
};

Drop make_drop(const ExperimentConfig& config, int users_per_cell, std::uint64_t drop_seed);

/// Scenario for a load; rho == 1 makes every user saturated.
Scenario make_scenario(const Drop& drop, const ExperimentConfig& config, double rho);

/// Rate statistics and SINR model of every user, cell by cell, at a load.
std::vector<CellUserSet> make_cell_sets(const Drop& drop, double rho);

/// Estimator outputs for every user (cell-major), one saturated MIA
/// solution per cell reused for every load.
struct DropEstimates {
  std::vector<CellUserSet> cells;  // at load 1
  std::vector<MiaSolution> mia;
};

DropEstimates estimate_drop(const Drop& drop, const MiaOptions& opts = {});
EstimateReport estimate_at_load(const DropEstimates& drop, double rho);

RunLength run_length(const ExperimentConfig& config, double rho);

// ---------------------------------------------------------------------------
// Sweeps

struct DetailRow {
  double sweep_value = 0.0;  // rho for load sweeps, users per cell for user sweeps
  double rho = 0.0;
  int users_per_cell = 0;
  std::uint64_t seed = 0;
  std::size_t cell = 0;
  std::size_t user = 0;
  double sim_rate = 0.0;             // time average including off periods
  double sim_rate_normalized = 0.0;  // configured load x rate per active second
  double active_share = 0.0;
  double scheduled_share = 0.0;
  double rr_rate = 0.0;
  double ga_rate = 0.0;
  double mia_rate = 0.0;
  double ha_rate = 0.0;
};

inline constexpr const char* kEstimatorNames[4] = {"rr", "ga", "mia", "ha"};

struct EstimatorSummary {
  double signed_mean = 0.0;
  double mean_abs = 0.0;
  double p05 = 0.0;
  double p95 = 0.0;
  double pooled_mean_abs = 0.0;  // per-user seed-averaged simulated rate
  double time_avg_mean_abs = 0.0;  // against the raw time-averaged rate
  double cell_mean_abs = 0.0;  // summed cell rate per (seed, cell)
};

struct SummaryRow {
  double sweep_value = 0.0;
  double rho = 0.0;
  int users_per_cell = 0;
  std::size_t seeds = 0;
  std::size_t rows = 0;
  std::size_t excluded = 0;
  double measured_duty_cycle = 0.0;
  EstimatorSummary est[4];
};

/// Summary of the detail rows of one sweep point.
SummaryRow summarize(const std::vector<DetailRow>& rows);

struct SweepResult {
  std::vector<std::vector<DetailRow>> details;  // one block per sweep point
  std::vector<SummaryRow> summary;
};

/// Load sweep at the configured users per cell.
SweepResult run_sweep(const ExperimentConfig& config);
/// Users-per-cell sweep at the user-sweep load.
SweepResult run_user_sweep(const ExperimentConfig& config);

void write_detail_csv(const std::filesystem::path& path, const std::vector<DetailRow>& rows);
std::vector<DetailRow> read_detail_csv(const std::filesystem::path& path);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

/// Writes detail files, the summary, and the effective-config sidecar.
void write_outputs(const std::filesystem::path& dir, const std::string& kind,
                   const ExperimentConfig& config, const SweepResult& result);

// ---------------------------------------------------------------------------
// Validation

struct CheckResult {
  std::string name;
  std::string status;  // "pass", "fail", "tolerance-miss"
  std::string detail;
};

struct ValidateOptions {
  double quadrature_rel_tol = 1e-8;
  /// Test hook: perturbs sigma_u on the subset-sum side of the
  /// closed-form equivalence check.
  double sigma_perturbation = 0.0;
};

std::vector<CheckResult> validate_estimators(const ExperimentConfig& config,
                                             const ValidateOptions& options = {});

}  // namespace pfs
