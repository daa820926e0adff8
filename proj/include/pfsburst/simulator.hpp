#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "pfsburst/estimators.hpp"
#include "pfsburst/radio.hpp"
#include "pfsburst/traffic.hpp"

namespace pfs {

enum class SchedulerKind { ProportionalFair, RoundRobin };
enum class ColdStart { ResetPerSession, Persist };

struct SchedulerConfig {
  SchedulerKind kind = SchedulerKind::ProportionalFair;
  double pf_time_constant = 1000.0;  // EWMA horizon, TTIs
  double tti_duration = 1e-3;        // seconds
  ColdStart cold_start = ColdStart::ResetPerSession;

  void validate() const;
};

struct SimUser {
  LinkBudget link;
  std::optional<OnOffConfig> traffic;  // empty: always active
};

struct SimCell {
  std::vector<SimUser> users;
};

/// Per-user link budgets and traffic for every cell. Interference is
/// always-on, so cells evolve independently given their own streams.
struct Scenario {
  RateMap map;
  std::vector<SimCell> cells;

  std::size_t user_count() const;
};

struct RunLength {
  long long horizon_tti = 0;  // total, warm-up included
  long long warmup_tti = 0;   // traffic-only fast-forward, not measured
};

struct UserSimStats {
  std::size_t cell = 0;
  std::size_t index = 0;  // position inside its cell
  double delivered_bits = 0.0;
  long long scheduled_ttis = 0;
  long long active_ttis = 0;
  double mean_rate = 0.0;        // bits/s over the measured window, off time included
  double scheduled_share = 0.0;  // scheduled TTIs / measured TTIs
  double active_share = 0.0;     // active TTIs / measured TTIs
  /// Delivered bits per active second scaled by the configured duty cycle;
  /// estimates the same long-run rate as mean_rate without the sampling
  /// noise of this run's own on-fraction.
  double load_normalized_rate = 0.0;
};

struct CellSimStats {
  long long idle_ttis = 0;
  double delivered_bits = 0.0;
  double served_rate_sum = 0.0;  // sum of the scheduled user's rate over busy TTIs
};

struct SimReport {
  std::uint64_t seed = 0;
  long long warmup_tti = 0;
  long long measured_tti = 0;
  double tti_duration = 0.0;
  double measured_duty_cycle = 0.0;  // mean active share over users
  std::vector<UserSimStats> users;   // cell-major order
  std::vector<CellSimStats> cells;

  Eigen::VectorXd mean_rates() const;
  Eigen::VectorXd load_normalized_rates() const;
};

/// One scheduling decision, reported to an optional observer.
struct TtiRecord {
  std::size_t cell = 0;
  long long tti = 0;
  std::optional<std::size_t> scheduled;  // index inside the cell
  double rate = 0.0;                     // bits/s of the scheduled user
  std::size_t active_users = 0;
};

using TtiObserver = std::function<void(const TtiRecord&)>;

/// Per-TTI simulation of every cell. Deterministic in (scenario, scheduler,
/// length, seed).
SimReport run(const Scenario& scenario, const SchedulerConfig& scheduler, const RunLength& length,
              std::uint64_t seed, const TtiObserver& observer = {});

/// Relative errors (estimated - simulated) / simulated. Users with zero
/// simulated rate are excluded and counted.
struct RateErrors {
  Eigen::VectorXd relative;  // NaN where excluded
  std::size_t excluded = 0;
  double signed_mean = 0.0;
  double mean_abs = 0.0;
  double p05 = 0.0;
  double p95 = 0.0;
};

RateErrors measure_error(const Eigen::VectorXd& simulated, const Eigen::VectorXd& estimated);

enum class SimRate { MeanRate, LoadNormalized };

RateErrors measure_error(const SimReport& sim, const Eigen::VectorXd& estimated,
                         SimRate which = SimRate::LoadNormalized);

/// Linear-interpolation percentile (q in [0, 1]) of finite entries.
double percentile(std::vector<double> values, double q);

}  // namespace pfs
