#pragma once

#include "pfsburst/random.hpp"

namespace pfs {

/// Pareto on-durations (shape alpha, scale beta seconds) alternating with
/// exponential off-durations (rate lambda_off per second).
struct OnOffConfig {
  double alpha = 1.5;
  double beta = 10.0;
  double lambda_off = 1.0 / 30.0;

  void validate() const;
};

enum class Phase { On, Off };

struct SessionState {
  Phase phase = Phase::Off;
  double remaining = 0.0;  // seconds
};

double mean_on(const OnOffConfig& config);
double mean_off(const OnOffConfig& config);
double duty_cycle(const OnOffConfig& config);

/// Off rate giving the requested duty cycle for a fixed on-distribution.
double lambda_for_load(double alpha, double beta, double rho_target);

/// Inverse-CDF Pareto draw for a given uniform on (0, 1].
double pareto_on_duration(const OnOffConfig& config, double u);

double sample_duration(const OnOffConfig& config, Phase phase, Rng& rng);

/// Draw from the stationary distribution of the alternating process: On with
/// probability duty_cycle, remaining time from the equilibrium (forward
/// recurrence) law of the current phase.
SessionState sample_stationary_state(const OnOffConfig& config, Rng& rng);

/// One user's on-off process in continuous time.
class OnOffProcess {
 public:
  /// Starts at time 0 from the stationary law.
  OnOffProcess(const OnOffConfig& config, Rng& rng);

  /// Starts at time 0 in a given state.
  OnOffProcess(const OnOffConfig& config, SessionState initial);

  /// Moves the clock forward to `t` and returns the on-time spent in
  /// (now, t]. `t` earlier than the current clock is a no-op.
  double advance_to(double t, Rng& rng);

  bool is_on() const { return phase_ == Phase::On; }
  double now() const { return now_; }
  /// Number of Off->On transitions seen so far.
  long long sessions_started() const { return sessions_; }

 private:
  OnOffConfig config_;
  Phase phase_;
  double now_ = 0.0;
  double next_switch_;
  long long sessions_ = 0;
};

}  // namespace pfs
