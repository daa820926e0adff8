#include "pfsburst/traffic.hpp"

#include <cmath>

#include "pfsburst/errors.hpp"

namespace pfs {

void OnOffConfig::validate() const {
  if (!(alpha > 1.0)) throw DomainError("OnOffConfig: alpha must exceed 1 (finite mean on-time)");
  if (!(beta > 0.0)) throw DomainError("OnOffConfig: beta must be positive");
  if (!(lambda_off > 0.0) || !std::isfinite(lambda_off)) {
    throw DomainError("OnOffConfig: lambda_off must be positive and finite");
  }
}

double mean_on(const OnOffConfig& config) {
  if (!(config.alpha > 1.0)) throw DomainError("mean_on: alpha <= 1 has infinite mean");
  return config.alpha * config.beta / (config.alpha - 1.0);
}

double mean_off(const OnOffConfig& config) {
  if (!(config.lambda_off > 0.0)) throw DomainError("mean_off: lambda_off must be positive");
  return 1.0 / config.lambda_off;
}

double duty_cycle(const OnOffConfig& config) {
  config.validate();
  return 1.0 / (1.0 + (config.alpha - 1.0) / (config.alpha * config.beta * config.lambda_off));
}

double lambda_for_load(double alpha, double beta, double rho_target) {
  if (!(rho_target > 0.0 && rho_target < 1.0)) {
    throw DomainError("lambda_for_load: target load must lie in (0, 1)");
  }
  const OnOffConfig probe{alpha, beta, 1.0};
  const double d_on = mean_on(probe);
  if (!(beta > 0.0)) throw DomainError("lambda_for_load: beta must be positive");
  return rho_target / (d_on * (1.0 - rho_target));
}

double pareto_on_duration(const OnOffConfig& config, double u) {
  return config.beta * std::pow(u, -1.0 / config.alpha);
}

double sample_duration(const OnOffConfig& config, Phase phase, Rng& rng) {
  if (phase == Phase::On) return pareto_on_duration(config, uniform_open0(rng));
  return unit_exponential(rng) / config.lambda_off;
}

SessionState sample_stationary_state(const OnOffConfig& config, Rng& rng) {
  const double rho = duty_cycle(config);
  if (uniform_open0(rng) > rho) return {Phase::Off, unit_exponential(rng) / config.lambda_off};

  // Forward recurrence time of the Pareto on-period: density P(D > x) / E[D].
  // Below beta it is uniform with total mass (alpha - 1) / alpha; above it
  // the tail is beta (alpha u)^(-1 / (alpha - 1)) for u <= 1 / alpha.
  const double a = config.alpha;
  const double u = uniform_open0(rng);
  double remaining = 0.0;
  if (u <= 1.0 / a) {
    remaining = config.beta * std::pow(a * u, -1.0 / (a - 1.0));
  } else {
    remaining = (1.0 - u) * mean_on(config);
  }
  if (!(remaining > 0.0)) remaining = config.beta * 1e-12;
  return {Phase::On, remaining};
}

OnOffProcess::OnOffProcess(const OnOffConfig& config, Rng& rng)
    : OnOffProcess(config, sample_stationary_state(config, rng)) {}

OnOffProcess::OnOffProcess(const OnOffConfig& config, SessionState initial)
    : config_(config), phase_(initial.phase), next_switch_(initial.remaining) {
  config_.validate();
  if (!(initial.remaining > 0.0)) throw DomainError("SessionState: remaining must be positive");
}

double OnOffProcess::advance_to(double t, Rng& rng) {
  if (!(t > now_)) return 0.0;
  double on_time = 0.0;
  while (next_switch_ <= t) {
    if (phase_ == Phase::On) on_time += next_switch_ - now_;
    now_ = next_switch_;
    phase_ = phase_ == Phase::On ? Phase::Off : Phase::On;
    if (phase_ == Phase::On) ++sessions_;
    next_switch_ = now_ + sample_duration(config_, phase_, rng);
  }
  if (phase_ == Phase::On) on_time += t - now_;
  now_ = t;
  return on_time;
}

}  // namespace pfs
