#include "pfsburst/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/LU>

#include "pfsburst/errors.hpp"

namespace pfs {

namespace {

// 1 - (1 - rho)^n without cancellation at small rho.
double prob_any_active(int n, double rho) {
  return -std::expm1(n * std::log1p(-rho));
}

void check_user(const CellUserSet& set, std::size_t u) {
  if (u >= set.size()) throw DomainError("user index outside the cell");
}

}  // namespace

// ---------------------------------------------------------------------------

double gaussian_max_expectation_uncached(int n, const QuadratureOptions& opts) {
  if (n < 1) throw DomainError("gaussian_max_expectation: n must be at least 1");
  if (n == 1) return 0.0;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  auto integrand = [n, inv_sqrt_2pi](double x) {
    const double log_cdf = std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
    return x * n * inv_sqrt_2pi * std::exp(-0.5 * x * x + (n - 1) * log_cdf);
  };
  // The integrand is below 1e-30 outside [-13, 13] for any n >= 2 of interest.
  const double lower = -13.0;
  const double upper = 13.0;
  return integrate<double>(integrand, lower, 0.0, opts).value +
         integrate<double>(integrand, 0.0, upper, opts).value;
}

double GaussianOrderStatTable::operator()(int n) {
  if (n < 1) throw DomainError("gaussian_max_expectation: n must be at least 1");
  std::lock_guard lock(mutex_);
  while (values_.size() < static_cast<std::size_t>(n)) {
    values_.push_back(gaussian_max_expectation_uncached(static_cast<int>(values_.size()) + 1));
  }
  return values_[static_cast<std::size_t>(n) - 1];
}

double gaussian_max_expectation(int n) {
  static GaussianOrderStatTable table;
  return table(n);
}

double l_mixture(int n, double rho) {
  if (n < 1) throw DomainError("l_mixture: n must be at least 1");
  if (!(rho > 0.0 && rho <= 1.0)) throw DomainError("l_mixture: rho must lie in (0, 1]");
  if (rho == 1.0) return gaussian_max_expectation(n);

  double sum = 0.0;
  if (n <= 50) {
    double binom = 1.0;  // C(n, k), exact in double for n <= 50
    for (int k = 1; k <= n; ++k) {
      binom = binom * (n - k + 1) / k;
      sum += binom * std::pow(rho, k) * std::pow(1.0 - rho, n - k) * gaussian_max_expectation(k);
    }
  } else {
    const double log_rho = std::log(rho);
    const double log_rest = std::log1p(-rho);
    const double lg_n = std::lgamma(n + 1.0);
    for (int k = 1; k <= n; ++k) {
      const double log_w =
          lg_n - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * log_rho + (n - k) * log_rest;
      sum += std::exp(log_w) * gaussian_max_expectation(k);
    }
  }
  return sum;
}

// ---------------------------------------------------------------------------

CellUserSet::CellUserSet(std::vector<CellUser> users, double load, RateMap map)
    : users_(std::move(users)), load_(load), map_(map) {
  if (users_.empty()) throw DomainError("CellUserSet: at least one user required");
  if (!(load_ > 0.0 && load_ <= 1.0)) throw DomainError("CellUserSet: load must lie in (0, 1]");
  for (const auto& user : users_) {
    if (!(user.stats.mean_rate > 0.0)) throw DomainError("CellUserSet: mean rate must be positive");
    if (!(user.stats.std_rate >= 0.0)) throw DomainError("CellUserSet: rate std must be non-negative");
  }
}

// ---------------------------------------------------------------------------

double rr_rate(const CellUserSet& set, std::size_t u) {
  check_user(set, u);
  const int n = static_cast<int>(set.size());
  return set.user(u).stats.mean_rate / n * prob_any_active(n, set.load());
}

double ga_rate(const CellUserSet& set, std::size_t u) {
  check_user(set, u);
  const int n = static_cast<int>(set.size());
  const auto& stats = set.user(u).stats;
  return stats.mean_rate / n * prob_any_active(n, set.load()) +
         stats.std_rate / n * l_mixture(n, set.load());
}

double ga_increment(const CellUserSet& set, std::size_t u) {
  check_user(set, u);
  const int n = static_cast<int>(set.size());
  const auto& stats = set.user(u).stats;
  return stats.std_rate / stats.mean_rate * l_mixture(n, set.load()) /
         prob_any_active(n, set.load());
}

double ga_gain(const CellUserSet& set, std::size_t u) { return 1.0 + ga_increment(set, u); }

SubsetGain ga_subset_gain(const CellUserSet& set) {
  std::vector<double> ratio;
  ratio.reserve(set.size());
  for (const auto& user : set.users()) ratio.push_back(user.stats.std_rate / user.stats.mean_rate);
  return [ratio = std::move(ratio)](std::size_t user, std::span<const std::size_t> active) {
    return 1.0 + ratio.at(user) * gaussian_max_expectation(static_cast<int>(active.size()));
  };
}

double exact_burst_rate(const CellUserSet& set, std::size_t u, const SubsetGain& gain) {
  check_user(set, u);
  const std::size_t n = set.size();
  if (n > kMaxEnumeratedUsers) {
    throw CapacityError("exact_burst_rate: " + std::to_string(n) + " users exceed the enumeration limit of " +
                        std::to_string(kMaxEnumeratedUsers));
  }
  const double rho = set.load();
  std::vector<std::size_t> others;
  for (std::size_t v = 0; v < n; ++v) {
    if (v != u) others.push_back(v);
  }
  std::vector<std::size_t> active;
  active.reserve(n);
  double sum = 0.0;
  const std::uint64_t subsets = std::uint64_t{1} << others.size();
  for (std::uint64_t mask = 0; mask < subsets; ++mask) {
    active.clear();
    active.push_back(u);
    for (std::size_t j = 0; j < others.size(); ++j) {
      if (mask & (std::uint64_t{1} << j)) active.push_back(others[j]);
    }
    const int size = static_cast<int>(active.size());
    std::sort(active.begin(), active.end());
    const double weight = std::pow(rho, size - 1) * std::pow(1.0 - rho, static_cast<int>(n) - size);
    sum += gain(u, active) / size * weight;
  }
  return set.user(u).stats.mean_rate * rho * sum;
}

// ---------------------------------------------------------------------------

namespace {

// P(r(Phi_v) < x) under the capped map: r(Phi_v) never exceeds r(cap).
double rate_below(const SinrModeld& model, const RateMap& map, double max_rate, double x) {
  if (x >= max_rate) return 1.0;
  const double phi = std::expm1(x / map.bandwidth * std::numbers::ln2);
  return -std::expm1(sinr_log_survival(model, phi));
}

const SinrModeld& require_sinr(const CellUserSet& set, std::size_t v) {
  const auto& model = set.user(v).sinr;
  if (!model) throw DomainError("MIA estimators need a SINR model for every user");
  return *model;
}

// Rate earned at the cap: u's capped mass times its share of the TTIs in
// which no competitor has a larger metric. Competitors at the cap with an
// equal average split the TTI.
double capped_term(const CellUserSet& set, std::size_t u, const Eigen::VectorXd& rates,
                   const MiaOptions& opts) {
  const RateMap& map = set.map();
  const double max_rate = map.max_rate();
  const double ru = rates[static_cast<Eigen::Index>(u)];
  std::vector<double> poly{1.0};  // coefficients in the number of tied competitors
  for (std::size_t v = 0; v < set.size(); ++v) {
    if (v == u) continue;
    const SinrModeld& model = require_sinr(set, v);
    const double scale = rates[static_cast<Eigen::Index>(v)] / ru;
    double lose = 0.0;
    double tie = 0.0;
    if (std::abs(scale - 1.0) <= opts.tie_tolerance) {
      lose = sinr_cdf(model, map.sinr_cap);
      tie = 1.0 - lose;
    } else {
      lose = rate_below(model, map, max_rate, max_rate * scale);
    }
    std::vector<double> next(poly.size() + 1, 0.0);
    for (std::size_t j = 0; j < poly.size(); ++j) {
      next[j] += poly[j] * lose;
      next[j + 1] += poly[j] * tie;
    }
    poly = std::move(next);
  }
  double share = 0.0;
  for (std::size_t j = 0; j < poly.size(); ++j) share += poly[j] / static_cast<double>(j + 1);
  return max_rate * sinr_survival(require_sinr(set, u), map.sinr_cap) * share;
}

}  // namespace

double mia_rate_map(const CellUserSet& set, std::size_t u, const Eigen::VectorXd& rates,
                    const MiaOptions& opts) {
  check_user(set, u);
  const std::size_t n = set.size();
  const RateMap& map = set.map();
  const double max_rate = map.max_rate();
  const double cap = map.sinr_cap;
  const SinrModeld& own = require_sinr(set, u);
  std::vector<const SinrModeld*> competitors;
  std::vector<double> scale;  // R_v / R_u
  for (std::size_t v = 0; v < n; ++v) {
    if (v == u) continue;
    competitors.push_back(&require_sinr(set, v));
    scale.push_back(rates[static_cast<Eigen::Index>(v)] / rates[static_cast<Eigen::Index>(u)]);
  }

  // Continuous part: u below the cap, every competitor's metric lower.
  auto integrand = [&](double phi) -> double {
    if (!(phi > 0.0)) return 0.0;
    const double r = map.bandwidth * std::log1p(phi) / std::numbers::ln2;
    double win = 1.0;
    for (std::size_t k = 0; k < competitors.size() && win > 0.0; ++k) {
      win *= rate_below(*competitors[k], map, max_rate, r * scale[k]);
    }
    return win == 0.0 ? 0.0 : r * sinr_pdf(own, phi) * win;
  };
  // A competitor whose average is larger saturates the comparison once
  // r(phi) R_v / R_u reaches r(cap); split there so every piece is smooth.
  std::vector<double> breaks{0.0, cap};
  for (double s : scale) {
    if (s > 1.0) {
      const double phi = std::expm1(max_rate / s / map.bandwidth * std::numbers::ln2);
      if (phi > 0.0 && phi < cap) breaks.push_back(phi);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  double body = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    if (breaks[k + 1] > breaks[k]) {
      body += integrate_mapped<double>(integrand, breaks[k], breaks[k + 1], opts.quadrature, sinr_scale(own))
                  .value;
    }
  }

  return body + capped_term(set, u, rates, opts);
}

double mia_residual(const CellUserSet& set, const Eigen::VectorXd& rates, const MiaOptions& opts) {
  double worst = 0.0;
  for (std::size_t u = 0; u < set.size(); ++u) {
    const double ru = rates[static_cast<Eigen::Index>(u)];
    worst = std::max(worst, std::abs(mia_rate_map(set, u, rates, opts) - ru) / ru);
  }
  return worst;
}

MiaMapEvaluation mia_map(const CellUserSet& set, const Eigen::VectorXd& rates,
                         const MiaOptions& opts) {
  const auto n = static_cast<Eigen::Index>(set.size());
  if (rates.size() != n) throw DomainError("mia_map: one rate per user required");
  const RateMap& map = set.map();
  const double max_rate = map.max_rate();
  std::vector<const SinrModeld*> models;
  Eigen::VectorXd m_cap(n);
  Eigen::VectorXd dm_scale(n);  // d log(1 + phi) / dm for M_v = r(Phi_v) / R_v
  std::vector<double> points{0.0};
  for (Eigen::Index v = 0; v < n; ++v) {
    models.push_back(&require_sinr(set, static_cast<std::size_t>(v)));
    if (!(rates[v] > 0.0) || !std::isfinite(rates[v])) {
      throw DomainError("mia_map: rates must be positive and finite");
    }
    m_cap[v] = max_rate / rates[v];
    dm_scale[v] = rates[v] / map.bandwidth * std::numbers::ln2;
    points.push_back(m_cap[v]);
  }
  std::sort(points.begin(), points.end());
  // Very unequal caps leave wide gaps where a heavy-tailed density sits at
  // the left end; geometric splits keep the first estimate from missing it.
  std::vector<double> dense{points.front()};
  for (std::size_t k = 1; k < points.size(); ++k) {
    for (double p = dense.back() * 4.0; dense.back() > 0.0 && p < points[k]; p *= 4.0) dense.push_back(p);
    dense.push_back(points[k]);
  }
  points = std::move(dense);

  // Components: u's winning density of the metric (n), then
  // K(u, v) = that density times m g_v(m) / G_v(m), column-major (n x n).
  Eigen::VectorXd log_cdf(n);
  Eigen::VectorXd density(n);
  auto node = [&](double m) -> Eigen::VectorXd {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n + n * n);
    if (!(m > 0.0)) return out;
    double log_total = 0.0;
    int zeros = 0;
    Eigen::Index zero_at = -1;
    for (Eigen::Index v = 0; v < n; ++v) {
      if (m >= m_cap[v]) {
        log_cdf[v] = 0.0;
        density[v] = 0.0;
        continue;
      }
      const double phi = std::expm1(m * dm_scale[v]);
      const SinrModeld& model = *models[static_cast<std::size_t>(v)];
      const auto& a = model.interference_ratios();
      double log_s = -phi * model.noise_ratio();
      double hazard = model.noise_ratio();
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        log_s -= std::log1p(a[i] * phi);
        hazard += a[i] / (1.0 + a[i] * phi);
      }
      density[v] = std::exp(log_s) * hazard * dm_scale[v] * (1.0 + phi);
      const double cdf = -std::expm1(log_s);
      if (cdf > 0.0) {
        log_cdf[v] = std::log(cdf);
        log_total += log_cdf[v];
      } else {
        log_cdf[v] = -std::numeric_limits<double>::infinity();
        ++zeros;
        zero_at = v;
      }
    }
    for (Eigen::Index u = 0; u < n; ++u) {
      if (density[u] == 0.0) continue;
      double others = 0.0;
      if (zeros == 0) {
        others = std::exp(log_total - log_cdf[u]);
      } else if (zeros == 1 && zero_at == u) {
        others = std::exp(log_total);
      } else {
        continue;
      }
      const double w = m * density[u] * others;
      out[u] = w;
      for (Eigen::Index v = 0; v < n; ++v) {
        if (v == u || density[v] == 0.0 || !std::isfinite(log_cdf[v])) continue;
        out[n + u + v * n] = w * m * density[v] * std::exp(-log_cdf[v]);
      }
    }
    return out;
  };
  const Eigen::VectorXd integral = integrate_vector<double>(node, points, n, opts.quadrature);

  MiaMapEvaluation eval;
  eval.mapped.resize(n);
  eval.log_jacobian = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index u = 0; u < n; ++u) {
    eval.mapped[u] = rates[u] * integral[u] + capped_term(set, static_cast<std::size_t>(u), rates, opts);
  }
  for (Eigen::Index u = 0; u < n; ++u) {
    if (!(eval.mapped[u] > 0.0)) continue;
    double row = 0.0;
    for (Eigen::Index v = 0; v < n; ++v) {
      if (v == u) continue;
      eval.log_jacobian(u, v) = rates[u] * integral[n + u + v * n] / eval.mapped[u];
      row += eval.log_jacobian(u, v);
    }
    // The map depends on rate ratios only.
    eval.log_jacobian(u, u) = -row;
  }
  return eval;
}

namespace {

double log_residual_norm(const MiaMapEvaluation& eval, const Eigen::VectorXd& x) {
  return (eval.mapped.array().log() - x.array()).abs().maxCoeff();
}

double relative_residual(const MiaMapEvaluation& eval, const Eigen::VectorXd& rates) {
  return (eval.mapped.array() / rates.array() - 1.0).abs().maxCoeff();
}

MiaSolution solve_newton(const CellUserSet& set, const Eigen::VectorXd& start, const MiaOptions& opts) {
  const auto n = start.size();
  Eigen::VectorXd x = start.array().log();
  MiaMapEvaluation eval = mia_map(set, x.array().exp(), opts);
  double residual = relative_residual(eval, x.array().exp());
  for (int iteration = 1; iteration <= opts.max_iterations; ++iteration) {
    if (!(eval.mapped.array() > 0.0).all()) {
      throw NumericalError("mia_saturated_rates: a user never wins at the current iterate", residual);
    }
    const Eigen::VectorXd f = eval.mapped.array().log() - x.array();
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - eval.log_jacobian;
    Eigen::VectorXd step = a.partialPivLu().solve(f);
    const double largest = step.cwiseAbs().maxCoeff();
    if (largest > 2.0) step *= 2.0 / largest;
    const double norm = f.cwiseAbs().maxCoeff();
    double lambda = 1.0;
    while (true) {
      const Eigen::VectorXd trial = x + lambda * step;
      MiaMapEvaluation next = mia_map(set, trial.array().exp(), opts);
      const bool positive = (next.mapped.array() > 0.0).all();
      if ((positive && log_residual_norm(next, trial) <= (1.0 - 1e-4 * lambda) * norm) ||
          lambda < 1.0 / 1024.0) {
        x = trial;
        eval = std::move(next);
        break;
      }
      lambda /= 2.0;
    }
    residual = relative_residual(eval, x.array().exp());
    if (residual < opts.tolerance) {
      const Eigen::VectorXd rates = x.array().exp();
      return {rates, iteration, mia_residual(set, rates, opts)};
    }
  }
  throw NumericalError("mia_saturated_rates: no convergence after " +
                           std::to_string(opts.max_iterations) + " Newton steps",
                       residual);
}

MiaSolution solve_gauss_seidel(const CellUserSet& set, Eigen::VectorXd rates, const MiaOptions& opts) {
  const std::size_t n = set.size();
  double change = 0.0;
  for (int iteration = 1; iteration <= opts.max_iterations; ++iteration) {
    change = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      const auto i = static_cast<Eigen::Index>(u);
      const double mapped = mia_rate_map(set, u, rates, opts);
      const double updated = opts.damping * rates[i] + (1.0 - opts.damping) * mapped;
      if (!(updated > 0.0) || !std::isfinite(updated)) {
        throw NumericalError("mia_saturated_rates: iterate left the positive orthant", updated);
      }
      change = std::max(change, std::abs(updated - rates[i]) / rates[i]);
      rates[i] = updated;
    }
    if (change < opts.tolerance) {
      return {rates, iteration, mia_residual(set, rates, opts)};
    }
  }
  throw NumericalError("mia_saturated_rates: no convergence after " +
                           std::to_string(opts.max_iterations) + " sweeps",
                       change);
}

}  // namespace

MiaSolution mia_saturated_rates(const CellUserSet& set, const MiaOptions& opts) {
  const std::size_t n = set.size();
  Eigen::VectorXd rates(static_cast<Eigen::Index>(n));
  for (std::size_t u = 0; u < n; ++u) {
    require_sinr(set, u);
    rates[static_cast<Eigen::Index>(u)] = set.user(u).stats.mean_rate / static_cast<double>(n);
  }
  if (n == 1) return {rates, 0, mia_residual(set, rates, opts)};
  return opts.method == MiaMethod::Newton ? solve_newton(set, rates, opts)
                                          : solve_gauss_seidel(set, rates, opts);
}

double mia_gain(const CellUserSet& set, const MiaSolution& solution, std::size_t u) {
  check_user(set, u);
  const double rr_saturated = set.user(u).stats.mean_rate / static_cast<double>(set.size());
  return solution.rates[static_cast<Eigen::Index>(u)] / rr_saturated;
}

// ---------------------------------------------------------------------------

double ha_gain(const CellUserSet& set, std::size_t u, double mia_gain_u) {
  check_user(set, u);
  const int n = static_cast<int>(set.size());
  if (n == 1) return 1.0;
  const double rho = set.load();
  const double eta = ga_increment(set, u);
  // eta(rho) / eta(1) with the common sigma_u / r_u factor cancelled.
  const double ratio = l_mixture(n, rho) / prob_any_active(n, rho) / gaussian_max_expectation(n);
  return 1.0 + (1.0 - rho) * eta + rho * ratio * (mia_gain_u - 1.0);
}

double ha_rate(const CellUserSet& set, std::size_t u, double mia_gain_u) {
  return ha_gain(set, u, mia_gain_u) * rr_rate(set, u);
}

EstimateReport estimate(const CellUserSet& set, const MiaSolution& mia) {
  const auto n = static_cast<Eigen::Index>(set.size());
  if (mia.rates.size() != n) throw DomainError("estimate: MIA solution does not match the cell");
  EstimateReport report;
  report.rr_rate.resize(n);
  report.ga_rate.resize(n);
  report.ga_gain.resize(n);
  report.mia_sat_rate = mia.rates;
  report.mia_gain.resize(n);
  report.ha_gain.resize(n);
  report.ha_rate.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    report.rr_rate[i] = rr_rate(set, u);
    report.ga_rate[i] = ga_rate(set, u);
    report.ga_gain[i] = ga_gain(set, u);
    report.mia_gain[i] = mia_gain(set, mia, u);
    report.ha_gain[i] = ha_gain(set, u, report.mia_gain[i]);
    report.ha_rate[i] = report.ha_gain[i] * report.rr_rate[i];
  }
  return report;
}

EstimateReport estimate(const CellUserSet& set, const MiaOptions& opts) {
  return estimate(set, mia_saturated_rates(set, opts));
}

}  // namespace pfs
