#pragma once

#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pfsburst/quadrature.hpp"
#include "pfsburst/radio.hpp"
#include "pfsburst/sinr_model.hpp"

namespace pfs {

// ---------------------------------------------------------------------------
// Gaussian order statistics

/// E[max of n i.i.d. standard normals] by quadrature of
/// x n phi(x) Phi(x)^(n-1) over the real line. n = 1 returns exactly 0.
double gaussian_max_expectation_uncached(int n, const QuadratureOptions& opts = {1e-14, 1e-12, 4000});

/// Memoized L(n). Thread-safe; entries are computed on first request.
class GaussianOrderStatTable {
 public:
  double operator()(int n);

 private:
  std::mutex mutex_;
  std::vector<double> values_;  // values_[n - 1] = L(n)
};

/// L(n) from a process-wide memo table.
double gaussian_max_expectation(int n);

/// Binomial(n, rho) mixture of L(1..n), the bursty-load order-statistic term.
double l_mixture(int n, double rho);

// ---------------------------------------------------------------------------
// Cell description

struct CellUser {
  RateStats stats;
  std::optional<SinrModeld> sinr;  // required by the MIA estimators
};

/// Users served by one base station, with a common duty cycle and rate map.
class CellUserSet {
 public:
  CellUserSet(std::vector<CellUser> users, double load, RateMap map);

  std::size_t size() const { return users_.size(); }
  const CellUser& user(std::size_t u) const { return users_.at(u); }
  const std::vector<CellUser>& users() const { return users_; }
  double load() const { return load_; }
  const RateMap& map() const { return map_; }

  CellUserSet with_load(double load) const { return CellUserSet(users_, load, map_); }

 private:
  std::vector<CellUser> users_;
  double load_;
  RateMap map_;
};

// ---------------------------------------------------------------------------
// Gaussian approximation (closed form)

double rr_rate(const CellUserSet& set, std::size_t u);
double ga_rate(const CellUserSet& set, std::size_t u);
double ga_gain(const CellUserSet& set, std::size_t u);
/// ga_gain - 1.
double ga_increment(const CellUserSet& set, std::size_t u);

/// Gain of user `user` when exactly the users in `active` (which contains
/// `user`) are on.
using SubsetGain = std::function<double(std::size_t user, std::span<const std::size_t> active)>;

/// Gaussian-approximation subset gain 1 + (sigma_u / r_u) L(|V|).
SubsetGain ga_subset_gain(const CellUserSet& set);

inline constexpr std::size_t kMaxEnumeratedUsers = 20;

/// Throughput as the probability-weighted sum over every active subset that
/// contains `u`. Enumerates 2^(N-1) subsets; N above kMaxEnumeratedUsers
/// throws CapacityError.
double exact_burst_rate(const CellUserSet& set, std::size_t u, const SubsetGain& gain);

// ---------------------------------------------------------------------------
// Multi-interference analysis (saturated fixed point)

enum class MiaMethod {
  Newton,             // Newton on log rates with the exact Jacobian
  DampedGaussSeidel,  // user-by-user relaxation; unstable for large cells
};

struct MiaOptions {
  MiaMethod method = MiaMethod::Newton;
  double damping = 0.5;          // Gauss-Seidel: weight kept on the previous iterate
  double tolerance = 1e-9;       // max relative residual (Newton) or change (Gauss-Seidel)
  int max_iterations = 500;
  double tie_tolerance = 1e-9;   // relative gap treated as equal averages
  QuadratureOptions quadrature{1e-14, 1e-11, 4000};
};

struct MiaSolution {
  Eigen::VectorXd rates;  // saturated long-run rate per user, bits/s
  int iterations = 0;
  double max_residual = 0.0;  // max_u |T_u(R) - R_u| / R_u at the solution
};

/// One evaluation of the saturated-rate integral for user `u` given every
/// user's current average rate.
double mia_rate_map(const CellUserSet& set, std::size_t u, const Eigen::VectorXd& rates,
                    const MiaOptions& opts = {});

/// T(R) for every user from one pass over the normalized metric r / R,
/// with the Jacobian d log T_u / d log R_v of the continuous part.
struct MiaMapEvaluation {
  Eigen::VectorXd mapped;
  Eigen::MatrixXd log_jacobian;
};

MiaMapEvaluation mia_map(const CellUserSet& set, const Eigen::VectorXd& rates,
                         const MiaOptions& opts = {});

/// max_u |T_u(R) - R_u| / R_u, from the per-user integrals.
double mia_residual(const CellUserSet& set, const Eigen::VectorXd& rates,
                    const MiaOptions& opts = {});

/// Solves R = T(R) from the round-robin rates. Throws NumericalError
/// carrying the last residual or change if it does not settle.
MiaSolution mia_saturated_rates(const CellUserSet& set, const MiaOptions& opts = {});

double mia_gain(const CellUserSet& set, const MiaSolution& solution, std::size_t u);

// ---------------------------------------------------------------------------
// Hybrid approximation

/// Blend of the GA increment at the cell load with the MIA saturated gain.
double ha_gain(const CellUserSet& set, std::size_t u, double mia_gain_u);
double ha_rate(const CellUserSet& set, std::size_t u, double mia_gain_u);

struct EstimateReport {
  Eigen::VectorXd rr_rate;
  Eigen::VectorXd ga_rate;
  Eigen::VectorXd ga_gain;
  Eigen::VectorXd mia_sat_rate;
  Eigen::VectorXd mia_gain;
  Eigen::VectorXd ha_gain;
  Eigen::VectorXd ha_rate;
};

/// Every estimator for every user at the set's load, reusing a saturated
/// MIA solution (it does not depend on the load).
EstimateReport estimate(const CellUserSet& set, const MiaSolution& mia);
EstimateReport estimate(const CellUserSet& set, const MiaOptions& opts = {});

}  // namespace pfs
