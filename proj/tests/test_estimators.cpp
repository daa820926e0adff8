#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>
#include <vector>

#include "pfsburst/errors.hpp"
#include "pfsburst/estimators.hpp"

using namespace pfs;

namespace {

// mpmath values of E[max of n standard normals].
constexpr double kL[] = {0.0, 0.0, 0.5641895835477563, 0.8462843753216344, 1.029375373003964,
                         1.16296447364052};
constexpr double kL8 = 1.423600306045278;
constexpr double kL10 = 1.538752730835173;
constexpr double kL20 = 1.86747505979832;
constexpr double kL64 = 2.34373346507944;

CellUser stats_only(double r, double sigma) { return CellUser{RateStats{r, sigma}, std::nullopt}; }

CellUser with_model(const SinrModeld& model, const RateMap& map) {
  return CellUser{rate_stats(model, map), model};
}

CellUserSet random_stats_set(Rng& rng, std::size_t n, double rho) {
  std::vector<CellUser> users;
  for (std::size_t u = 0; u < n; ++u) {
    const double r = 1e5 + 9e5 * uniform_open0(rng);
    users.push_back(stats_only(r, r * uniform_open0(rng)));
  }
  return CellUserSet(users, rho, RateMap{});
}

SinrModeld random_model(Rng& rng, double serving) {
  Eigen::VectorXd interferers(4);
  for (int i = 0; i < 4; ++i) interferers[i] = std::pow(10.0, -2.5 + 2.0 * uniform_open0(rng));
  return SinrModeld(serving, interferers, 1e-3);
}

CellUserSet random_model_set(Rng& rng, std::size_t n, const RateMap& map) {
  std::vector<CellUser> users;
  for (std::size_t u = 0; u < n; ++u) users.push_back(with_model(random_model(rng, 1.0), map));
  return CellUserSet(users, 1.0, map);
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(OrderStatistics, KnownValues) {
  EXPECT_EQ(gaussian_max_expectation(1), 0.0);
  EXPECT_NEAR(gaussian_max_expectation(2), 1.0 / std::sqrt(std::numbers::pi), 1e-12);
  EXPECT_NEAR(gaussian_max_expectation(3), 1.5 / std::sqrt(std::numbers::pi), 1e-12);
  for (int n = 2; n <= 5; ++n) EXPECT_NEAR(gaussian_max_expectation(n), kL[n], 1e-12) << n;
  EXPECT_NEAR(gaussian_max_expectation(8), kL8, 1e-12);
  EXPECT_NEAR(gaussian_max_expectation(10), kL10, 1e-12);
  EXPECT_NEAR(gaussian_max_expectation(20), kL20, 1e-12);
  EXPECT_NEAR(gaussian_max_expectation(64), kL64, 1e-11);
  EXPECT_THROW(gaussian_max_expectation(0), DomainError);
}

TEST(OrderStatistics, IncreasingAndBounded) {
  for (int n = 2; n <= 128; ++n) {
    EXPECT_GT(gaussian_max_expectation(n), gaussian_max_expectation(n - 1));
    EXPECT_LE(gaussian_max_expectation(n), std::sqrt(2.0 * std::log(n)) + 1.0);
  }
}

TEST(OrderStatistics, TableIsSharedAcrossThreads) {
  GaussianOrderStatTable table;
  std::vector<double> out(8);
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 8; ++t) threads.emplace_back([&, t] { out[t] = table(30 + t % 3); });
  }
  for (int t = 0; t < 8; ++t) EXPECT_EQ(out[t], gaussian_max_expectation(30 + t % 3));
}

TEST(LoadMixture, Examples) {
  for (int n = 1; n <= 64; ++n) EXPECT_NEAR(l_mixture(n, 1.0), gaussian_max_expectation(n), 1e-15);
  EXPECT_EQ(l_mixture(1, 0.3), 0.0);
  EXPECT_NEAR(l_mixture(2, 0.5), 0.25 * kL[2], 1e-15);
}

TEST(LoadMixture, NonDecreasingInLoad) {
  for (int n : {2, 5, 20, 51, 80}) {
    double prev = 0.0;
    for (double rho = 0.01; rho <= 1.0; rho += 0.01) {
      const double l = l_mixture(n, rho);
      EXPECT_GE(l, prev - 1e-14) << n << " " << rho;
      prev = l;
    }
  }
}

TEST(LoadMixture, LogBinomialBranchIsContinuous) {
  // Above 50 users the weights come from log-binomials; compare with a
  // direct sum evaluated in long double.
  for (int n : {51, 64, 100}) {
    for (double rho : {0.1, 0.5, 0.9}) {
      long double sum = 0.0L;
      long double weight = std::pow(1.0L - rho, n);
      for (int k = 1; k <= n; ++k) {
        weight *= static_cast<long double>(n - k + 1) / k * rho / (1.0L - rho);
        sum += weight * gaussian_max_expectation(k);
      }
      EXPECT_NEAR(l_mixture(n, rho), static_cast<double>(sum), 1e-12);
    }
  }
}

TEST(CellUserSetInvariants, Rejected) {
  EXPECT_THROW(CellUserSet({}, 0.5, RateMap{}), DomainError);
  EXPECT_THROW(CellUserSet({stats_only(1.0, 0.0)}, 0.0, RateMap{}), DomainError);
  EXPECT_THROW(CellUserSet({stats_only(1.0, 0.0)}, 1.5, RateMap{}), DomainError);
}

// ---------------------------------------------------------------------------
// Gaussian approximation

TEST(RoundRobin, Examples) {
  const CellUserSet one({stats_only(3e5, 1e5)}, 0.4, RateMap{});
  EXPECT_DOUBLE_EQ(rr_rate(one, 0), 3e5 * 0.4);
  const CellUserSet two({stats_only(3e5, 1e5), stats_only(1e5, 0.0)}, 0.5, RateMap{});
  EXPECT_DOUBLE_EQ(rr_rate(two, 0), 3e5 / 2.0 * 0.75);
  const CellUserSet full = two.with_load(1.0);
  EXPECT_DOUBLE_EQ(rr_rate(full, 1), 1e5 / 2.0);
}

TEST(GaussianApproximation, Examples) {
  const CellUserSet set({stats_only(3e5, 0.0), stats_only(2e5, 1e5), stats_only(1e5, 4e4)}, 0.6, RateMap{});
  EXPECT_EQ(ga_rate(set, 0), rr_rate(set, 0));
  EXPECT_EQ(ga_gain(set, 0), 1.0);
  const CellUserSet full = set.with_load(1.0);
  EXPECT_NEAR(ga_rate(full, 1), (2e5 + 1e5 * kL[3]) / 3.0, 1e-9);
  EXPECT_NEAR(ga_gain(full, 1), 1.0 + 0.5 * kL[3], 1e-14);
  const double closed = 2e5 / 3.0 * (1.0 - std::pow(0.4, 3)) + 1e5 / 3.0 * l_mixture(3, 0.6);
  EXPECT_NEAR(ga_rate(set, 1) / closed, 1.0, 1e-14);
  for (std::size_t u = 0; u < 3; ++u) {
    EXPECT_NEAR(ga_gain(set, u) * rr_rate(set, u) / ga_rate(set, u), 1.0, 1e-12);
    EXPECT_NEAR(ga_increment(set, u), ga_gain(set, u) - 1.0, 1e-15);
    EXPECT_GE(ga_gain(set, u), 1.0);
  }
}

TEST(ExactBurstRate, Examples) {
  const CellUserSet one({stats_only(3e5, 1e5)}, 0.3, RateMap{});
  EXPECT_NEAR(exact_burst_rate(one, 0, ga_subset_gain(one)), 3e5 * 0.3, 1e-9);
  const CellUserSet full({stats_only(3e5, 1e5), stats_only(2e5, 5e4), stats_only(1e5, 0.0)}, 1.0, RateMap{});
  auto gain = [](std::size_t, std::span<const std::size_t> active) { return 1.0 + 0.1 * active.size(); };
  EXPECT_NEAR(exact_burst_rate(full, 0, gain), 1.3 * 3e5 / 3.0, 1e-9);
}

TEST(ExactBurstRate, MatchesClosedForm) {
  Rng rng = make_stream(11, {0});
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t n = 1 + draw % 12;
    const double rho = 0.02 + 0.98 * uniform_open0(rng);
    const CellUserSet set = random_stats_set(rng, n, rho);
    const auto gain = ga_subset_gain(set);
    for (std::size_t u = 0; u < n; ++u) {
      EXPECT_NEAR(exact_burst_rate(set, u, gain) / ga_rate(set, u), 1.0, 1e-10) << n << " " << rho;
    }
  }
}

TEST(ExactBurstRate, SizeGuard) {
  Rng rng = make_stream(12, {0});
  const CellUserSet big = random_stats_set(rng, kMaxEnumeratedUsers + 1, 0.5);
  EXPECT_THROW(exact_burst_rate(big, 0, ga_subset_gain(big)), CapacityError);
}

// ---------------------------------------------------------------------------
// Saturated fixed point

TEST(SaturatedFixedPoint, SingleUser) {
  const RateMap map = RateMap::make(180e3, 1e6);
  Rng rng = make_stream(13, {0});
  const CellUserSet set({with_model(random_model(rng, 1.0), map)}, 1.0, map);
  const MiaSolution s = mia_saturated_rates(set);
  EXPECT_NEAR(s.rates[0] / set.user(0).stats.mean_rate, 1.0, 1e-9);
  EXPECT_NEAR(mia_gain(set, s, 0), 1.0, 1e-9);
}

TEST(SaturatedFixedPoint, IdenticalUsersMatchMaxOrderStatistic) {
  const RateMap map = RateMap::make(180e3, 1e6);
  Eigen::VectorXd interferers(3);
  interferers << 0.2, 0.05, 0.01;
  const SinrModeld model(1.0, interferers, 0.01);
  const LinkBudget link = LinkBudget::make(1.0, 1.0, interferers, 0.01);
  for (std::size_t n : {2u, 4u, 8u}) {
    std::vector<CellUser> users(n, with_model(model, map));
    const CellUserSet set(users, 1.0, map);
    const MiaSolution s = mia_saturated_rates(set);
    Rng rng = make_stream(14, {static_cast<std::uint32_t>(n)});
    const int draws = 1'000'000;
    double sum = 0.0;
    for (int k = 0; k < draws; ++k) {
      double best = 0.0;
      for (std::size_t u = 0; u < n; ++u) best = std::max(best, rate(map, sample_sinr(link, rng)));
      sum += best;
    }
    const double oracle = sum / draws / static_cast<double>(n);
    for (std::size_t u = 0; u < n; ++u) {
      EXPECT_NEAR(s.rates[u] / oracle, 1.0, 0.01) << n;
      EXPECT_GE(mia_gain(set, s, u), 1.0);
    }
    EXPECT_NEAR(mia_gain(set, s, 0), oracle * n / set.user(0).stats.mean_rate, 0.01 * mia_gain(set, s, 0));
  }
}

TEST(SaturatedFixedPoint, WeakUserVanishes) {
  const RateMap map = RateMap::make(180e3, 1e6);
  Eigen::VectorXd interferers(1);
  interferers << 0.1;
  const SinrModeld strong(1.0, interferers, 0.01);
  const SinrModeld weak(1e-9, interferers, 0.01);
  const CellUserSet set({with_model(strong, map), with_model(weak, map)}, 1.0, map);
  const MiaSolution s = mia_saturated_rates(set);
  // The weak user's rate vanishes in absolute terms, but the metric is a
  // ratio to each user's own average, so it still wins a share of slots
  // and the strong user keeps only part of its solo rate.
  EXPECT_LT(s.rates[1], 1e-6 * s.rates[0]);
  EXPECT_LT(s.rates[0], set.user(0).stats.mean_rate);
  EXPECT_GT(s.rates[0], 0.4 * set.user(0).stats.mean_rate);
  EXPECT_GT(mia_gain(set, s, 1), 1.0);
  EXPECT_LT(s.max_residual, 1e-8);
}

TEST(SaturatedFixedPoint, ResidualAndMonteCarloCheck) {
  // Heterogeneous cell: at the solution, T_u(R) estimated by sampling the
  // proportional-fair winner must reproduce R_u.
  const RateMap map = RateMap::make(180e3, 1e6);
  Rng rng = make_stream(15, {0});
  std::vector<CellUser> users;
  std::vector<LinkBudget> links;
  for (int u = 0; u < 5; ++u) {
    const SinrModeld m = random_model(rng, std::pow(10.0, -1.0 + 2.0 * uniform_open0(rng)));
    users.push_back(with_model(m, map));
    links.push_back(LinkBudget::make(m.serving_mean(), 1.0, m.interferer_means(), m.noise()));
  }
  const CellUserSet set(users, 1.0, map);
  const MiaSolution s = mia_saturated_rates(set);
  EXPECT_LT(s.max_residual, 1e-8);
  EXPECT_LT(mia_residual(set, s.rates), 1e-8);

  const int draws = 2'000'000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(5);
  for (int k = 0; k < draws; ++k) {
    std::size_t best = 0;
    double best_metric = -1.0;
    double best_rate = 0.0;
    for (std::size_t u = 0; u < 5; ++u) {
      const double r = rate(map, sample_sinr(links[u], rng));
      if (r / s.rates[u] > best_metric) {
        best_metric = r / s.rates[u];
        best = u;
        best_rate = r;
      }
    }
    sum[best] += best_rate;
  }
  for (int u = 0; u < 5; ++u) EXPECT_NEAR(sum[u] / draws / s.rates[u], 1.0, 0.01) << u;
}

TEST(SaturatedFixedPoint, PowerScaleInvariance) {
  const RateMap map = RateMap::make(180e3, 1e6);
  Rng rng = make_stream(16, {0});
  std::vector<CellUser> base;
  std::vector<CellUser> scaled;
  for (int u = 0; u < 4; ++u) {
    const SinrModeld m = random_model(rng, 1.0);
    base.push_back(with_model(m, map));
    const double c = 1e-11;
    scaled.push_back(
        with_model(SinrModeld(c * m.serving_mean(), c * m.interferer_means(), c * m.noise()), map));
  }
  const CellUserSet a(base, 1.0, map);
  const CellUserSet b(scaled, 1.0, map);
  const MiaSolution sa = mia_saturated_rates(a);
  const MiaSolution sb = mia_saturated_rates(b);
  for (int u = 0; u < 4; ++u) EXPECT_NEAR(mia_gain(a, sa, u) / mia_gain(b, sb, u), 1.0, 1e-8);
}

TEST(SaturatedFixedPoint, BandwidthScaleEquivariance) {
  Rng rng = make_stream(17, {0});
  const RateMap map = RateMap::make(180e3, 1e6);
  const CellUserSet a = random_model_set(rng, 6, map);
  std::vector<CellUser> users;
  const RateMap wide = RateMap::make(180e3 * 7.5, 1e6);
  for (const auto& u : a.users()) users.push_back(with_model(*u.sinr, wide));
  const CellUserSet b(users, 1.0, wide);
  const MiaSolution sa = mia_saturated_rates(a);
  const MiaSolution sb = mia_saturated_rates(b);
  for (int u = 0; u < 6; ++u) {
    EXPECT_NEAR(sb.rates[u] / sa.rates[u], 7.5, 7.5e-8);
    EXPECT_NEAR(mia_gain(b, sb, u) / mia_gain(a, sa, u), 1.0, 1e-8);
  }
}

TEST(SaturatedFixedPoint, VectorPassAgreesWithPerUserMap) {
  Rng rng = make_stream(18, {0});
  const RateMap map = RateMap::make(180e3, 1e6);
  const CellUserSet set = random_model_set(rng, 7, map);
  Eigen::VectorXd rates(7);
  for (int u = 0; u < 7; ++u) rates[u] = set.user(u).stats.mean_rate * (0.1 + 0.2 * uniform_open0(rng));
  const MiaMapEvaluation eval = mia_map(set, rates);
  for (int u = 0; u < 7; ++u) {
    EXPECT_NEAR(eval.mapped[u] / mia_rate_map(set, u, rates), 1.0, 1e-9);
    EXPECT_NEAR(eval.log_jacobian.row(u).sum(), 0.0, 1e-9);
  }
  // Jacobian against central differences in log R.
  const double h = 1e-5;
  for (int v = 0; v < 7; ++v) {
    Eigen::VectorXd up = rates;
    Eigen::VectorXd down = rates;
    up[v] *= std::exp(h);
    down[v] *= std::exp(-h);
    const Eigen::VectorXd tu = mia_map(set, up).mapped;
    const Eigen::VectorXd td = mia_map(set, down).mapped;
    for (int u = 0; u < 7; ++u) {
      const double numeric = (std::log(tu[u]) - std::log(td[u])) / (2.0 * h);
      EXPECT_NEAR(numeric, eval.log_jacobian(u, v), 1e-5) << u << " " << v;
    }
  }
}

TEST(SaturatedFixedPoint, GaussSeidelAgreesOnSmallCells) {
  Rng rng = make_stream(19, {0});
  const RateMap map = RateMap::make(180e3, 1e6);
  const CellUserSet set = random_model_set(rng, 3, map);
  MiaOptions gs;
  gs.method = MiaMethod::DampedGaussSeidel;
  const MiaSolution a = mia_saturated_rates(set);
  const MiaSolution b = mia_saturated_rates(set, gs);
  for (int u = 0; u < 3; ++u) EXPECT_NEAR(b.rates[u] / a.rates[u], 1.0, 1e-7);
  EXPECT_GT(b.iterations, a.iterations);
}

TEST(SaturatedFixedPoint, IterationCapThrows) {
  Rng rng = make_stream(20, {0});
  const RateMap map = RateMap::make(180e3, 1e6);
  const CellUserSet set = random_model_set(rng, 4, map);
  MiaOptions opts;
  opts.max_iterations = 1;
  try {
    mia_saturated_rates(set, opts);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_GT(e.residual(), opts.tolerance);
  }
}

TEST(SaturatedFixedPoint, NeedsSinrModels) {
  const CellUserSet set({stats_only(1.0, 0.5), stats_only(2.0, 0.5)}, 1.0, RateMap{});
  EXPECT_THROW(mia_saturated_rates(set), DomainError);
}

// ---------------------------------------------------------------------------
// Hybrid

TEST(Hybrid, Limits) {
  const CellUserSet set({stats_only(3e5, 1e5), stats_only(2e5, 8e4), stats_only(1e5, 3e4), stats_only(1e5, 0.0)},
                        1.0, RateMap{});
  const double gbar = 1.7;
  for (std::size_t u = 0; u < 4; ++u) {
    EXPECT_EQ(ha_gain(set, u, gbar), gbar);
    EXPECT_NEAR(ha_rate(set, u, gbar), gbar * rr_rate(set, u), 1e-9);
    const CellUserSet light = set.with_load(1e-9);
    EXPECT_NEAR(ha_gain(light, u, gbar), ga_gain(light, u), 1e-8);
  }
  const CellUserSet flat({stats_only(1e5, 0.0), stats_only(1e5, 0.0)}, 0.4, RateMap{});
  EXPECT_EQ(ha_gain(flat, 0, 1.0), 1.0);
  EXPECT_EQ(ha_rate(flat, 0, 1.0), rr_rate(flat, 0));
  const CellUserSet lone({stats_only(1e5, 3e4)}, 0.4, RateMap{});
  for (double rho : {0.1, 0.5, 1.0}) EXPECT_EQ(ha_gain(lone.with_load(rho), 0, 1.0), 1.0);
}

TEST(Hybrid, ZeroSigmaKeepsTheLoadShape) {
  // sigma = 0 uses the sigma-free ratio; it must equal the ratio of a user
  // with tiny positive sigma in the same cell.
  const CellUserSet a({stats_only(1e5, 0.0), stats_only(2e5, 1e4)}, 0.35, RateMap{});
  const CellUserSet b({stats_only(1e5, 1e-12), stats_only(2e5, 1e4)}, 0.35, RateMap{});
  EXPECT_NEAR(ha_gain(a, 0, 1.4), ha_gain(b, 0, 1.4), 1e-12);
}

TEST(Hybrid, MonotoneAndBracketed) {
  Rng rng = make_stream(21, {0});
  for (int draw = 0; draw < 50; ++draw) {
    const double rho = 0.05 + 0.9 * uniform_open0(rng);
    const CellUserSet set = random_stats_set(rng, 2 + draw % 10, rho);
    const CellUserSet full = set.with_load(1.0);
    for (std::size_t u = 0; u < set.size(); ++u) {
      const double g_full = ga_gain(full, u);
      const double gbar = g_full + uniform_open0(rng);
      const double lo = ha_gain(set, u, gbar);
      EXPECT_LT(lo, ha_gain(set, u, gbar + 0.1));
      EXPECT_GE(lo, std::min(1.0, gbar));
      // Above the GA saturated gain the blend sits between the GA gain
      // and the saturated MIA gain.
      EXPECT_GE(lo, ga_gain(set, u) - 1e-12);
      EXPECT_LE(lo, gbar + 1e-12);
    }
  }
}

TEST(Report, Invariants) {
  Rng rng = make_stream(22, {0});
  const RateMap map = RateMap::make(180e3, 1e6);
  const CellUserSet saturated = random_model_set(rng, 5, map);
  const MiaSolution mia = mia_saturated_rates(saturated);
  const EstimateReport full = estimate(saturated, mia);
  for (int u = 0; u < 5; ++u) {
    EXPECT_EQ(full.ha_gain[u], full.mia_gain[u]);
    EXPECT_NEAR(full.ha_rate[u] / full.mia_sat_rate[u], 1.0, 1e-14);
  }
  const EstimateReport half = estimate(saturated.with_load(0.5), mia);
  EXPECT_TRUE((half.ga_gain.array() >= 1.0).all());
  EXPECT_TRUE((half.rr_rate.array() > 0.0).all());
  EXPECT_TRUE((half.ha_rate.array() > 0.0).all());
  EXPECT_EQ(half.mia_sat_rate, full.mia_sat_rate);
}
