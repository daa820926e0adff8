#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pfsburst/errors.hpp"
#include "pfsburst/radio.hpp"
#include "pfsburst/sinr_model.hpp"

using namespace pfs;

TEST(PathLoss, OneKilometreIsTheReferenceLoss) {
  EXPECT_NEAR(large_scale_gain(1000.0, 0.0) / std::pow(10.0, -12.81), 1.0, 1e-12);
  EXPECT_NEAR(large_scale_gain(1000.0, 10.0) / std::pow(10.0, -11.81), 1.0, 1e-12);
}

TEST(PathLoss, HalfKilometreMatchesHandValue) {
  EXPECT_NEAR(large_scale_gain(500.0, 0.0) / 2.098325138837318e-12, 1.0, 1e-12);
}

TEST(PathLoss, RejectsNonPositiveDistance) {
  EXPECT_THROW(large_scale_gain(0.0, 0.0), DomainError);
  EXPECT_THROW(large_scale_gain(-5.0, 0.0), DomainError);
}

TEST(Units, DecibelConversions) {
  EXPECT_DOUBLE_EQ(db_to_linear(10.0), 10.0);
  EXPECT_DOUBLE_EQ(dbm_to_watt(30.0), 1.0);
  EXPECT_NEAR(dbm_to_watt(0.0), 1e-3, 1e-18);
}

TEST(RateMapTest, ShannonValues) {
  const RateMap map = RateMap::make(180e3, 1e3);
  EXPECT_EQ(rate(map, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(rate(map, 1.0), 180e3);
  EXPECT_DOUBLE_EQ(rate(RateMap::make(1.0, 1e3), 3.0), 2.0);
  EXPECT_DOUBLE_EQ(rate(map, 5e3), map.max_rate());
  EXPECT_THROW(rate(map, -1e-9), DomainError);
}

TEST(RateMapTest, InverseRoundTrip) {
  const RateMap map = RateMap::make(180e3, 1e3);
  EXPECT_EQ(rate_inverse(map, 0.0), 0.0);
  EXPECT_NEAR(rate_inverse(map, map.bandwidth), 1.0, 1e-15);
  EXPECT_NEAR(rate_inverse(map, rate(map, 0.37)), 0.37, 1e-12);
  for (double x = 1e-6; x <= 1e3; x *= 1.7) {
    EXPECT_NEAR(rate_inverse(map, rate(map, x)) / x, 1.0, 1e-12) << x;
  }
  EXPECT_EQ(rate_inverse(map, 10.0 * map.max_rate()), map.sinr_cap);
  EXPECT_THROW(rate_inverse(map, -1.0), DomainError);
}

TEST(RateMapTest, RejectsBadParameters) {
  EXPECT_THROW(RateMap::make(0.0, 1e3), DomainError);
  EXPECT_THROW(RateMap::make(1.0, 0.0), DomainError);
  EXPECT_THROW(RateMap::make(1.0, INFINITY), DomainError);
}

TEST(Layout, HexagonalSiteCountsAndSpacing) {
  EXPECT_EQ(CellLayout::hexagonal(0, 500.0, false).size(), 1u);
  EXPECT_EQ(CellLayout::hexagonal(1, 500.0, false).size(), 7u);
  const CellLayout layout = CellLayout::hexagonal(2, 500.0, true);
  ASSERT_EQ(layout.size(), 19u);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    double nearest = 1e300;
    for (std::size_t j = 0; j < layout.size(); ++j) {
      if (i != j) nearest = std::min(nearest, layout.distance(layout.positions().col(i), j));
    }
    EXPECT_NEAR(nearest, 500.0, 1e-9);
  }
}

TEST(Layout, WraparoundMakesEverySiteSeeSixNeighbours) {
  const CellLayout layout = CellLayout::hexagonal(2, 500.0, true);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    int close = 0;
    for (std::size_t j = 0; j < layout.size(); ++j) {
      if (i != j && std::abs(layout.distance(layout.positions().col(i), j) - 500.0) < 1e-6) ++close;
    }
    EXPECT_EQ(close, 6) << "site " << i;
  }
}

TEST(Layout, DroppedUsersStayInTheirCell) {
  const CellLayout layout = CellLayout::hexagonal(2, 500.0, true);
  Rng rng = make_stream(3, {1});
  for (int k = 0; k < 2000; ++k) {
    const std::size_t bs = static_cast<std::size_t>(k) % layout.size();
    const Eigen::Vector2d p = layout.drop_user(bs, 35.0, rng);
    const double own = layout.distance(p, bs);
    EXPECT_GE(own, 35.0);
    for (std::size_t j = 0; j < layout.size(); ++j) EXPECT_LE(own, layout.distance(p, j) + 1e-9);
  }
  EXPECT_THROW(layout.drop_user(0, 500.0, rng), DomainError);
}

TEST(Layout, RejectsDegenerateInput) {
  EXPECT_THROW(CellLayout::hexagonal(-1, 500.0, false), DomainError);
  EXPECT_THROW(CellLayout::hexagonal(1, 0.0, false), DomainError);
  Eigen::Matrix2Xd twice(2, 2);
  twice << 0.0, 0.0, 1.0, 1.0;
  EXPECT_THROW(CellLayout(twice, 1.0, false), DomainError);
}

TEST(Channel, NoInterferersGivesServingOverNoise) {
  const LinkBudget link = LinkBudget::make(1.0, 1.0, Eigen::VectorXd(), 1.0);
  Rng rng = make_stream(1, {2});
  for (int k = 0; k < 100; ++k) {
    const ChannelSample s = sample_channel(link, rng);
    EXPECT_EQ(s.sinr, s.serving_power);
  }
}

TEST(Channel, SampleSinrFollowsSampleChannel) {
  Eigen::VectorXd interferers(3);
  interferers << 0.2, 0.05, 0.5;
  const LinkBudget link = LinkBudget::make(2.0, 0.5, interferers, 0.1);
  Rng a = make_stream(9, {0});
  Rng b = make_stream(9, {0});
  for (int k = 0; k < 1000; ++k) EXPECT_EQ(sample_channel(link, a).sinr, sample_sinr(link, b));
}

TEST(Channel, MeanServingPower) {
  Eigen::VectorXd interferers(2);
  interferers << 0.3, 0.1;
  const LinkBudget link = LinkBudget::make(1.0, 2.0, interferers, 0.01);
  Rng rng = make_stream(4, {0});
  double sum = 0.0;
  const int n = 1'000'000;
  for (int k = 0; k < n; ++k) sum += sample_channel(link, rng).serving_power;
  EXPECT_NEAR(sum / n / link.serving_mean_power, 1.0, 0.005);
}

TEST(Channel, EmpiricalSinrMatchesClosedFormLaw) {
  Eigen::VectorXd interferers(4);
  interferers << 0.3, 0.3, 0.05, 0.01;
  const LinkBudget link = LinkBudget::make(1.0, 1.0, interferers, 0.02);
  const SinrModeld model = SinrModeld::from_link(link);
  Rng rng = make_stream(5, {0});
  const int n = 1'000'000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = sample_sinr(link, rng);
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  for (int i = 0; i < n; i += 7) {
    const double f = sinr_cdf(model, xs[static_cast<std::size_t>(i)]);
    ks = std::max({ks, std::abs(f - double(i) / n), std::abs(f - double(i + 1) / n)});
  }
  EXPECT_LT(ks, 0.01);
}

TEST(Channel, LinkBudgetValidation) {
  EXPECT_THROW(LinkBudget::make(0.0, 1.0, Eigen::VectorXd(), 1.0), DomainError);
  EXPECT_THROW(LinkBudget::make(1.0, 1.0, Eigen::VectorXd(), 0.0), DomainError);
  EXPECT_THROW(LinkBudget::make(1.0, 1.0, Eigen::VectorXd::Constant(1, -1.0), 1.0), DomainError);
}
