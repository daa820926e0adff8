#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Core>

#include "pfsburst/random.hpp"

namespace pfs {

/// Base-station sites on the plane, optionally with hexagonal wraparound.
class CellLayout {
 public:
  CellLayout(Eigen::Matrix2Xd bs_positions, double cell_radius, bool wraparound,
             std::array<Eigen::Vector2d, 6> wrap_shifts = {});

  /// Hexagonal grid of `rings` rings around a centre site (3r^2+3r+1 sites).
  /// Wraparound images come from the six tiling shifts of the cluster.
  static CellLayout hexagonal(int rings, double inter_site_distance_m, bool wraparound);

  std::size_t size() const { return static_cast<std::size_t>(positions_.cols()); }
  const Eigen::Matrix2Xd& positions() const { return positions_; }
  double cell_radius() const { return cell_radius_; }
  bool wraparound() const { return wraparound_; }

  /// Distance from `point` to site `bs`, taking the nearest wrap image.
  double distance(const Eigen::Vector2d& point, std::size_t bs) const;

  /// Uniform point inside the hexagonal cell of site `bs`, at least
  /// `min_distance_m` from the site.
  Eigen::Vector2d drop_user(std::size_t bs, double min_distance_m, Rng& rng) const;

 private:
  Eigen::Matrix2Xd positions_;
  double cell_radius_;
  bool wraparound_;
  std::array<Eigen::Vector2d, 6> shifts_;
};

/// Mean powers seen by one user: serving site plus its interferer set.
struct LinkBudget {
  double tx_power = 0.0;          // W
  double large_scale_gain = 0.0;  // path loss and shadowing, linear
  double serving_mean_power = 0.0;  // tx_power * large_scale_gain
  Eigen::VectorXd interferer_mean_powers;
  double noise_power = 0.0;

  static LinkBudget make(double tx_power, double large_scale_gain,
                         Eigen::VectorXd interferer_mean_powers, double noise_power);
};

struct ChannelSample {
  double serving_power = 0.0;
  Eigen::VectorXd interferer_powers;
  double sinr = 0.0;
};

/// Capped Shannon map r(phi) = B log2(1 + min(phi, cap)).
struct RateMap {
  double bandwidth = 180e3;  // Hz
  double sinr_cap = 1e6;     // 60 dB

  static RateMap make(double bandwidth, double sinr_cap);
  double max_rate() const;
};

/// 128.1 + 37.6 log10(d_km) dB path loss with additive shadowing.
double large_scale_gain(double distance_m, double shadowing_db);

double db_to_linear(double db);
double dbm_to_watt(double dbm);

/// Independent Rayleigh draw of every term of a link budget.
ChannelSample sample_channel(const LinkBudget& link, Rng& rng);

/// Same draw order as sample_channel, without materializing the powers.
double sample_sinr(const LinkBudget& link, Rng& rng);

double rate(const RateMap& map, double sinr);
double rate_inverse(const RateMap& map, double rate);

}  // namespace pfs
