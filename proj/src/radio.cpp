#include "pfsburst/radio.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

#include "pfsburst/errors.hpp"

namespace pfs {

namespace {

Eigen::Vector2d rotate(const Eigen::Vector2d& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

// Flat hexagon of circumradius `radius` centred at the origin: the Voronoi
// cell of a triangular lattice whose neighbours sit at multiples of 60 deg.
bool inside_hexagon(const Eigen::Vector2d& p, double radius) {
  const double apothem = radius * std::sqrt(3.0) / 2.0;
  for (int k = 0; k < 3; ++k) {
    const double angle = k * std::numbers::pi / 3.0;
    const double proj = p.x() * std::cos(angle) + p.y() * std::sin(angle);
    if (std::abs(proj) > apothem) return false;
  }
  return true;
}

}  // namespace

CellLayout::CellLayout(Eigen::Matrix2Xd bs_positions, double cell_radius, bool wraparound,
                       std::array<Eigen::Vector2d, 6> wrap_shifts)
    : positions_(std::move(bs_positions)),
      cell_radius_(cell_radius),
      wraparound_(wraparound),
      shifts_(wrap_shifts) {
  if (positions_.cols() < 1) throw DomainError("CellLayout: at least one site required");
  if (!(cell_radius_ > 0.0)) throw DomainError("CellLayout: cell_radius must be positive");
  for (Eigen::Index i = 0; i < positions_.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < positions_.cols(); ++j) {
      if (!((positions_.col(i) - positions_.col(j)).norm() > 0.0)) {
        throw DomainError("CellLayout: coincident sites");
      }
    }
  }
}

CellLayout CellLayout::hexagonal(int rings, double inter_site_distance_m, bool wraparound) {
  if (rings < 0) throw DomainError("CellLayout::hexagonal: negative ring count");
  if (!(inter_site_distance_m > 0.0)) {
    throw DomainError("CellLayout::hexagonal: inter-site distance must be positive");
  }
  const double isd = inter_site_distance_m;
  const Eigen::Vector2d a1(isd, 0.0);
  const Eigen::Vector2d a2(isd / 2.0, isd * std::sqrt(3.0) / 2.0);

  std::vector<Eigen::Vector2d> sites;
  sites.emplace_back(0.0, 0.0);
  for (int ring = 1; ring <= rings; ++ring) {
    for (int q = -ring; q <= ring; ++q) {
      for (int r = -ring; r <= ring; ++r) {
        const int s = -q - r;
        if (std::max({std::abs(q), std::abs(r), std::abs(s)}) != ring) continue;
        sites.push_back(q * a1 + r * a2);
      }
    }
  }
  Eigen::Matrix2Xd positions(2, static_cast<Eigen::Index>(sites.size()));
  for (std::size_t i = 0; i < sites.size(); ++i) positions.col(static_cast<Eigen::Index>(i)) = sites[i];

  std::array<Eigen::Vector2d, 6> shifts{};
  const Eigen::Vector2d base = (rings + 1) * a1 + rings * a2;
  for (int k = 0; k < 6; ++k) shifts[k] = rotate(base, k * std::numbers::pi / 3.0);

  return CellLayout(std::move(positions), isd / std::sqrt(3.0), wraparound, shifts);
}

double CellLayout::distance(const Eigen::Vector2d& point, std::size_t bs) const {
  const Eigen::Vector2d site = positions_.col(static_cast<Eigen::Index>(bs));
  double best = (point - site).norm();
  if (wraparound_) {
    for (const auto& shift : shifts_) best = std::min(best, (point - site - shift).norm());
  }
  return best;
}

Eigen::Vector2d CellLayout::drop_user(std::size_t bs, double min_distance_m, Rng& rng) const {
  if (!(min_distance_m < cell_radius_ * std::sqrt(3.0) / 2.0)) {
    throw DomainError("CellLayout::drop_user: minimum distance exceeds the cell apothem");
  }
  const Eigen::Vector2d site = positions_.col(static_cast<Eigen::Index>(bs));
  for (;;) {
    const Eigen::Vector2d offset((2.0 * uniform_open0(rng) - 1.0) * cell_radius_,
                                 (2.0 * uniform_open0(rng) - 1.0) * cell_radius_);
    if (offset.norm() >= min_distance_m && inside_hexagon(offset, cell_radius_)) {
      return site + offset;
    }
  }
}

LinkBudget LinkBudget::make(double tx_power, double large_scale_gain,
                            Eigen::VectorXd interferer_mean_powers, double noise_power) {
  if (!(tx_power > 0.0) || !(large_scale_gain > 0.0)) {
    throw DomainError("LinkBudget: serving mean power must be positive");
  }
  if (!(noise_power > 0.0)) throw DomainError("LinkBudget: noise power must be positive");
  if ((interferer_mean_powers.array() < 0.0).any() || !interferer_mean_powers.allFinite()) {
    throw DomainError("LinkBudget: interferer powers must be finite and non-negative");
  }
  LinkBudget link;
  link.tx_power = tx_power;
  link.large_scale_gain = large_scale_gain;
  link.serving_mean_power = tx_power * large_scale_gain;
  link.interferer_mean_powers = std::move(interferer_mean_powers);
  link.noise_power = noise_power;
  return link;
}

RateMap RateMap::make(double bandwidth, double sinr_cap) {
  if (!(bandwidth > 0.0)) throw DomainError("RateMap: bandwidth must be positive");
  if (!(sinr_cap > 0.0) || !std::isfinite(sinr_cap)) {
    throw DomainError("RateMap: sinr_cap must be positive and finite");
  }
  return RateMap{bandwidth, sinr_cap};
}

double RateMap::max_rate() const { return bandwidth * std::log1p(sinr_cap) / std::numbers::ln2; }

double large_scale_gain(double distance_m, double shadowing_db) {
  if (!(distance_m > 0.0)) throw DomainError("large_scale_gain: distance must be positive");
  const double path_loss_db = 128.1 + 37.6 * std::log10(distance_m / 1000.0);
  return std::pow(10.0, (shadowing_db - path_loss_db) / 10.0);
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

ChannelSample sample_channel(const LinkBudget& link, Rng& rng) {
  ChannelSample sample;
  sample.serving_power = link.serving_mean_power * unit_exponential(rng);
  sample.interferer_powers.resize(link.interferer_mean_powers.size());
  double interference = 0.0;
  for (Eigen::Index i = 0; i < link.interferer_mean_powers.size(); ++i) {
    sample.interferer_powers[i] = link.interferer_mean_powers[i] * unit_exponential(rng);
    interference += sample.interferer_powers[i];
  }
  sample.sinr = sample.serving_power / (interference + link.noise_power);
  return sample;
}

double sample_sinr(const LinkBudget& link, Rng& rng) {
  const double serving = link.serving_mean_power * unit_exponential(rng);
  double interference = 0.0;
  const double* means = link.interferer_mean_powers.data();
  for (Eigen::Index i = 0; i < link.interferer_mean_powers.size(); ++i) {
    interference += means[i] * unit_exponential(rng);
  }
  return serving / (interference + link.noise_power);
}

double rate(const RateMap& map, double sinr) {
  if (!(sinr >= 0.0)) throw DomainError("rate: SINR must be non-negative");
  return map.bandwidth * std::log1p(std::min(sinr, map.sinr_cap)) / std::numbers::ln2;
}

double rate_inverse(const RateMap& map, double rate) {
  if (!(rate >= 0.0)) throw DomainError("rate_inverse: rate must be non-negative");
  const double sinr = std::expm1(rate / map.bandwidth * std::numbers::ln2);
  return std::min(sinr, map.sinr_cap);
}

}  // namespace pfs
