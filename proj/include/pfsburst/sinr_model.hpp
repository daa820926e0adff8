#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "pfsburst/errors.hpp"
#include "pfsburst/quadrature.hpp"
#include "pfsburst/radio.hpp"

namespace pfs {

/// SINR law of one user under independent Rayleigh fading on the serving
/// link and on every interferer. Immutable once built.
template <typename Scalar>
class SinrModel {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  SinrModel(Scalar serving_mean, const Vector& interferer_means, Scalar noise)
      : serving_mean_(serving_mean), noise_(noise) {
    if (!(serving_mean > Scalar(0))) throw DomainError("SinrModel: serving mean must be positive");
    if (!(noise > Scalar(0))) throw DomainError("SinrModel: noise must be positive");
    std::vector<Scalar> kept;
    for (Eigen::Index i = 0; i < interferer_means.size(); ++i) {
      const Scalar p = interferer_means[i];
      if (!(p >= Scalar(0)) || !std::isfinite(static_cast<double>(p))) {
        throw DomainError("SinrModel: interferer means must be finite and non-negative");
      }
      if (p > Scalar(0)) kept.push_back(p);
    }
    interferer_means_ = Eigen::Map<const Vector>(kept.data(), static_cast<Eigen::Index>(kept.size()));
    ratios_ = interferer_means_ / serving_mean_;
    noise_ratio_ = noise_ / serving_mean_;
  }

  static SinrModel from_link(const LinkBudget& link) {
    return SinrModel(Scalar(link.serving_mean_power), link.interferer_mean_powers.cast<Scalar>(),
                     Scalar(link.noise_power));
  }

  Scalar serving_mean() const { return serving_mean_; }
  const Vector& interferer_means() const { return interferer_means_; }
  Scalar noise() const { return noise_; }

  /// p_i / p_serving for the retained interferers.
  const Vector& interference_ratios() const { return ratios_; }
  /// noise / p_serving.
  Scalar noise_ratio() const { return noise_ratio_; }

 private:
  Scalar serving_mean_;
  Vector interferer_means_;
  Scalar noise_;
  Vector ratios_;
  Scalar noise_ratio_;
};

using SinrModeld = SinrModel<double>;

/// log P(Phi > phi); the interferer product is accumulated as a sum of logs.
template <typename Scalar>
Scalar sinr_log_survival(const SinrModel<Scalar>& model, Scalar phi) {
  Scalar acc = -phi * model.noise_ratio();
  const auto& a = model.interference_ratios();
  for (Eigen::Index i = 0; i < a.size(); ++i) acc -= std::log1p(a[i] * phi);
  return acc;
}

template <typename Scalar>
Scalar sinr_survival(const SinrModel<Scalar>& model, Scalar phi) {
  return std::exp(sinr_log_survival(model, phi));
}

template <typename Scalar>
Scalar sinr_cdf(const SinrModel<Scalar>& model, Scalar phi) {
  if (!(phi >= Scalar(0))) throw DomainError("sinr_cdf: phi must be non-negative");
  if (std::isinf(static_cast<double>(phi))) return Scalar(1);
  return -std::expm1(sinr_log_survival(model, phi));
}

template <typename Scalar>
Scalar sinr_pdf(const SinrModel<Scalar>& model, Scalar phi) {
  if (!(phi > Scalar(0))) throw DomainError("sinr_pdf: phi must be positive");
  if (std::isinf(static_cast<double>(phi))) return Scalar(0);
  Scalar hazard = model.noise_ratio();
  const auto& a = model.interference_ratios();
  for (Eigen::Index i = 0; i < a.size(); ++i) hazard += a[i] / (Scalar(1) + a[i] * phi);
  return sinr_survival(model, phi) * hazard;
}

/// 1 / (noise ratio + sum of interference ratios): the SINR at which the
/// survival function has dropped by about e^-1.
template <typename Scalar>
Scalar sinr_scale(const SinrModel<Scalar>& model) {
  return Scalar(1) / (model.noise_ratio() + model.interference_ratios().sum());
}

/// Mean r_u and standard deviation sigma_u of the capped Shannon rate.
struct RateStats {
  double mean_rate = 0.0;
  double std_rate = 0.0;
};

/// E[g(Phi)] for g constant beyond the map's cap: the continuous part is
/// integrated on [0, cap], the capped mass enters as g(cap) P(Phi > cap).
template <typename Scalar, typename G>
Scalar expect_capped(const SinrModel<Scalar>& model, Scalar cap, G&& g,
                     const QuadratureOptions& opts = {}) {
  auto integrand = [&](Scalar phi) -> Scalar {
    if (!(phi > Scalar(0))) return Scalar(0);
    return g(phi) * sinr_pdf(model, phi);
  };
  const auto body = integrate_mapped<Scalar>(integrand, Scalar(0), cap, opts, sinr_scale(model));
  return body.value + g(cap) * sinr_survival(model, cap);
}

template <typename Scalar>
RateStats rate_stats(const SinrModel<Scalar>& model, const RateMap& map,
                     const QuadratureOptions& opts = {}) {
  // Moments per hertz, so the quadrature tolerances do not depend on the
  // bandwidth; the rate is linear in it.
  const Scalar cap = Scalar(map.sinr_cap);
  auto spectral = [&](Scalar phi) { return std::log1p(std::min(phi, cap)) / Scalar(std::numbers::ln2); };
  const Scalar mean = expect_capped(model, cap, spectral, opts);
  const Scalar var = expect_capped(
      model, cap, [&](Scalar phi) { const Scalar d = spectral(phi) - mean; return d * d; }, opts);
  return {map.bandwidth * static_cast<double>(mean), map.bandwidth * static_cast<double>(std::sqrt(var))};
}

}  // namespace pfs
