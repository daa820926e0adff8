#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include <Eigen/Core>

#include "pfsburst/errors.hpp"

namespace pfs {

struct QuadratureOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  int max_intervals = 4000;
};

template <typename Scalar>
struct QuadratureResult {
  Scalar value{};
  Scalar abs_error{};
  int evaluations = 0;
};

namespace detail {

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1] (QUADPACK qk15).
inline constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename Scalar>
struct Segment {
  Scalar a, b, value, error;
  bool operator<(const Segment& other) const { return error < other.error; }
};

template <typename Scalar, typename F>
Segment<Scalar> gauss_kronrod15(F& f, Scalar a, Scalar b) {
  const Scalar centre = (a + b) / 2;
  const Scalar half = (b - a) / 2;
  const Scalar f_centre = f(centre);
  Scalar f_lo[7];
  Scalar f_hi[7];
  Scalar kronrod = f_centre * Scalar(kWgk[7]);
  Scalar gauss = f_centre * Scalar(kWg[3]);
  Scalar abs_sum = std::abs(kronrod);
  for (int j = 0; j < 7; ++j) {
    const Scalar dx = half * Scalar(kXgk[j]);
    f_lo[j] = f(centre - dx);
    f_hi[j] = f(centre + dx);
    const Scalar sum = f_lo[j] + f_hi[j];
    kronrod += Scalar(kWgk[j]) * sum;
    abs_sum += Scalar(kWgk[j]) * (std::abs(f_lo[j]) + std::abs(f_hi[j]));
    if (j % 2 == 1) gauss += Scalar(kWg[j / 2]) * sum;
  }
  // QUADPACK error heuristic: scale |K - G| by the integrand's variation.
  const Scalar mean = kronrod / 2;
  Scalar variation = Scalar(kWgk[7]) * std::abs(f_centre - mean);
  for (int j = 0; j < 7; ++j) {
    variation += Scalar(kWgk[j]) * (std::abs(f_lo[j] - mean) + std::abs(f_hi[j] - mean));
  }
  const Scalar width = std::abs(half);
  variation *= width;
  abs_sum *= width;
  Scalar error = std::abs((kronrod - gauss) * half);
  if (variation != Scalar(0) && error != Scalar(0)) {
    error = variation * std::min(Scalar(1), std::pow(Scalar(200) * error / variation, Scalar(1.5)));
  }
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  if (abs_sum > std::numeric_limits<Scalar>::min() / (Scalar(50) * eps)) {
    error = std::max(Scalar(50) * eps * abs_sum, error);
  }
  return {a, b, kronrod * half, error};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod 7/15 on a finite interval: the segment
/// with the largest error estimate is bisected until the summed estimate
/// meets max(abs_tol, rel_tol * |value|). Throws NumericalError otherwise.
template <typename Scalar, typename F>
QuadratureResult<Scalar> integrate(F&& f, Scalar a, Scalar b, const QuadratureOptions& opts = {}) {
  if (opts.abs_tol <= 0.0 && opts.rel_tol < 50.0 * std::numeric_limits<double>::epsilon()) {
    throw NumericalError("integrate: relative tolerance below round-off with no absolute tolerance",
                         opts.rel_tol);
  }
  if (a == b) return {Scalar(0), Scalar(0), 0};
  std::priority_queue<detail::Segment<Scalar>> heap;
  auto first = detail::gauss_kronrod15<Scalar>(f, a, b);
  Scalar total = first.value;
  Scalar error = first.error;
  heap.push(first);
  int evaluations = 15;
  int intervals = 1;
  auto done = [&] {
    return error <= std::max(Scalar(opts.abs_tol), Scalar(opts.rel_tol) * std::abs(total));
  };
  while (!done()) {
    if (intervals >= opts.max_intervals) {
      throw NumericalError("integrate: tolerance not reached after " +
                               std::to_string(intervals) + " intervals",
                           static_cast<double>(error));
    }
    const auto worst = heap.top();
    heap.pop();
    const Scalar mid = (worst.a + worst.b) / 2;
    if (!(mid > worst.a && mid < worst.b)) {
      throw NumericalError("integrate: interval cannot be bisected further",
                           static_cast<double>(error));
    }
    auto left = detail::gauss_kronrod15<Scalar>(f, worst.a, mid);
    auto right = detail::gauss_kronrod15<Scalar>(f, mid, worst.b);
    evaluations += 30;
    ++intervals;
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  // Re-sum from the leaves to drop the accumulated update round-off.
  Scalar value(0);
  Scalar err(0);
  while (!heap.empty()) {
    value += heap.top().value;
    err += heap.top().error;
    heap.pop();
  }
  return {value, err, evaluations};
}

namespace detail {

template <typename Scalar>
struct VectorSegment {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Scalar a, b;
  Vector value, error;
  Scalar priority;
  bool operator<(const VectorSegment& other) const { return priority < other.priority; }
};

template <typename Scalar, typename F>
VectorSegment<Scalar> gauss_kronrod15_vector(F& f, Scalar a, Scalar b, Eigen::Index controlled) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Scalar centre = (a + b) / 2;
  const Scalar half = (b - a) / 2;
  Vector samples[15];
  samples[7] = f(centre);
  for (int j = 0; j < 7; ++j) {
    const Scalar dx = half * Scalar(kXgk[j]);
    samples[j] = f(centre - dx);
    samples[14 - j] = f(centre + dx);
  }
  Vector kronrod = samples[7] * Scalar(kWgk[7]);
  Vector gauss = samples[7].head(controlled) * Scalar(kWg[3]);
  for (int j = 0; j < 7; ++j) {
    const Vector sum = samples[j] + samples[14 - j];
    kronrod += Scalar(kWgk[j]) * sum;
    if (j % 2 == 1) gauss += Scalar(kWg[j / 2]) * sum.head(controlled);
  }
  const Vector mean = kronrod.head(controlled) / 2;
  Vector variation = Scalar(kWgk[7]) * (samples[7].head(controlled) - mean).cwiseAbs();
  Vector abs_sum = Scalar(kWgk[7]) * samples[7].head(controlled).cwiseAbs();
  for (int j = 0; j < 7; ++j) {
    variation += Scalar(kWgk[j]) * ((samples[j].head(controlled) - mean).cwiseAbs() +
                                    (samples[14 - j].head(controlled) - mean).cwiseAbs());
    abs_sum += Scalar(kWgk[j]) * (samples[j].head(controlled).cwiseAbs() +
                                  samples[14 - j].head(controlled).cwiseAbs());
  }
  const Scalar width = std::abs(half);
  Vector error = ((kronrod.head(controlled) - gauss) * half).cwiseAbs();
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  for (Eigen::Index i = 0; i < controlled; ++i) {
    const Scalar var = variation[i] * width;
    if (var != Scalar(0) && error[i] != Scalar(0)) {
      error[i] = var * std::min(Scalar(1), std::pow(Scalar(200) * error[i] / var, Scalar(1.5)));
    }
    error[i] = std::max(Scalar(50) * eps * abs_sum[i] * width, error[i]);
  }
  return {a, b, kronrod * half, error, Scalar(0)};
}

}  // namespace detail

/// Vector-valued variant of integrate(). Only the first `controlled`
/// components drive refinement; each must meet its own tolerance. The rest
/// are integrated on the same partition.
/// `points` is the sorted initial partition (at least two entries).
template <typename Scalar, typename F>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> integrate_vector(F&& f, const std::vector<Scalar>& points,
                                                          Eigen::Index controlled,
                                                          const QuadratureOptions& opts = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (opts.abs_tol <= 0.0 && opts.rel_tol < 50.0 * std::numeric_limits<double>::epsilon()) {
    throw NumericalError("integrate_vector: relative tolerance below round-off with no absolute tolerance",
                         opts.rel_tol);
  }
  if (points.size() < 2) throw DomainError("integrate_vector: need at least one interval");
  std::vector<detail::VectorSegment<Scalar>> initial;
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    if (!(points[k + 1] >= points[k])) throw DomainError("integrate_vector: points must be sorted");
    if (points[k + 1] > points[k]) {
      initial.push_back(detail::gauss_kronrod15_vector<Scalar>(f, points[k], points[k + 1], controlled));
    }
  }
  if (initial.empty()) return Vector::Zero(f(points.front()).size());
  Vector total = Vector::Zero(initial.front().value.size());
  Vector error = Vector::Zero(controlled);
  for (const auto& s : initial) {
    total += s.value;
    error += s.error;
  }
  auto tolerance = [&] {
    return (Scalar(opts.rel_tol) * total.head(controlled).cwiseAbs())
        .cwiseMax(Scalar(opts.abs_tol))
        .eval();
  };
  auto rank = [&](detail::VectorSegment<Scalar>& s, const Vector& tol) {
    s.priority = s.error.cwiseQuotient(tol.cwiseMax(std::numeric_limits<Scalar>::min())).maxCoeff();
  };
  std::priority_queue<detail::VectorSegment<Scalar>> heap;
  const Vector tol0 = tolerance();
  for (auto& s : initial) {
    rank(s, tol0);
    heap.push(std::move(s));
  }
  int intervals = static_cast<int>(heap.size());
  while (true) {
    const Vector tol = tolerance();
    if ((error.array() <= tol.array()).all()) break;
    if (intervals >= opts.max_intervals) {
      throw NumericalError("integrate_vector: tolerance not reached after " +
                               std::to_string(intervals) + " intervals",
                           static_cast<double>((error - tol).maxCoeff()));
    }
    const auto worst = heap.top();
    heap.pop();
    const Scalar mid = (worst.a + worst.b) / 2;
    if (!(mid > worst.a && mid < worst.b)) {
      throw NumericalError("integrate_vector: interval cannot be bisected further",
                           static_cast<double>((error - tol).maxCoeff()));
    }
    auto left = detail::gauss_kronrod15_vector<Scalar>(f, worst.a, mid, controlled);
    auto right = detail::gauss_kronrod15_vector<Scalar>(f, mid, worst.b, controlled);
    ++intervals;
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    rank(left, tol);
    rank(right, tol);
    heap.push(std::move(left));
    heap.push(std::move(right));
  }
  Vector value = Vector::Zero(total.size());
  while (!heap.empty()) {
    value += heap.top().value;
    heap.pop();
  }
  return value;
}

/// Integral of f over [lower, upper] (upper may be +inf) through the map
/// x = lower + scale t / (1 - t), which sends [0, 1) onto [lower, inf).
/// `scale` should sit near where f carries its mass.
template <typename Scalar, typename F>
QuadratureResult<Scalar> integrate_mapped(F&& f, Scalar lower, Scalar upper,
                                          const QuadratureOptions& opts = {}, Scalar scale = Scalar(1)) {
  if (!(scale > Scalar(0))) throw DomainError("integrate_mapped: scale must be positive");
  const Scalar span = (upper - lower) / scale;
  const Scalar t_max = std::isinf(static_cast<double>(upper)) ? Scalar(1) : span / (Scalar(1) + span);
  auto g = [&](Scalar t) -> Scalar {
    const Scalar one_minus = Scalar(1) - t;
    if (one_minus <= Scalar(0)) return Scalar(0);
    const Scalar x = lower + scale * t / one_minus;
    return scale * f(x) / (one_minus * one_minus);
  };
  return integrate<Scalar>(g, Scalar(0), t_max, opts);
}

}  // namespace pfs
