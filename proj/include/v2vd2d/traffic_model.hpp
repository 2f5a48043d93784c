#pragma once

// Free-flow traffic on a straight road: truncated-normal speeds, Poisson
// arrivals at the road entrance, the induced spatial vehicle rate, snapshot
// generation and time-step mobility.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "v2vd2d/errors.hpp"
#include "v2vd2d/rng.hpp"

namespace v2vd2d {

/// Arrival and speed parameters of the free-flow traffic.
struct TrafficParams {
  double lambda_a = 0.25;  ///< arrivals per second at position 0
  double v_min = 20.0;     ///< m/s
  double v_max = 30.0;     ///< m/s
  double mu = 25.0;        ///< m/s
  double sigma = 5.0;      ///< m/s

  void validate() const {
    if (!(lambda_a > 0.0) || !std::isfinite(lambda_a)) throw DomainError("lambda_a must be > 0");
    if (!(v_min > 0.0)) throw DomainError("v_min must be > 0");
    if (!(v_max > v_min) || !std::isfinite(v_max)) throw DomainError("v_max must exceed v_min");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("sigma must be > 0");
    if (!std::isfinite(mu)) throw DomainError("mu must be finite");
  }

  /// Non-fatal observations about the parameter set.
  std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    if (mu < v_min || mu > v_max) {
      out.push_back("mean speed mu lies outside [v_min, v_max]; the truncated law is heavily skewed");
    }
    return out;
  }

  bool operator==(const TrafficParams&) const = default;
};

/// Normal law N(mu, sigma^2) restricted to [v_min, v_max].
class TruncatedNormal {
 public:
  TruncatedNormal(double mu, double sigma, double v_min, double v_max)
      : mu_(mu), sigma_(sigma), v_min_(v_min), v_max_(v_max) {
    if (!(sigma > 0.0) || !(v_max > v_min)) throw DomainError("invalid truncated normal");
    const double a = (v_min - mu) / (sigma * std::numbers::sqrt2);
    const double b = (v_max - mu) / (sigma * std::numbers::sqrt2);
    // erf(b) - erf(a), evaluated on the side that avoids cancellation.
    if (a > 0.0) {
      normalizer_ = std::erfc(a) - std::erfc(b);
    } else if (b < 0.0) {
      normalizer_ = std::erfc(-b) - std::erfc(-a);
    } else {
      normalizer_ = std::erf(b) - std::erf(a);
    }
    if (!(normalizer_ > 0.0)) throw DomainError("truncation interval carries no probability mass");
  }

  explicit TruncatedNormal(const TrafficParams& p) : TruncatedNormal(p.mu, p.sigma, p.v_min, p.v_max) {}

  double mu() const noexcept { return mu_; }
  double sigma() const noexcept { return sigma_; }
  double v_min() const noexcept { return v_min_; }
  double v_max() const noexcept { return v_max_; }

  /// erf((v_max-mu)/(sigma*sqrt2)) - erf((v_min-mu)/(sigma*sqrt2)).
  double normalizer() const noexcept { return normalizer_; }

 private:
  double mu_, sigma_, v_min_, v_max_;
  double normalizer_;
};

/// Speed density: 2/(sigma sqrt(2 pi)) exp(-((v-mu)/sigma)^2/2) / normalizer on
/// the support, 0 elsewhere. The factor 2 pairs with the erf difference, which
/// is twice the Gaussian CDF difference, so the density integrates to 1.
inline double truncated_normal_pdf(double v, const TruncatedNormal& dist) {
  if (v < dist.v_min() || v > dist.v_max()) return 0.0;
  const double z = (v - dist.mu()) / dist.sigma();
  return 2.0 / (dist.sigma() * std::sqrt(2.0 * std::numbers::pi)) * std::exp(-0.5 * z * z) /
         dist.normalizer();
}

/// Inverse-CDF draw restricted to [v_min, v_max]. Lower-tail truncations are
/// mapped through erfc of the reflected variable to keep precision.
inline double sample_speed(const TruncatedNormal& dist, Rng& rng) {
  using boost::math::erfc_inv;
  constexpr double s2 = std::numbers::sqrt2;
  const double a = (dist.v_min() - dist.mu()) / dist.sigma();
  const double b = (dist.v_max() - dist.mu()) / dist.sigma();
  const double u = rng.uniform_open();
  double x;
  if (a > 0.0) {
    // Upper tail: work with Q(x) = erfc(x/sqrt2)/2.
    const double qa = std::erfc(a / s2);
    const double qb = std::erfc(b / s2);
    x = s2 * erfc_inv(qa - u * (qa - qb));
  } else {
    // Phi(x) = erfc(-x/sqrt2)/2.
    const double pa = std::erfc(-a / s2);
    const double pb = std::erfc(-b / s2);
    x = -s2 * erfc_inv(pa + u * (pb - pa));
  }
  return std::clamp(dist.mu() + dist.sigma() * x, dist.v_min(), dist.v_max());
}

struct QuadratureOptions {
  double relative_tolerance = 1e-10;
  /// Bisection depth per piece; 13 levels allow 8192 subintervals.
  unsigned max_depth = 13;
};

/// Vehicles per meter: lambda_a * E[1/V] for V ~ TruncatedNormal(params).
inline double spatial_rate(const TrafficParams& params, const QuadratureOptions& opts = {}) {
  params.validate();
  const TruncatedNormal dist(params);
  // Integrate in standard units so narrow densities do not exhaust bisection depth.
  const double mu = params.mu, sigma = params.sigma;
  const auto integrand = [&](double u) {
    const double v = mu + sigma * u;
    return truncated_normal_pdf(v, dist) * sigma / v;
  };

  std::vector<double> cuts{(params.v_min - mu) / sigma, (params.v_max - mu) / sigma};
  for (double k : {-8.0, -3.0, 0.0, 3.0, 8.0}) {
    if (k > cuts[0] && k < cuts[1]) cuts.push_back(k);
  }
  std::sort(cuts.begin(), cuts.end());

  double total = 0.0;
  double total_error = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double err = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        integrand, cuts[i], cuts[i + 1], opts.max_depth, opts.relative_tolerance, &err);
    total_error += err;
  }
  if (!(total > 0.0) || total_error > opts.relative_tolerance * total) {
    throw NonConvergence("spatial_rate: quadrature error estimate " + std::to_string(total_error / total) +
                         " exceeds tolerance");
  }
  return params.lambda_a * total;
}

/// Arrival rate that produces the requested spatial rate under `params`' speeds.
inline double arrival_rate_for(double lambda_per_m, TrafficParams params) {
  params.lambda_a = 1.0;
  return lambda_per_m / spatial_rate(params);
}

struct Vehicle {
  std::uint64_t id = 0;
  double position = 0.0;  ///< m
  double speed = 0.0;     ///< m/s

  bool operator==(const Vehicle&) const = default;
};

/// Vehicles on [0, road_length], sorted by strictly increasing position, with
/// the road side unit at rsu_position.
struct RoadSnapshot {
  std::vector<Vehicle> vehicles;
  double road_length = 0.0;
  double rsu_position = 0.0;
  std::uint64_t next_id = 0;

  std::size_t size() const noexcept { return vehicles.size(); }
  bool empty() const noexcept { return vehicles.empty(); }
  double position(std::size_t i) const { return vehicles[i].position; }

  std::vector<double> positions() const {
    std::vector<double> out;
    out.reserve(vehicles.size());
    for (const auto& v : vehicles) out.push_back(v.position);
    return out;
  }

  /// Index of the vehicle with the given id, or size() when absent.
  std::size_t index_of(std::uint64_t id) const {
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      if (vehicles[i].id == id) return i;
    }
    return vehicles.size();
  }

  /// Builds a snapshot from positions and speeds (test and tooling helper).
  static RoadSnapshot from(const std::vector<double>& positions, const std::vector<double>& speeds,
                           double road_length, double rsu_position) {
    if (positions.size() != speeds.size()) throw DomainError("positions/speeds size mismatch");
    RoadSnapshot s;
    s.road_length = road_length;
    s.rsu_position = rsu_position;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      s.vehicles.push_back({s.next_id++, positions[i], speeds[i]});
    }
    std::stable_sort(s.vehicles.begin(), s.vehicles.end(),
                     [](const Vehicle& a, const Vehicle& b) { return a.position < b.position; });
    return s;
  }

  bool operator==(const RoadSnapshot&) const = default;
};

/// Poisson(lambda) vehicle positions on [0, L] with i.i.d. speeds; the RSU
/// sits at L.
inline RoadSnapshot generate_snapshot(double lambda, double road_length, const TruncatedNormal& dist,
                                      Rng& rng) {
  if (!(lambda > 0.0)) throw DomainError("generate_snapshot: lambda must be > 0");
  if (!(road_length > 0.0)) throw DomainError("generate_snapshot: road length must be > 0");
  RoadSnapshot s;
  s.road_length = road_length;
  s.rsu_position = road_length;
  // Exponential gaps are strictly positive, so positions strictly increase.
  for (double x = rng.exponential(lambda); x <= road_length; x += rng.exponential(lambda)) {
    s.vehicles.push_back({s.next_id++, x, 0.0});
  }
  for (auto& v : s.vehicles) v.speed = sample_speed(dist, rng);
  return s;
}

/// Moves every vehicle by speed*dt, drops those past the road end, and injects
/// the vehicles that entered at position 0 during the step (Poisson arrivals at
/// rate lambda_a in time), then restores position order.
inline RoadSnapshot advance(RoadSnapshot snapshot, double dt, double lambda_a, const TruncatedNormal& dist,
                            Rng& rng) {
  if (!(dt > 0.0)) throw DomainError("advance: dt must be > 0");
  if (!(lambda_a > 0.0)) throw DomainError("advance: lambda_a must be > 0");
  for (auto& v : snapshot.vehicles) v.position += v.speed * dt;
  std::erase_if(snapshot.vehicles, [&](const Vehicle& v) { return v.position > snapshot.road_length; });

  for (double t = rng.exponential(lambda_a); t <= dt; t += rng.exponential(lambda_a)) {
    const double speed = sample_speed(dist, rng);
    const double x = speed * (dt - t);
    if (x <= snapshot.road_length) snapshot.vehicles.push_back({snapshot.next_id++, x, speed});
  }
  std::stable_sort(snapshot.vehicles.begin(), snapshot.vehicles.end(),
                   [](const Vehicle& a, const Vehicle& b) { return a.position < b.position; });
  return snapshot;
}

}  // namespace v2vd2d
