#pragma once

// Connected-component analysis of shortest-path (farthest-neighbor) relaying on
// a Poisson road. N_b denotes the number of retransmitting vehicles in a
// connected component; it is also reported as the component's hop count.
//
// Three routes to the distribution of N_b live here:
//   * the oracle, which iterates the hop-distance Markov kernel on a grid;
//   * the closed-form z-transform Q(z) = rho' z + rho z^2 (1 + M1(z));
//   * the geometric law that holds if successive gaps were independent.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "v2vd2d/delay_model.hpp"
#include "v2vd2d/errors.hpp"
#include "v2vd2d/rng.hpp"

namespace v2vd2d {

using cplx = std::complex<double>;

/// Spatial rate lambda and V2V range R. lambda' = lambda R, rho' = e^-lambda'
/// and rho = lambda' rho' are always recomputed from lambda and R.
class ConnectivityParams {
 public:
  static constexpr double default_margin = 0.05;

  ConnectivityParams(double lambda, double range, double margin = default_margin)
      : lambda_(lambda), range_(range), margin_(margin) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be > 0");
    if (!(range > 0.0) || !std::isfinite(range)) throw DomainError("R must be > 0");
    if (!(margin >= 0.0)) throw DomainError("margin must be >= 0");
  }

  double lambda() const noexcept { return lambda_; }
  double range() const noexcept { return range_; }
  double margin() const noexcept { return margin_; }
  double lambda_prime() const noexcept { return lambda_ * range_; }
  double rho_prime() const noexcept { return std::exp(-lambda_prime()); }
  double rho() const noexcept { return lambda_prime() * rho_prime(); }

  /// lambda' threshold below which the closed-form transform is refused.
  double closed_form_threshold() const noexcept { return std::log(4.0) + margin_; }
  bool closed_form_valid() const noexcept { return lambda_prime() >= closed_form_threshold(); }

  void require_closed_form() const {
    if (!closed_form_valid()) {
      throw ValidityError("closed-form transform needs lambda*R >= ln4 + " + std::to_string(margin_) +
                          " (got lambda' = " + std::to_string(lambda_prime()) + ")");
    }
  }

 private:
  double lambda_;
  double range_;
  double margin_;
};

// ---------------------------------------------------------------------------
// Hop-distance kernel

/// P(tau_n <= x_n | tau_{n-1} = x_prev): e^{-lambda(R-x_n)} - e^{-lambda x_prev}
/// on [R - x_prev, R]. The CDF is defective; the missing mass e^{-lambda x_prev}
/// is the probability that the component ends. The first hop uses x_prev = R.
inline double hop_distance_cdf(double x_n, double x_prev, const ConnectivityParams& p) {
  const double R = p.range();
  if (!(x_prev >= 0.0 && x_prev <= R)) throw DomainError("hop_distance_cdf: x_prev outside [0, R]");
  if (x_n < R - x_prev) return 0.0;
  const double cap = -std::expm1(-p.lambda() * x_prev);
  if (x_n >= R) return cap;
  const double v = std::exp(-p.lambda() * (R - x_n)) - std::exp(-p.lambda() * x_prev);
  return std::clamp(v, 0.0, cap);
}

class HopKernel {
 public:
  explicit HopKernel(ConnectivityParams params) : params_(params) {}

  const ConnectivityParams& params() const noexcept { return params_; }

  double cdf(double x_n, double x_prev) const { return hop_distance_cdf(x_n, x_prev, params_); }

  /// Probability that no further relay exists after a hop of length x_prev.
  double termination(double x_prev) const { return std::exp(-params_.lambda() * x_prev); }

  /// Draws the next hop length, or nothing when the component terminates.
  std::optional<double> sample(double x_prev, Rng& rng) const {
    const double u = rng.uniform();
    const double end = termination(x_prev);
    if (u < end) return std::nullopt;
    // Invert e^{-lambda(R-x)} = u on the remaining mass.
    const double x = params_.range() + std::log(u) / params_.lambda();
    return std::clamp(x, params_.range() - x_prev, params_.range());
  }

 private:
  ConnectivityParams params_;
};

// ---------------------------------------------------------------------------
// Component distribution

enum class PmfMethod { oracle, closed_form, baseline, monte_carlo };

inline const char* to_string(PmfMethod m) {
  switch (m) {
    case PmfMethod::oracle: return "oracle";
    case PmfMethod::closed_form: return "closed_form";
    case PmfMethod::baseline: return "baseline";
    case PmfMethod::monte_carlo: return "monte_carlo";
  }
  return "?";
}

/// pmf[k-1] = P(N_b = k) for k = 1..pmf.size().
struct ComponentDistribution {
  std::vector<double> pmf;
  double tail_mass = 0.0;  ///< 1 - sum(pmf)
  PmfMethod method = PmfMethod::oracle;

  double probability(std::size_t k) const { return (k >= 1 && k <= pmf.size()) ? pmf[k - 1] : 0.0; }

  /// Truncated first moment sum_k k P(N_b = k).
  double mean() const {
    double m = 0.0;
    for (std::size_t k = 1; k <= pmf.size(); ++k) m += static_cast<double>(k) * pmf[k - 1];
    return m;
  }
};

namespace detail {

/// Kernel iteration on a uniform grid of [0, 1] in units of R. f holds the
/// (defective) density of the current hop length tau_k; P(N_b = k+1) is
/// int f(x) e^{-a x} dx and the next density is
///   f'(y) = a e^{-a(1-y)} int_{1-y}^1 f(x) dx.
/// Since 1 - x_j = x_{n-j}, the inner integral is a cumulative trapezoid sum.
class KernelIteration {
 public:
  KernelIteration(double lambda_prime, std::size_t n)
      : a_(lambda_prime), n_(n), h_(1.0 / static_cast<double>(n)), entry_(n + 1), exit_(n + 1), f_(n + 1),
        cum_(n + 1) {
    for (std::size_t j = 0; j <= n_; ++j) {
      const double x = static_cast<double>(j) * h_;
      entry_[j] = a_ * std::exp(-a_ * (1.0 - x));
      exit_[j] = std::exp(-a_ * x);
      f_[j] = entry_[j];
    }
  }

  /// Mass of the current density: P(N_b > k).
  double remaining() const { return trapezoid(f_); }

  /// Returns P(N_b = k+1) and advances f to tau_{k+1}.
  double step() {
    double terminate = 0.0;
    for (std::size_t j = 0; j <= n_; ++j) {
      const double w = (j == 0 || j == n_) ? 0.5 : 1.0;
      terminate += w * f_[j] * exit_[j];
    }
    terminate *= h_;

    cum_[0] = 0.0;
    for (std::size_t j = 1; j <= n_; ++j) cum_[j] = cum_[j - 1] + 0.5 * h_ * (f_[j - 1] + f_[j]);
    const double total = cum_[n_];
    for (std::size_t j = 0; j <= n_; ++j) f_[j] = entry_[j] * (total - cum_[n_ - j]);
    return terminate;
  }

 private:
  double trapezoid(const std::vector<double>& g) const {
    double s = 0.5 * (g.front() + g.back());
    for (std::size_t j = 1; j < n_; ++j) s += g[j];
    return s * h_;
  }

  double a_;
  std::size_t n_;
  double h_;
  std::vector<double> entry_, exit_, f_, cum_;
};

struct OracleRun {
  std::vector<double> pmf;
  double remaining = 0.0;
};

/// Runs grids n and 2n in lockstep until k_max terms or until the remaining
/// mass drops below tail_tol; returns the Richardson combination.
inline OracleRun run_oracle(const ConnectivityParams& p, std::size_t k_max, double tail_tol, std::size_t grid) {
  if (k_max < 1) throw DomainError("oracle: k_max must be >= 1");
  if (grid < 100) throw DomainError("oracle: grid_size must be >= 100");
  constexpr double doubling_tolerance = 1e-6;

  KernelIteration coarse(p.lambda_prime(), grid);
  KernelIteration fine(p.lambda_prime(), 2 * grid);
  OracleRun run;
  run.pmf.push_back(p.rho_prime());
  run.remaining = 1.0 - p.rho_prime();
  while (run.pmf.size() < k_max && run.remaining >= tail_tol) {
    const double pc = coarse.step();
    const double pf = fine.step();
    if (std::abs(pf - pc) > doubling_tolerance) {
      throw NonConvergence("oracle: grid doubling changed P(N_b=" + std::to_string(run.pmf.size() + 1) +
                           ") by " + std::to_string(std::abs(pf - pc)));
    }
    run.pmf.push_back((4.0 * pf - pc) / 3.0);
    run.remaining = std::max(0.0, (4.0 * fine.remaining() - coarse.remaining()) / 3.0);
  }
  return run;
}

}  // namespace detail

/// P(N_b = k), k = 1..k_max, by iterating the hop kernel. Valid for every
/// lambda' > 0.
inline ComponentDistribution component_pmf_oracle(std::size_t k_max, const ConnectivityParams& p,
                                                  std::size_t grid_size = 2000) {
  auto run = detail::run_oracle(p, k_max, 0.0, grid_size);
  ComponentDistribution d;
  d.pmf = std::move(run.pmf);
  d.tail_mass = 1.0 - std::accumulate(d.pmf.begin(), d.pmf.end(), 0.0);
  d.method = PmfMethod::oracle;
  return d;
}

/// Oracle extended until P(N_b > K) < tail_tol.
inline ComponentDistribution component_pmf_oracle_to_tail(const ConnectivityParams& p, double tail_tol = 1e-8,
                                                          std::size_t grid_size = 2000,
                                                          std::size_t k_limit = 200000) {
  auto run = detail::run_oracle(p, k_limit, tail_tol, grid_size);
  if (run.remaining >= tail_tol) {
    throw NonConvergence("oracle: tail mass " + std::to_string(run.remaining) + " after " +
                         std::to_string(k_limit) + " terms");
  }
  ComponentDistribution d;
  d.pmf = std::move(run.pmf);
  d.tail_mass = 1.0 - std::accumulate(d.pmf.begin(), d.pmf.end(), 0.0);
  d.method = PmfMethod::oracle;
  return d;
}

/// M_{1,k} = P(N_b = k+2) / rho for k = 0..k_max (M_{1,0} = 1).
inline std::vector<double> m1_series(std::size_t k_max, const ConnectivityParams& p,
                                     std::size_t grid_size = 2000) {
  const auto d = component_pmf_oracle(k_max + 2, p, grid_size);
  std::vector<double> out;
  out.reserve(k_max + 1);
  for (std::size_t k = 0; k <= k_max; ++k) out.push_back(std::max(0.0, d.pmf[k + 1]) / p.rho());
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form transform

/// `derived` solves the kernel exactly; `as_printed` is the historical
/// numerator, which agrees with `derived` in value and slope at z = 1 only.
enum class M1Form { derived, as_printed };

/// M1(z) = (h1 + h2 + h3) / (rho z^2 [1 + s - 2 z e^{lambda'(s-1)/2}]),
/// s = sqrt(1 - 4 rho' z^2) on the principal branch.
inline cplx m1_closed(cplx z, const ConnectivityParams& p, M1Form form = M1Form::derived) {
  p.require_closed_form();
  if (std::abs(z) > 1.0 + 1e-12) throw DomainError("m1_closed: |z| must be <= 1");
  const double a = p.lambda_prime();
  const double rp = p.rho_prime();
  const double r = p.rho();

  constexpr double small = 1e-3;
  if (std::abs(z) < small) {
    if (form == M1Form::as_printed) throw DomainError("m1_closed: printed form is not evaluated near z = 0");
    // Removable singularity: M1 = M_{1,1} z + M_{1,2} z^2 + O(z^3).
    const double m11 = 1.0 - (1.0 - rp) / a;
    const double m12 = m11 - a * rp / 2.0;
    return z * (m11 + m12 * z);
  }

  const cplx s = std::sqrt(1.0 - 4.0 * rp * z * z);
  const cplx e = std::exp(0.5 * a * (s - 1.0));
  const cplx z2 = z * z;
  const cplx z3 = z2 * z;
  const cplx h2 = e * (2.0 * r * z3 + 2.0 * rp * z2 - z - 1.0 + (z - 1.0) * s);
  cplx h1, h3;
  if (form == M1Form::derived) {
    h1 = s * (1.0 - rp * z - r * z2);
    h3 = 1.0 + rp * z - (2.0 * rp + r) * z2;
  } else {
    h1 = s * ((1.0 - rp - r) * z3 - (1.0 - rp) * z2 - z * (1.0 - r) + 2.0 - rp - r);
    h3 = z3 * (rp + r - 1.0) + z2 * (1.0 - 3.0 * rp - 2.0 * r) + z * (1.0 - r) + rp + r;
  }
  const cplx bracket = 1.0 + s - 2.0 * z * e;
  const cplx den = r * z2 * bracket;
  if (std::abs(den) < 1e-12) throw SingularityError("m1_closed: denominator vanishes near z");
  return (h1 + h2 + h3) / den;
}

/// Q(z) = rho' z + rho z^2 (1 + M1(z)), the PGF of N_b.
inline cplx q_transform(cplx z, const ConnectivityParams& p, M1Form form = M1Form::derived) {
  return p.rho_prime() * z + p.rho() * z * z * (1.0 + m1_closed(z, p, form));
}

struct ExtractionOptions {
  double radius = 0.0;     ///< 0 selects automatically
  std::size_t points = 0;  ///< 0 selects automatically
  double aliasing_tolerance = 1e-8;
  M1Form form = M1Form::derived;
};

/// Coefficients of Q by a discrete Cauchy integral on |z| = r.
inline ComponentDistribution pmf_from_transform(std::size_t k_max, const ConnectivityParams& p,
                                                const ExtractionOptions& opts = {}) {
  p.require_closed_form();
  if (k_max < 1) throw DomainError("pmf_from_transform: k_max must be >= 1");
  const double branch = 1.0 / (2.0 * std::sqrt(p.rho_prime()));
  const double r_max = std::min(0.95, branch - 0.05);
  const double r = opts.radius > 0.0 ? opts.radius : std::min(0.9, r_max);
  if (!(r > 0.0 && r < r_max)) throw DomainError("pmf_from_transform: radius outside (0, " + std::to_string(r_max) + ")");

  std::size_t m = opts.points;
  if (m == 0) {
    const auto needed = static_cast<std::size_t>(std::ceil(std::log(1e-12) / std::log(r)));
    m = std::max<std::size_t>(4 * k_max, needed);
  }
  if (m < 4 * k_max) throw DomainError("pmf_from_transform: need at least 4*k_max points");
  // Coefficient k picks up sum_{j>=1} c_{k+jm} r^{jm} <= r^m since sum c <= 1.
  const double aliasing = std::pow(r, static_cast<double>(m));
  if (aliasing > opts.aliasing_tolerance) {
    throw AliasingError("pmf_from_transform: aliasing bound " + std::to_string(aliasing) + " exceeds tolerance");
  }

  std::vector<cplx> q(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(m);
    q[j] = q_transform(std::polar(r, theta), p, opts.form);
  }
  ComponentDistribution d;
  d.method = PmfMethod::closed_form;
  d.pmf.reserve(k_max);
  for (std::size_t k = 1; k <= k_max; ++k) {
    cplx acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double theta = -2.0 * std::numbers::pi * static_cast<double>((j * k) % m) / static_cast<double>(m);
      acc += q[j] * std::polar(1.0, theta);
    }
    d.pmf.push_back(acc.real() / static_cast<double>(m) / std::pow(r, static_cast<double>(k)));
  }
  d.tail_mass = 1.0 - std::accumulate(d.pmf.begin(), d.pmf.end(), 0.0);
  return d;
}

/// Geometric law F^{k-1} (1 - F), F = 1 - e^{-lambda R}: the component size if
/// consecutive gaps were independent. Comparison baseline only; relaying gaps
/// are Markov-dependent.
inline double baseline_pmf_independent(std::size_t k, const ConnectivityParams& p) {
  if (k < 1) throw DomainError("baseline_pmf_independent: k must be >= 1");
  const double F = -std::expm1(-p.lambda_prime());
  return std::pow(F, static_cast<double>(k - 1)) * p.rho_prime();
}

// ---------------------------------------------------------------------------
// Moments and road-level estimates

struct MomentOptions {
  double step = 1e-3;          ///< finite-difference step h toward the interior
  double tolerance = 1e-3;     ///< relative agreement for Richardson and cross-check
  bool cross_check = true;     ///< compare against the oracle series
  double tail_tolerance = 1e-8;
  std::size_t grid_size = 2000;
  M1Form form = M1Form::derived;
};

struct MomentReport {
  double value = 0.0;            ///< rho' + 2 rho + 2 rho M1(1) + rho M1'(1)
  double m1_at_one = 0.0;
  double m1_slope_at_one = 0.0;  ///< Richardson-extrapolated
  double richardson_deviation = 0.0;  ///< |D(h/2) - extrapolated| / |extrapolated|
  std::optional<double> series_value;  ///< sum k P(N_b = k) from the oracle
  std::optional<double> series_deviation;
};

/// E(N_b) from the closed form, with the slope of M1 at z = 1 taken by
/// one-sided second-order differences plus one Richardson step.
inline MomentReport expected_retransmitters_report(const ConnectivityParams& p, const MomentOptions& opts = {}) {
  p.require_closed_form();
  const auto f = [&](double z) { return m1_closed(cplx(z, 0.0), p, opts.form).real(); };
  const double f1 = f(1.0);
  const auto slope = [&](double h) { return (3.0 * f1 - 4.0 * f(1.0 - h) + f(1.0 - 2.0 * h)) / (2.0 * h); };
  const double d_h = slope(opts.step);
  const double d_h2 = slope(opts.step / 2.0);
  const double extrapolated = (4.0 * d_h2 - d_h) / 3.0;

  MomentReport rep;
  rep.m1_at_one = f1;
  rep.m1_slope_at_one = extrapolated;
  rep.richardson_deviation = std::abs(d_h2 - extrapolated) / std::max(std::abs(extrapolated), 1e-300);
  rep.value = p.rho_prime() + 2.0 * p.rho() + 2.0 * p.rho() * f1 + p.rho() * extrapolated;
  if (!std::isfinite(rep.value) || rep.richardson_deviation > opts.tolerance) {
    throw DerivativeInstability("expected_retransmitters: Richardson estimates disagree by " +
                                std::to_string(rep.richardson_deviation));
  }
  if (opts.cross_check) {
    const auto series = component_pmf_oracle_to_tail(p, opts.tail_tolerance, opts.grid_size);
    rep.series_value = series.mean();
    rep.series_deviation = std::abs(rep.value - *rep.series_value) / *rep.series_value;
    if (*rep.series_deviation > opts.tolerance) {
      throw DerivativeInstability("expected_retransmitters: closed form " + std::to_string(rep.value) +
                                  " vs oracle series " + std::to_string(*rep.series_value));
    }
  }
  return rep;
}

inline double expected_retransmitters(const ConnectivityParams& p, const MomentOptions& opts = {}) {
  return expected_retransmitters_report(p, opts).value;
}

/// Mean extent of a connected component, (e^{lambda R} - 1) / lambda: the
/// distance from its first vehicle to R beyond its last one.
inline double expected_component_size(const ConnectivityParams& p) {
  if (p.lambda_prime() > 700.0) throw OutOfRange("expected_component_size: lambda*R > 700 overflows");
  return std::expm1(p.lambda_prime()) / p.lambda();
}

/// E(no. of hops) / E(size) * L.
inline double expected_hops_over_road(const ConnectivityParams& p, double road_length,
                                      const MomentOptions& opts = {}) {
  if (!(road_length > 0.0)) throw DomainError("expected_hops_over_road: L must be > 0");
  return expected_retransmitters(p, opts) / expected_component_size(p) * road_length;
}

/// Expected hops times the per-hop delay t_proc + t_access * 2 lambda R, where
/// 2 lambda R is the mean neighbor count of a vehicle.
inline double analytic_delay(const ConnectivityParams& p, double road_length, const DelayModel& delay,
                             const MomentOptions& opts = {}) {
  const double per_hop = delay.t_proc + delay.t_access * 2.0 * p.lambda_prime();
  return expected_hops_over_road(p, road_length, opts) * per_hop;
}

}  // namespace v2vd2d
