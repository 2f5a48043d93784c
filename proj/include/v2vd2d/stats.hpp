#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "v2vd2d/errors.hpp"

namespace v2vd2d {

/// Two-sided critical value at `confidence` for a mean over n samples:
/// Student-t with n-1 degrees of freedom below 30 samples, normal otherwise.
inline double two_sided_critical(double confidence, std::size_t n) {
  const double q = 0.5 + confidence / 2.0;
  if (n < 30) return boost::math::quantile(boost::math::students_t(static_cast<double>(n - 1)), q);
  return boost::math::quantile(boost::math::normal(), q);
}

inline double one_sided_critical(double confidence, std::size_t n) {
  if (n < 30) return boost::math::quantile(boost::math::students_t(static_cast<double>(n - 1)), confidence);
  return boost::math::quantile(boost::math::normal(), confidence);
}

/// Mean with confidence half-widths; half-widths are absent for n = 1.
struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
  std::optional<double> ci95;
  std::optional<double> ci99;

  bool operator==(const MetricSummary&) const = default;
};

/// Sequential two-pass summary; the fixed summation order makes the result
/// bit-identical for identical input.
inline MetricSummary summarize(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("summarize: no samples");
  MetricSummary m;
  m.count = xs.size();
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(m.count);
  if (m.count == 1) return m;
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.stddev = std::sqrt(ss / static_cast<double>(m.count - 1));
  const double se = m.stddev / std::sqrt(static_cast<double>(m.count));
  m.ci95 = two_sided_critical(0.95, m.count) * se;
  m.ci99 = two_sided_critical(0.99, m.count) * se;
  return m;
}

/// Ratio of means sum(num)/sum(den) with delta-method half-widths.
inline MetricSummary summarize_ratio(std::span<const double> num, std::span<const double> den) {
  if (num.empty() || num.size() != den.size()) throw DomainError("summarize_ratio: size mismatch");
  const std::size_t n = num.size();
  double sn = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sn += num[i];
    sd += den[i];
  }
  if (!(sd > 0.0)) throw DomainError("summarize_ratio: denominator sums to zero");
  MetricSummary m;
  m.count = n;
  m.mean = sn / sd;
  if (n == 1) return m;
  const double dbar = sd / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = num[i] - m.mean * den[i];
    ss += r * r;
  }
  m.stddev = std::sqrt(ss / static_cast<double>(n - 1)) / dbar;
  const double se = m.stddev / std::sqrt(static_cast<double>(n));
  m.ci95 = two_sided_critical(0.95, n) * se;
  m.ci99 = two_sided_critical(0.99, n) * se;
  return m;
}

/// Paired one-sided test that E[a - b] > 0.
struct PairedComparison {
  std::size_t count = 0;
  double mean_difference = 0.0;
  double stddev = 0.0;
  double lower_bound = 0.0;  ///< one-sided lower confidence bound of the mean difference
  double confidence = 0.99;
  bool significant = false;  ///< lower_bound > 0
};

inline PairedComparison paired_greater(std::span<const double> a, std::span<const double> b,
                                       double confidence = 0.99) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("paired_greater: need >= 2 paired samples");
  PairedComparison c;
  c.count = a.size();
  c.confidence = confidence;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] - b[i];
  c.mean_difference = sum / static_cast<double>(c.count);
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = (a[i] - b[i]) - c.mean_difference;
    ss += e * e;
  }
  c.stddev = std::sqrt(ss / static_cast<double>(c.count - 1));
  c.lower_bound = c.mean_difference -
                  one_sided_critical(confidence, c.count) * c.stddev / std::sqrt(static_cast<double>(c.count));
  c.significant = c.lower_bound > 0.0;
  return c;
}

}  // namespace v2vd2d
