#pragma once

// Summary statistics, Welch's t-test, t confidence intervals and Spearman
// rank correlation. Student-t quantiles and tail probabilities come from
// Boost.Math.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

namespace varlen::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Unbiased sample variance (n-1 denominator).
inline double variance(std::span<const double> xs) {
  if (xs.size() < 2) throw std::invalid_argument("variance needs at least two values");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

/// Two-sided Student-t critical value t(1 - alpha/2, df).
inline double t_critical(double df, double confidence = 0.95) {
  boost::math::students_t dist(df);
  return boost::math::quantile(dist, 0.5 + confidence / 2.0);
}

struct ConfidenceInterval {
  double mean;
  double half_width;
};

/// mean +/- t(0.975, n-1) * s / sqrt(n).
inline ConfidenceInterval confidence_interval_95(std::span<const double> xs) {
  if (xs.size() < 2) throw std::invalid_argument("confidence interval needs at least two values");
  const double m = mean(xs);
  const double s = std::sqrt(variance(xs));
  const auto n = static_cast<double>(xs.size());
  return {m, t_critical(n - 1.0) * s / std::sqrt(n)};
}

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  bool degenerate = false;  // both samples constant; p fixed at 1
};

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
/// Symmetric in its arguments.
inline WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_t_test needs two values per sample");
  const double va = variance(a) / static_cast<double>(a.size());
  const double vb = variance(b) / static_cast<double>(b.size());
  const double se2 = va + vb;
  WelchResult r;
  if (se2 == 0.0) {
    r.degenerate = true;
    r.p_value = mean(a) == mean(b) ? 1.0 : 0.0;
    return r;
  }
  r.t = (mean(a) - mean(b)) / std::sqrt(se2);
  const double na1 = static_cast<double>(a.size() - 1);
  const double nb1 = static_cast<double>(b.size() - 1);
  r.df = se2 * se2 / (va * va / na1 + vb * vb / nb1);
  boost::math::students_t dist(r.df);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  r.p_value = std::min(1.0, r.p_value);
  return r;
}

/// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t m = i; m <= j; ++m) r[order[m]] = avg;
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation (Pearson correlation of average ranks).
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman needs paired samples");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace varlen::stats
