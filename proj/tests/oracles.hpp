#pragma once

// Independent reference computations used by the tests: goodness-of-fit
// statistics, tail probabilities from Boost.Math, and quadrature.

#include <Eigen/Dense>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

inline double two_sample_ks(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// Asymptotic critical value of the KS statistic at level alpha for an
// effective sample size n (n * m / (n + m) in the two-sample case).
inline double ks_critical(double n, double alpha = 1e-3) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(n);
}

// Upper-tail p-value of Pearson's statistic for observed counts against
// expected probabilities.
inline double chi_square_pvalue(const std::vector<double>& observed, const std::vector<double>& probabilities) {
  double total = 0.0;
  for (double o : observed) total += o;
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = total * probabilities[i];
    stat += (observed[i] - e) * (observed[i] - e) / e;
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

// Standard error of the sample variance from the fourth central moment.
inline double variance_standard_error(const std::vector<double>& x) {
  const double m = mean(x);
  double m2 = 0.0;
  double m4 = 0.0;
  for (double v : x) {
    const double d = (v - m) * (v - m);
    m2 += d;
    m4 += d * d;
  }
  const double n = static_cast<double>(x.size());
  m2 /= n;
  m4 /= n;
  return std::sqrt((m4 - m2 * m2) / n);
}

// Integral of f over [lo, hi] by composite Gauss-Legendre with `panels`
// equal sub-intervals of 30 nodes each.
inline double integrate(const std::function<double(double)>& f, double lo, double hi, int panels = 64) {
  double total = 0.0;
  const double width = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * width;
    total += boost::math::quadrature::gauss<double, 30>::integrate(f, a, a + width);
  }
  return total;
}

// Standard error of the mean of a correlated series by non-overlapping batch
// means.
inline double batch_means_se(const Eigen::VectorXd& x, int batches = 50) {
  const Eigen::Index size = x.size() / batches;
  Eigen::VectorXd means(batches);
  for (int b = 0; b < batches; ++b) means(b) = x.segment(b * size, size).mean();
  const double centre = means.mean();
  const double var = (means.array() - centre).square().sum() / (batches - 1);
  return std::sqrt(var / batches);
}

// E[f(x)] for x ~ Dirichlet(alpha, ..., alpha) on the (m-1)-simplex, by
// tensor Gauss-Legendre after the Duffy map
// x_1 = u_1, x_2 = (1 - u_1) u_2, ..., x_m = prod (1 - u_i).
// Accurate for alpha >= 1 and smooth f.
inline double dirichlet_expectation(const std::function<double(const Eigen::VectorXd&)>& f, int m,
                                    double alpha) {
  using Rule = boost::math::quadrature::gauss<double, 30>;
  const double log_norm = std::lgamma(m * alpha) - m * std::lgamma(alpha);
  Eigen::VectorXd x(m);
  std::function<double(int, double)> level = [&](int i, double remaining) -> double {
    if (i == m - 1) {
      x(i) = remaining;
      double log_density = log_norm;
      for (int c = 0; c < m; ++c) log_density += (alpha - 1.0) * std::log(x(c));
      return f(x) * std::exp(log_density);
    }
    return Rule::integrate(
        [&, i, remaining](double u) {
          x(i) = remaining * u;
          return remaining * level(i + 1, remaining * (1.0 - u));
        },
        0.0, 1.0);
  };
  return level(0, 1.0);
}

}  // namespace oracle
