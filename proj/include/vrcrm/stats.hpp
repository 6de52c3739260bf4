#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace vrcrm {

namespace detail {

// Regularized incomplete beta via Lentz's continued fraction.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-14;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b), absolute accuracy ~1e-10.
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("incomplete_beta: a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// Two-sided p-value of Student's t with df degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_t_two_sided_p: df > 0");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct PairedTTestReport {
  double t_statistic = 0.0;
  int degrees_of_freedom = 0;
  double p_value = 1.0;
  bool significant = false;
};

// Paired two-sample t-test. All-zero differences are defined as p = 1
// (not significant); constant nonzero differences give p = 0.
inline PairedTTestReport paired_t_test(const std::vector<double>& scores_a,
                                       const std::vector<double>& scores_b, double alpha) {
  if (scores_a.size() != scores_b.size())
    throw std::invalid_argument("paired_t_test: length mismatch");
  const std::size_t n = scores_a.size();
  if (n < 2) throw std::invalid_argument("paired_t_test: need n >= 2");

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += scores_a[i] - scores_b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = scores_a[i] - scores_b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  PairedTTestReport rep;
  rep.degrees_of_freedom = static_cast<int>(n) - 1;
  if (sd == 0.0) {
    if (mean == 0.0) {
      rep.t_statistic = 0.0;
      rep.p_value = 1.0;
    } else {
      rep.t_statistic = mean > 0.0 ? std::numeric_limits<double>::infinity()
                                   : -std::numeric_limits<double>::infinity();
      rep.p_value = 0.0;
    }
  } else {
    rep.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
    rep.p_value = student_t_two_sided_p(rep.t_statistic,
                                        static_cast<double>(rep.degrees_of_freedom));
  }
  rep.significant = rep.p_value < alpha;
  return rep;
}

}  // namespace vrcrm
