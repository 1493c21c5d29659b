#include "compsight/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <stdexcept>

namespace compsight {

double student_t_pdf(double df, double x) {
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::pdf(dist, x);
}

double student_t_cdf(double df, double x) {
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::cdf(dist, x);
}

double student_t_quantile(double df, double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("student_t_quantile: p must lie in (0,1)");
  }
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::quantile(dist, p);
}

MeanVar mean_var(std::span<const double> xs) {
  MeanVar r;
  r.n = xs.size();
  if (r.n == 0) return r;
  double sum = 0.0;
  for (double x : xs) sum += x;
  r.mean = sum / static_cast<double>(r.n);
  if (r.n < 2) return r;
  double ss = 0.0;
  for (double x : xs) {
    const double d = x - r.mean;
    ss += d * d;
  }
  r.var = ss / static_cast<double>(r.n - 1);
  return r;
}

double population_var_about(std::span<const double> xs, double center) {
  if (xs.empty()) return 0.0;
  double ss = 0.0;
  for (double x : xs) {
    const double d = x - center;
    ss += d * d;
  }
  return ss / static_cast<double>(xs.size());
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::domain_error("sorted_quantile: empty data");
  if (sorted.size() == 1) return sorted[0];
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted[sorted.size() - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace compsight
