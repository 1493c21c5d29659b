#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace compsight {

// Standard normal quantile at p = 0.9; the displayed 10th/90th percentiles
// of a log-normal insight are exp(mu -/+ kZ90 * sigma).
inline constexpr double kZ90 = 1.2815515655446004;

// Numerically stable logistic function; exact 0.5 at x = 0, saturates
// without overflow for |x| up to ~745.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without underflow at large |x|.
inline double log_sigmoid(double x) {
  if (x >= 0.0) {
    return -std::log1p(std::exp(-x));
  }
  return x - std::log1p(std::exp(x));
}

// log(1 - sigmoid(x)) == log_sigmoid(-x).
inline double log1m_sigmoid(double x) { return log_sigmoid(-x); }

// Student-t distribution with df degrees of freedom (standardized form).
double student_t_pdf(double df, double x);
double student_t_cdf(double df, double x);
// Inverse CDF; |cdf(quantile(p)) - p| <= 1e-10 over p in (0, 1).
double student_t_quantile(double df, double p);

// Mean and unbiased (n-1) variance in one pass; variance is 0 for n < 2.
struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  // divisor n-1
  std::size_t n = 0;
};
MeanVar mean_var(std::span<const double> xs);

// Population variance about a given center (divisor n).
double population_var_about(std::span<const double> xs, double center);

// Linear-interpolation quantile on *sorted* data (R type 7).
double sorted_quantile(std::span<const double> sorted, double p);

}  // namespace compsight
