#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace pmm {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
// Upper tail 1 - Phi(x), accurate for large x.
inline double normal_survival(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }
inline double normal_logpdf(double x) {
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}
double normal_quantile(double p);

inline double logit(double p) { return std::log(p) - std::log1p(-p); }
inline double expit(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Summation in a fixed binary-tree order; the result does not depend on how
// callers batch the work.
double pairwise_sum(std::span<const double> values);

double mean(std::span<const double> values);
// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_sd(std::span<const double> values);
// Linear-interpolation quantile (type 7) of an unsorted sample.
double sample_quantile(std::vector<double> values, double p);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// One-sample Kolmogorov-Smirnov test against a continuous CDF, with the
// asymptotic Kolmogorov distribution and Stephens' small-sample correction.
KsResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf);
KsResult ks_uniform(std::span<const double> sample);
double kolmogorov_survival(double lambda);

}  // namespace pmm
