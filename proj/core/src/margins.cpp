#include "pmm/margins.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pmm/error.hpp"
#include "pmm/stats.hpp"

namespace pmm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_scale(const GevParams& p) {
  if (!(p.sigma > 0.0) || !std::isfinite(p.sigma)) {
    throw InvalidArgument("GEV scale must be positive and finite");
  }
}

enum class Branch { hypoexp, exp1, erlang };

Branch hypoexp_branch(double delta) {
  require(delta >= 0.0 && delta <= 1.0, "hypoexponential weight must lie in [0,1]");
  if (delta == 0.0 || delta == 1.0) return Branch::exp1;
  if (std::abs(delta - 0.5) < kHypoexpHalfBand) return Branch::erlang;
  return Branch::hypoexp;
}

}  // namespace

double gev_cdf(double y, const GevParams& p) {
  check_scale(p);
  const double z = (y - p.mu) / p.sigma;
  if (std::abs(p.xi) < kGumbelSwitch) return std::exp(-std::exp(-z));
  const double t = 1.0 + p.xi * z;
  if (t <= 0.0) return p.xi > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::exp(-std::log1p(p.xi * z) / p.xi));
}

double gev_logpdf(double y, const GevParams& p) {
  check_scale(p);
  const double z = (y - p.mu) / p.sigma;
  if (std::abs(p.xi) < kGumbelSwitch) return -std::log(p.sigma) - z - std::exp(-z);
  const double t = 1.0 + p.xi * z;
  if (t <= 0.0) return kNegInf;
  const double log_t = std::log1p(p.xi * z);
  return -std::log(p.sigma) - (1.0 + 1.0 / p.xi) * log_t - std::exp(-log_t / p.xi);
}

double gev_pdf(double y, const GevParams& p) { return std::exp(gev_logpdf(y, p)); }

double gev_quantile(double prob, const GevParams& p) {
  check_scale(p);
  require(prob > 0.0 && prob < 1.0, "GEV quantile level must lie in (0,1)");
  const double log_term = std::log(-std::log(prob));
  if (std::abs(p.xi) < kGumbelSwitch) return p.mu - p.sigma * log_term;
  return p.mu + p.sigma * std::expm1(-p.xi * log_term) / p.xi;
}

TimeCovariate TimeCovariate::from_years(std::span<const int> years, double center, double scale) {
  require(scale > 0.0, "time covariate scale must be positive");
  TimeCovariate x;
  x.values.reserve(years.size());
  for (int year : years) x.values.push_back((static_cast<double>(year) - center) / scale);
  return x;
}

double frechet_to_exp(double r) {
  require(r > 0.0, "frechet_to_exp: input must be positive");
  return -std::log(-std::expm1(-1.0 / r));
}

double normal_to_exp(double w) {
  require(std::isfinite(w), "normal_to_exp: input must be finite");
  return -std::log(normal_survival(w));
}

double hypoexp_survival(double v, double delta) {
  require(v >= 0.0, "hypoexponential argument must be nonnegative");
  switch (hypoexp_branch(delta)) {
    case Branch::exp1:
      return std::exp(-v);
    case Branch::erlang:
      return std::exp(-2.0 * v) * (1.0 + 2.0 * v);
    case Branch::hypoexp:
      break;
  }
  const double d = delta;
  return ((1.0 - d) * std::exp(-v / (1.0 - d)) - d * std::exp(-v / d)) / (1.0 - 2.0 * d);
}

double hypoexp_cdf(double v, double delta) {
  require(v >= 0.0, "hypoexponential argument must be nonnegative");
  switch (hypoexp_branch(delta)) {
    case Branch::exp1:
      return -std::expm1(-v);
    case Branch::erlang:
      return 1.0 - std::exp(-2.0 * v) * (1.0 + 2.0 * v);
    case Branch::hypoexp:
      break;
  }
  return std::clamp(1.0 - hypoexp_survival(v, delta), 0.0, 1.0);
}

double hypoexp_pdf(double v, double delta) {
  require(v >= 0.0, "hypoexponential argument must be nonnegative");
  switch (hypoexp_branch(delta)) {
    case Branch::exp1:
      return std::exp(-v);
    case Branch::erlang:
      return 4.0 * v * std::exp(-2.0 * v);
    case Branch::hypoexp:
      break;
  }
  const double d = delta;
  return (std::exp(-v / (1.0 - d)) - std::exp(-v / d)) / (1.0 - 2.0 * d);
}

double hypoexp_quantile(double prob, double delta) {
  require(prob > 0.0 && prob < 1.0, "hypoexponential quantile level must lie in (0,1)");
  double lo = 0.0;
  double hi = 1.0;
  while (hypoexp_cdf(hi, delta) < prob) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (hypoexp_cdf(mid, delta) < prob ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace pmm
