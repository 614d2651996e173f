#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace pmm {

// |xi| below this uses the Gumbel branch.
inline constexpr double kGumbelSwitch = 1e-8;
// Half-width of the band around delta = 1/2 where the Erlang limit is used.
inline constexpr double kHypoexpHalfBand = 1e-6;

struct GevParams {
  double mu = 0.0;
  double sigma = 1.0;
  double xi = 0.0;
};

// Y <= y probability. Below the lower endpoint returns 0, above the upper
// endpoint returns 1. Throws InvalidArgument for sigma <= 0.
double gev_cdf(double y, const GevParams& p);
double gev_pdf(double y, const GevParams& p);
// -inf outside the support.
double gev_logpdf(double y, const GevParams& p);
double gev_quantile(double prob, const GevParams& p);

// Spatially varying GEV coefficients at one site.
struct GevSiteParams {
  double mu0 = 0.0;
  double mu1 = 0.0;
  double log_sigma = 0.0;
  double xi = 0.0;
};

// Centered and scaled year covariate, X_t = (year - center) / scale.
struct TimeCovariate {
  std::vector<double> values;

  static TimeCovariate from_years(std::span<const int> years, double center = 1996.5,
                                  double scale = 10.0);
  static TimeCovariate zeros(std::size_t n) { return {std::vector<double>(n, 0.0)}; }
  std::size_t size() const { return values.size(); }
};

inline GevParams stvc_gev(const GevSiteParams& site, double covariate) {
  return {site.mu0 + site.mu1 * covariate, std::exp(site.log_sigma), site.xi};
}
inline GevParams stvc_gev(const GevSiteParams& site, std::size_t t, const TimeCovariate& x) {
  return stvc_gev(site, x.values.at(t));
}

// Unit Frechet -> Exp(1): -log(1 - exp(-1/r)).
double frechet_to_exp(double r);
// Standard normal -> Exp(1): -log(1 - Phi(w)).
double normal_to_exp(double w);

// Law of delta*E1 + (1-delta)*E2 for independent standard exponentials.
double hypoexp_cdf(double v, double delta);
double hypoexp_survival(double v, double delta);
double hypoexp_pdf(double v, double delta);
double hypoexp_quantile(double prob, double delta);

}  // namespace pmm
