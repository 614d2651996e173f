#include "pmm/gev_mle.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "pmm/error.hpp"
#include "pmm/stats.hpp"

namespace pmm {
namespace {

struct Sample {
  std::vector<double> y;
};

double negloglik(const gsl_vector* v, void* params) {
  const auto* s = static_cast<const Sample*>(params);
  const GevParams p{gsl_vector_get(v, 0), std::exp(gsl_vector_get(v, 1)), gsl_vector_get(v, 2)};
  if (!std::isfinite(p.sigma) || p.sigma <= 0.0 || std::abs(p.xi) > 2.0) return 1e300;
  double ll = 0.0;
  for (double y : s->y) ll += gev_logpdf(y, p);
  return std::isfinite(ll) ? -ll : 1e300;
}

}  // namespace

GevFit fit_gev_mle(std::span<const double> y) {
  Sample s;
  for (double v : y) {
    if (std::isfinite(v)) s.y.push_back(v);
  }
  require(s.y.size() >= 3, "GEV fit needs at least three finite values");

  // Gumbel moment start
  const double sd = std::max(sample_sd(s.y), 1e-6);
  const double sigma0 = sd * std::sqrt(6.0) / std::numbers::pi;
  const double mu0 = mean(s.y) - 0.5772156649015329 * sigma0;

  gsl_set_error_handler_off();
  gsl_multimin_function f{&negloglik, 3, &s};
  gsl_vector* x = gsl_vector_alloc(3);
  gsl_vector* step = gsl_vector_alloc(3);
  gsl_vector_set(x, 0, mu0);
  gsl_vector_set(x, 1, std::log(sigma0));
  gsl_vector_set(x, 2, 0.05);
  gsl_vector_set(step, 0, 0.5 * sigma0);
  gsl_vector_set(step, 1, 0.3);
  gsl_vector_set(step, 2, 0.1);
  gsl_multimin_fminimizer* m = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3);
  gsl_multimin_fminimizer_set(m, &f, x, step);

  GevFit fit;
  for (int iter = 0; iter < 2000; ++iter) {
    if (gsl_multimin_fminimizer_iterate(m) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(m), 1e-8) == GSL_SUCCESS) {
      fit.converged = true;
      break;
    }
  }
  const gsl_vector* best = gsl_multimin_fminimizer_x(m);
  fit.params = {gsl_vector_get(best, 0), std::exp(gsl_vector_get(best, 1)), gsl_vector_get(best, 2)};
  fit.loglik = -gsl_multimin_fminimizer_minimum(m);
  gsl_multimin_fminimizer_free(m);
  gsl_vector_free(step);
  gsl_vector_free(x);
  if (!std::isfinite(fit.loglik) || fit.loglik < -1e299) {
    fit.params = {mu0, sigma0, 0.0};
    fit.converged = false;
  }
  return fit;
}

}  // namespace pmm
