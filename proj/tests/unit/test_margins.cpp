#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "pmm/error.hpp"
#include "pmm/margins.hpp"
#include "pmm/rng.hpp"
#include "pmm/stats.hpp"

using namespace pmm;

TEST_CASE("gev reference values") {
  CHECK(gev_cdf(1.5, {1.5, 2.0, 0.0}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(gev_quantile(0.5, {2.0, 1.0, 0.1}) == doctest::Approx(2.37331).epsilon(1e-5));
  GevParams bounded{0.0, 1.0, -0.1};
  CHECK(gev_cdf(10.0, bounded) == 1.0);
  CHECK(gev_cdf(11.0, bounded) == 1.0);
  CHECK(gev_pdf(11.0, bounded) == 0.0);
  CHECK(gev_cdf(-20.0, {0.0, 1.0, 0.2}) == 0.0);
  CHECK_THROWS_AS(gev_cdf(0.0, {0.0, -1.0, 0.0}), InvalidArgument);
}

TEST_CASE("gev quantile inverts the cdf") {
  Rng rng(3);
  for (int k = 0; k < 1000; ++k) {
    GevParams p{rng.uniform(-5, 5), rng.uniform(0.1, 3), rng.uniform(-0.4, 0.4)};
    const double y = gev_quantile(rng.uniform(0.01, 0.99), p);
    CHECK(gev_quantile(gev_cdf(y, p), p) == doctest::Approx(y).epsilon(1e-10));
  }
}

TEST_CASE("gev pdf is the derivative of the cdf") {
  GevParams p{1.0, 0.7, 0.25};
  for (double y : {0.5, 1.0, 2.0, 5.0}) {
    const double h = 1e-6;
    CHECK(gev_pdf(y, p) == doctest::Approx((gev_cdf(y + h, p) - gev_cdf(y - h, p)) / (2 * h)).epsilon(1e-6));
    CHECK(gev_logpdf(y, p) == doctest::Approx(std::log(gev_pdf(y, p))));
  }
}

TEST_CASE("stvc location") {
  GevSiteParams s{2.0, 0.0, std::log(1.5), 0.1};
  for (double x : {-2.0, 0.0, 3.0}) CHECK(stvc_gev(s, x).mu == 2.0);
  std::vector<int> years{1972, 1996, 2021};
  auto x = TimeCovariate::from_years(years);
  CHECK(x.values[2] == doctest::Approx(2.45));
  s.mu1 = 1.0;
  CHECK(stvc_gev(s, 2, x).mu == doctest::Approx(4.45));
  CHECK(stvc_gev(s, 0.0).mu == 2.0);
  CHECK(stvc_gev(s, 0.0).sigma == doctest::Approx(1.5));
}

TEST_CASE("exponential transforms") {
  CHECK(frechet_to_exp(1.0 / std::log(2.0)) == doctest::Approx(std::log(2.0)));
  CHECK(normal_to_exp(0.0) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(frechet_to_exp(0.0), InvalidArgument);
  double prev_f = -1, prev_n = -1;
  for (double x = 0.05; x < 30; x += 0.05) {
    CHECK(frechet_to_exp(x) > prev_f);
    prev_f = frechet_to_exp(x);
  }
  for (double w = -8; w < 8; w += 0.05) {
    CHECK(normal_to_exp(w) > prev_n);
    prev_n = normal_to_exp(w);
  }
}

TEST_CASE("frechet draws become exponential") {
  Rng rng(17);
  std::vector<double> e(1000000);
  for (auto& v : e) v = frechet_to_exp(-1.0 / std::log(rng.uniform()));
  auto ks = ks_test(e, [](double x) { return 1.0 - std::exp(-x); });
  CHECK(ks.p_value > 0.01);
}

TEST_CASE("hypoexponential margin") {
  for (double d : {0.0, 0.2, 0.5, 0.8, 1.0}) CHECK(hypoexp_cdf(0.0, d) == 0.0);
  CHECK(hypoexp_cdf(1.7, 0.3) == doctest::Approx(hypoexp_cdf(1.7, 0.7)).epsilon(1e-14));
  CHECK(hypoexp_cdf(1.0, 0.5) == doctest::Approx(1 - 3 * std::exp(-2.0)).epsilon(1e-12));
  CHECK(hypoexp_cdf(1.0, 0.5) == doctest::Approx(0.593994).epsilon(1e-6));
  CHECK(hypoexp_cdf(2.0, 0.0) == doctest::Approx(1 - std::exp(-2.0)));
  CHECK(hypoexp_cdf(2.0, 1.0) == doctest::Approx(1 - std::exp(-2.0)));
  CHECK_THROWS_AS(hypoexp_cdf(-1.0, 0.3), InvalidArgument);
}

TEST_CASE("hypoexponential monte carlo at the erlang point") {
  Rng rng(23);
  const int n = 10000000;
  int below = 0;
  for (int k = 0; k < n; ++k) below += 0.5 * rng.exponential() + 0.5 * rng.exponential() <= 1.0;
  CHECK(std::abs(below / double(n) - hypoexp_cdf(1.0, 0.5)) < 3e-4);
}

TEST_CASE("hypoexponential continuity and shape") {
  for (double v = 0; v <= 20; v += 0.25) {
    CHECK(std::abs(hypoexp_cdf(v, 0.5 + 1e-7) - hypoexp_cdf(v, 0.5)) < 1e-5);
    CHECK(std::abs(hypoexp_cdf(v, 0.5 - 1e-7) - hypoexp_cdf(v, 0.5)) < 1e-5);
  }
  for (double d : {0.1, 0.3, 0.5, 0.5 + 2e-6, 0.9}) {
    double prev = 0;
    for (double v = 0; v < 40; v += 0.1) {
      CHECK(hypoexp_cdf(v, d) >= prev);
      prev = hypoexp_cdf(v, d);
    }
    CHECK(hypoexp_cdf(60.0, d) == doctest::Approx(1.0));
    const double mass = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [d](double v) { return hypoexp_pdf(v, d); }, 0.0, INFINITY, 15, 1e-12);
    CHECK(std::abs(mass - 1.0) < 1e-6);
    for (double p : {0.01, 0.5, 0.99}) CHECK(hypoexp_cdf(hypoexp_quantile(p, d), d) == doctest::Approx(p).epsilon(1e-8));
    CHECK(hypoexp_survival(1.3, d) == doctest::Approx(1 - hypoexp_cdf(1.3, d)));
  }
}
