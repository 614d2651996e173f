#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <numeric>

#include "pmm/error.hpp"
#include "pmm/rng.hpp"
#include "pmm/spline.hpp"

using namespace pmm;

TEST_CASE("m-splines integrate to one and i-splines run from 0 to 1") {
  for (std::size_t k : {5u, 10u, 15u}) {
    SplineBasis b(k, 3);
    for (std::size_t j = 0; j < k; ++j) {
      const auto& knots = b.knots();
      double mass = 0;
      // integrate span by span so the quadrature never straddles a knot
      for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
        if (knots[s + 1] <= knots[s]) continue;
        mass += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            [&](double u) { return b.m_values(u)[j]; }, knots[s], knots[s + 1], 10, 1e-13);
      }
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
      CHECK(b.i_values(0.0)[j] == doctest::Approx(0.0));
      CHECK(b.i_values(1.0)[j] == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("m-spline is the derivative of the i-spline combination") {
  SplineBasis b(10, 3);
  Rng rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> c(10);
    for (auto& v : c) v = rng.exponential();
    const double s = std::accumulate(c.begin(), c.end(), 0.0);
    for (auto& v : c) v /= s;
    auto comb = [&](const std::vector<double>& vals) { return std::inner_product(vals.begin(), vals.end(), c.begin(), 0.0); };
    const double h = 1e-5;
    const double fd = (comb(b.i_values(0.5 + h)) - comb(b.i_values(0.5 - h))) / (2 * h);
    CHECK(comb(b.m_values(0.5)) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("spline values are nonnegative and i-splines monotone") {
  SplineBasis b(15, 3);
  std::vector<double> prev(15, 0.0);
  for (double u = 0; u <= 1.0; u += 0.01) {
    auto m = b.m_values(u);
    auto i = b.i_values(u);
    for (std::size_t k = 0; k < 15; ++k) {
      CHECK(m[k] >= 0.0);
      CHECK(i[k] >= prev[k] - 1e-14);
      prev[k] = i[k];
    }
  }
}

TEST_CASE("out of range responses are rejected") {
  SplineBasis b;
  CHECK_THROWS_AS(b.m_values(-0.01), InvalidArgument);
  CHECK_THROWS_AS(b.i_values(1.01), InvalidArgument);
  CHECK_THROWS_AS(SplineBasis(3, 3), InvalidArgument);
}
