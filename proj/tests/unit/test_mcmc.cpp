#include <doctest.h>

#include <cmath>

#include "pmm/exact_gaussian.hpp"
#include "pmm/mcmc.hpp"
#include "pmm/stats.hpp"
#include "pmm/stvc.hpp"
#include "pmm/surrogate.hpp"

using namespace pmm;

namespace {

struct RunStats {
  double mean = 0, var = 0, acceptance = 0, final_scale = 0;
};

RunStats run_normal(std::size_t burn, std::size_t keep, double scale, bool adapt, bool flat = false) {
  Rng rng(99);
  std::vector<double> x{0.0};
  auto target = [flat](std::span<const double> v) { return flat ? 0.0 : -0.5 * v[0] * v[0]; };
  double lp = target(x);
  ProposalBlock block{"x", {scale}};
  AdaptConfig cfg;
  cfg.enabled = adapt;
  std::vector<ParamTransform> tr{ParamTransform::identity()};
  for (std::size_t it = 1; it <= burn; ++it) {
    metropolis_block(x, lp, block, tr, target, rng);
    if (adapt) adapt_scales(block, cfg, it);
  }
  block.proposed = block.accepted = 0;
  std::vector<double> draws;
  for (std::size_t it = 0; it < keep; ++it) {
    metropolis_block(x, lp, block, tr, target, rng);
    draws.push_back(x[0]);
  }
  const double sd = sample_sd(draws);
  return {mean(draws), sd * sd, block.acceptance_rate(), block.scales[0]};
}

}  // namespace

TEST_CASE("transforms") {
  auto lg = ParamTransform::interval(0.0, 0.5);
  CHECK(lg.to_natural(lg.to_free(0.2)) == doctest::Approx(0.2));
  auto ps = ParamTransform::positive();
  CHECK(ps.to_natural(ps.to_free(3.0)) == doctest::Approx(3.0));
  for (double z : {-30.0, -2.0, 0.0, 1.5, 40.0}) {
    const double h = 1e-6;
    const double fd = (lg.to_natural(z + h) - lg.to_natural(z - h)) / (2 * h);
    if (fd > 1e-12) CHECK(lg.log_jacobian(z) == doctest::Approx(std::log(fd)).epsilon(1e-5));
    CHECK(std::isfinite(lg.log_jacobian(z)));
    CHECK(ps.log_jacobian(z) == doctest::Approx(z));
  }
}

TEST_CASE("flat target always accepts") {
  auto r = run_normal(0, 10000, 1.0, false, true);
  CHECK(r.acceptance == 1.0);
}

TEST_CASE("huge proposal scale almost never accepts") {
  auto r = run_normal(0, 10000, 1e6, false);
  CHECK(r.acceptance < 0.01);
}

TEST_CASE("standard normal target") {
  auto r = run_normal(5000, 100000, 1.0, true);
  CHECK(std::abs(r.mean) < 0.05);
  CHECK(std::abs(r.var - 1.0) < 0.1);
  CHECK(r.acceptance > 0.30);
  CHECK(r.acceptance < 0.50);
}

TEST_CASE("adaptation fixed point and off switch") {
  ProposalBlock b{"b", {0.7}};
  AdaptConfig cfg;
  b.window_proposed = 50;
  b.window_accepted = 20;
  adapt_scales(b, cfg, 50);
  CHECK(b.scales[0] == doctest::Approx(0.7));
  auto r = run_normal(2000, 10, 0.1, false);
  CHECK(r.final_scale == 0.1);
}

TEST_CASE("rejected proposals leave the state untouched") {
  Rng rng(1);
  std::vector<double> x{0.3, 0.4};
  double lp = -1.0;
  ProposalBlock b{"b", {0.1, 0.1}};
  std::vector<ParamTransform> tr{ParamTransform::identity(), ParamTransform::identity()};
  auto never = [](std::span<const double>) { return -INFINITY; };
  for (int k = 0; k < 50; ++k) CHECK_FALSE(metropolis_block(x, lp, b, tr, never, rng));
  CHECK(x == std::vector<double>{0.3, 0.4});
  CHECK(lp == -1.0);
}

TEST_CASE("latent missing value samples its conditional") {
  std::vector<Point2> pts{{0.1, 0.1}, {0.2, 0.1}, {0.15, 0.2}, {0.6, 0.6}};
  auto sites = SiteSet::unit_square(pts);
  auto graph = build_neighbor_sets(sites, order_sites(sites), 2);
  SpatialModel model{ModelVariant::gp, 1.0, false, 0.9};
  GaussianConditionals g(graph, model, sites);
  const std::size_t last = graph.order.back();
  REQUIRE(graph.dependents.back().empty());

  MarginalState m;
  for (int i = 0; i < 4; ++i) m.sites.push_back({0.0, 0.0, 0.0, 0.0});
  Eigen::MatrixXd y(4, 1);
  y << 0.2, -0.3, 0.5, 0.0;
  auto data = Dataset::complete(sites, {2000}, y);
  data.set_missing(last, 0);
  auto x = TimeCovariate::zeros(1);
  std::vector<double> th{0.3};
  LikelihoodCache cache(data, g, x);
  cache.reset(th, m, Eigen::MatrixXd::Constant(4, 1, 0.5));

  Rng rng(3);
  std::vector<double> val{0.5};
  double lp = cache.total();
  ProposalBlock b{"latent", {1.5}};
  std::vector<ParamTransform> tr{ParamTransform::interval(0.0, 1.0)};
  std::vector<double> draws;
  for (int it = 0; it < 60000; ++it) {
    const bool ok = metropolis_block(val, lp, b, tr, [&](std::span<const double> v) { return cache.propose_latent(last, 0, v[0]); }, rng);
    if (ok) cache.accept(); else cache.reject();
    if (it >= 1000 && it % 20 == 0) draws.push_back(val[0]);
  }
  Eigen::VectorXd w;
  double sd;
  const std::size_t pos = graph.size() - 1;
  g.conditional(pos, th, w, sd);
  double mu = 0;
  for (std::size_t r = 0; r < graph.neighbors[pos].size(); ++r)
    mu += w[r] * normal_quantile(cache.u()(graph.order[graph.neighbors[pos][r]], 0));
  auto ks = ks_test(draws, [&](double u) { return normal_cdf((normal_quantile(u) - mu) / sd); });
  CHECK(ks.p_value > 0.01);
}

TEST_CASE("matern special case and field prior") {
  for (double h : {0.0, 0.1, 0.5, 2.0}) CHECK(matern_correlation(h, 0.4, 0.5) == doctest::Approx(std::exp(-h / 0.4)).epsilon(1e-10));

  std::vector<Point2> pts{{0, 0}, {0.3, 0}, {0, 0.4}};
  std::vector<double> v{1.0, 1.4, 0.6};
  FieldHyper h{0.9, 0.5, 0.25, 0.2};
  Eigen::Matrix3d c;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) c(a, b) = 0.5 * std::exp(-distance(pts[a], pts[b]) / 0.25) + (a == b ? 0.2 : 0.0);
  Eigen::Vector3d r(0.1, 0.5, -0.3);
  const double hand = -0.5 * r.dot(c.inverse() * r) - 0.5 * std::log(c.determinant()) - 1.5 * std::log(2 * M_PI);
  CHECK(stvc_prior_logdensity(v, h, 0.5, pts) == doctest::Approx(hand).epsilon(1e-12));
  CHECK(FieldPrior(pts, h, 0.5).logdensity(v) == doctest::Approx(hand).epsilon(1e-12));

  FieldHyper degenerate{0.9, 1e-14, 0.25, 0.2};
  double indep = 0;
  for (double x : v) indep += normal_logpdf((x - 0.9) / std::sqrt(0.2)) - 0.5 * std::log(0.2);
  CHECK(stvc_prior_logdensity(v, degenerate, 0.5, pts) == doctest::Approx(indep).epsilon(1e-9));
}

TEST_CASE("matern with smoothness 3/2") {
  const double s = 0.3 / 0.4;
  CHECK(matern_correlation(0.3, 0.4, 1.5) == doctest::Approx((1 + s) * std::exp(-s)).epsilon(1e-10));
}
