#include <doctest.h>

#include <memory>
#include <sstream>

#include "pmm/chain_summary.hpp"
#include "pmm/exact_gaussian.hpp"
#include "pmm/gev_mle.hpp"
#include "pmm/sampler.hpp"
#include "pmm/stats.hpp"

using namespace pmm;

namespace {

struct Fixture {
  SiteSet sites;
  NeighborGraph graph;
  SpatialModel model{ModelVariant::gp, 1.0, false, 1.0};
  std::unique_ptr<GaussianConditionals> cond;
  Dataset data;
  TimeCovariate x;
  MarginalState truth;

  explicit Fixture(std::size_t n = 10, std::size_t years = 15) {
    Rng rng(42);
    std::vector<Point2> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform(), rng.uniform()});
    sites = SiteSet::unit_square(pts);
    graph = build_neighbor_sets(sites, order_sites(sites), 4);
    cond = std::make_unique<GaussianConditionals>(graph, model, sites);
    std::vector<int> yrs;
    for (std::size_t t = 0; t < years; ++t) yrs.push_back(1990 + static_cast<int>(t));
    x = TimeCovariate::from_years(yrs);
    auto batch = simulate_batch(ModelVariant::gp, sites, tied_params(0.0, 0.2), years, 7);
    Eigen::MatrixXd y(n, years);
    for (std::size_t i = 0; i < n; ++i) truth.sites.push_back({3.0 + 0.2 * pts[i].x, 0.1, std::log(0.5), 0.1});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < years; ++t) y(i, t) = gev_quantile(batch[t].u[i], truth.at(i, t, x));
    data = Dataset::complete(sites, yrs, y);
  }
};

}  // namespace

TEST_CASE("gev maximum likelihood recovers parameters") {
  Rng rng(5);
  GevParams p{10.0, 2.0, 0.15};
  std::vector<double> y(3000);
  for (auto& v : y) v = gev_quantile(rng.uniform(), p);
  auto fit = fit_gev_mle(y);
  CHECK(fit.converged);
  CHECK(fit.params.mu == doctest::Approx(10.0).epsilon(0.02));
  CHECK(fit.params.sigma == doctest::Approx(2.0).epsilon(0.05));
  CHECK(std::abs(fit.params.xi - 0.15) < 0.05);
}

TEST_CASE("parameter names") {
  Fixture f(4, 5);
  auto shared = parameter_names(f.model, MarginMode::shared, f.sites);
  CHECK(shared == std::vector<std::string>{"rho", "mu", "log_sigma", "xi"});
  auto stvc = parameter_names(f.model, MarginMode::stvc, f.sites);
  CHECK(stvc.size() == 1 + 4 * 4 + 17);
  CHECK(parameter_names(f.model, MarginMode::fixed, f.sites).size() == 1);
}

TEST_CASE("stvc chain audit, reproducibility and csv round trip") {
  Fixture f(8, 10);
  f.data.set_missing(2, 3);
  SamplerConfig cfg;
  cfg.iterations = 300;
  cfg.burn_in = 100;
  cfg.thin = 5;
  cfg.audit_every = 1;
  cfg.store_pointwise = true;
  PriorSpec prior;
  auto a = run_chain(cfg, 0, f.data, *f.cond, f.x, prior);
  CHECK(a.audits == 300);
  CHECK(a.max_audit_error < 1e-8);
  CHECK(a.draws.rows() == 40);
  CHECK(a.pointwise.cols() == 8 * 10 - 1);
  auto b = run_chain(cfg, 0, f.data, *f.cond, f.x, prior);
  CHECK(a.draws == b.draws);
  for (auto& [name, ap] : a.acceptance) CHECK(ap.first <= ap.second);

  std::stringstream ss;
  write_chain_csv(ss, a);
  CHECK(ss.str().rfind("draw,rho,", 0) == 0);
  auto back = read_chain_csv(ss);
  CHECK(back.names == a.names);
  CHECK((back.draws - a.draws).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("prior-only run recovers the prior") {
  Fixture f(5, 5);
  auto cond = GaussianConditionals(f.graph, f.model, f.sites);
  SamplerConfig cfg;
  cfg.iterations = 40000;
  cfg.burn_in = 2000;
  cfg.thin = 5;
  cfg.margins = MarginMode::fixed;
  cfg.fixed_margins = f.truth;
  cfg.use_likelihood = false;
  PriorSpec prior;
  auto c = run_chain(cfg, 0, f.data, cond, f.x, prior);
  std::vector<double> rho;
  for (Eigen::Index k = 0; k < c.draws.rows(); ++k) rho.push_back(c.draws(k, 0));
  CHECK(mean(rho) == doctest::Approx(0.25).epsilon(0.08));
  CHECK(sample_quantile(rho, 0.9) == doctest::Approx(0.45).epsilon(0.06));
}

TEST_CASE("gp range is learned and chains agree") {
  Fixture f(12, 30);
  SamplerConfig cfg;
  cfg.iterations = 3000;
  cfg.burn_in = 500;
  cfg.thin = 2;
  cfg.margins = MarginMode::fixed;
  cfg.fixed_margins = f.truth;
  PriorSpec prior;
  auto chains = run_chains(cfg, f.data, *f.cond, f.x, prior);
  REQUIRE(chains.size() == 2);
  auto sum = summarize(chains);
  CHECK(sum[0].name == "rho");
  CHECK(sum[0].rhat < 1.1);
  CHECK(sum[0].q025 < 0.2);
  CHECK(sum[0].q975 > 0.2);
  CHECK(sum[0].ess > 50);
}

TEST_CASE("rhat and ess on iid draws") {
  Rng rng(8);
  std::vector<std::vector<double>> c(2, std::vector<double>(2000));
  for (auto& ch : c)
    for (auto& v : ch) v = rng.normal();
  CHECK(split_rhat(c) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(effective_sample_size(c) > 3000);
  for (auto& v : c[1]) v += 3.0;
  CHECK(split_rhat(c) > 1.5);
}
