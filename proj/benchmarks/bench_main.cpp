#include <benchmark/benchmark.h>

#include <vector>

#include "pmm/exact_gaussian.hpp"
#include "pmm/procsim.hpp"
#include "pmm/spline.hpp"
#include "pmm/spqr_net.hpp"
#include "pmm/spqr_train.hpp"
#include "pmm/surrogate.hpp"

using namespace pmm;

namespace {

std::vector<Point2> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point2> pts(n);
  for (auto& p : pts) p = {rng.uniform(), rng.uniform()};
  return pts;
}

void BM_SplineEvaluate(benchmark::State& state) {
  const SplineBasis basis(static_cast<std::size_t>(state.range(0)));
  std::vector<double> m(basis.size()), i(basis.size());
  double u = 0.0;
  for (auto _ : state) {
    u = u > 0.999 ? 0.0005 : u + 0.001;
    basis.evaluate(u, m, i);
    benchmark::DoNotOptimize(m.data());
    benchmark::DoNotOptimize(i.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SplineEvaluate)->Arg(10)->Arg(15)->Arg(30);

// batch of B feature columns through a (30,15) net with K = 15 outputs
void BM_NetForward(benchmark::State& state) {
  const auto batch = state.range(0);
  const std::size_t width = 17;
  SpqrNet net({width, 30, 15, 15});
  Rng rng(3);
  net.initialize(rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(width), batch);
  for (auto _ : state) {
    auto w = net.forward(x);
    benchmark::DoNotOptimize(w.data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_NetForward)->Arg(1)->Arg(50)->Arg(1000);

void BM_NetGradient(benchmark::State& state) {
  const auto batch = state.range(0);
  const std::size_t width = 17;
  SpqrNet net({width, 30, 15, 15});
  Rng rng(4);
  net.initialize(rng);
  const SplineBasis basis(15);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(width), batch);
  std::vector<double> u(static_cast<std::size_t>(batch));
  for (auto& v : u) v = rng.uniform();
  const auto bvals = basis_matrix(basis, u);
  std::vector<DenseLayer> grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nll_gradient(net, x, bvals, &grad));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_NetGradient)->Arg(100)->Arg(1000);

void BM_BrownResnickExact(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 5);
  const BrownResnickSampler br(pts, 0.2 * tied_range_ratio(), 1.0);
  std::vector<double> out(pts.size());
  Rng rng(6);
  for (auto _ : state) {
    br.draw(rng, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_BrownResnickExact)->Arg(10)->Arg(50)->Arg(100);

void BM_PmmField(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 7);
  const ProcessSimulator sim(pts, tied_params(0.5, 0.15));
  std::vector<double> u(pts.size());
  Rng rng(8);
  for (auto _ : state) {
    sim.draw_u(rng, u);
    benchmark::DoNotOptimize(u.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PmmField)->Arg(16)->Arg(50);

struct VecchiaSetup {
  SiteSet sites;
  NeighborGraph graph;
  SpatialModel spatial{ModelVariant::pmm, 1.0, false, 1.0};
  std::vector<SpqrModel> models;
  Eigen::MatrixXd u;

  VecchiaSetup(std::size_t n, std::size_t years) {
    sites = SiteSet::unit_square(random_points(n, 9));
    graph = build_neighbor_sets(sites, order_sites(sites), 15);
    Rng rng(10);
    models.resize(n);
    for (std::size_t p = 1; p < n; ++p) {
      const auto layout = local_layout(spatial, graph.neighbors[p].size(), NeighborScale::uniform);
      SpqrNet net({layout.width(), 30, 15, 15});
      net.initialize(rng);
      models[p] = SpqrModel(SplineBasis(15), layout, {net});
      models[p].set_standardization(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.width())),
                                    Eigen::VectorXd::Ones(static_cast<Eigen::Index>(layout.width())));
    }
    const auto batch = simulate_batch(ModelVariant::pmm, sites, tied_params(0.5, 0.15), years, 11);
    u.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(years));
    for (std::size_t t = 0; t < years; ++t)
      for (std::size_t i = 0; i < n; ++i) u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = batch[t].u[i];
  }
};

void BM_VecchiaLoglikSpqr(benchmark::State& state) {
  const VecchiaSetup s(static_cast<std::size_t>(state.range(0)), 50);
  const SpqrConditionals cond(s.graph, s.spatial, s.models);
  const std::vector<double> theta{0.5, 0.15};
  for (auto _ : state) benchmark::DoNotOptimize(vecchia_loglik(s.u, theta, cond));
  state.SetItemsProcessed(state.iterations() * s.u.size());
}
BENCHMARK(BM_VecchiaLoglikSpqr)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_VecchiaLoglikExactGp(benchmark::State& state) {
  const VecchiaSetup s(static_cast<std::size_t>(state.range(0)), 50);
  const SpatialModel gp{ModelVariant::gp, 1.0, true, 1.0};
  const GaussianConditionals cond(s.graph, gp, s.sites);
  const std::vector<double> theta{0.15, 0.9};
  for (auto _ : state) benchmark::DoNotOptimize(vecchia_loglik(s.u, theta, cond));
  state.SetItemsProcessed(state.iterations() * s.u.size());
}
BENCHMARK(BM_VecchiaLoglikExactGp)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
