#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <sstream>

#include "pmm/ale.hpp"
#include "pmm/error.hpp"
#include "pmm/spline.hpp"
#include "pmm/spqr_io.hpp"
#include "pmm/spqr_model.hpp"
#include "pmm/spqr_net.hpp"
#include "pmm/spqr_train.hpp"

using namespace pmm;

namespace {

Eigen::MatrixXd random_x(std::size_t p, std::size_t b, Rng& rng) {
  Eigen::MatrixXd x(p, b);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

std::vector<double> random_u(std::size_t b, Rng& rng) {
  std::vector<double> u(b);
  for (auto& v : u) v = rng.uniform();
  return u;
}

std::vector<double> flat_grad(const SpqrNet& net, const std::vector<DenseLayer>& grad) {
  SpqrNet g = net;
  g.layers() = grad;
  return g.flatten();
}

SpqrModel random_model(Rng& rng, std::size_t k = 10) {
  SpqrNet net({3, 8, k});
  net.initialize(rng);
  for (auto& l : net.layers()) l.bias.setRandom();
  FeatureLayout layout{{ThetaComponent::delta}, 2, false, NeighborScale::uniform};
  return SpqrModel(SplineBasis(k, 3), layout, {net});
}

}  // namespace

TEST_CASE("softmax output") {
  SpqrNet zero({4, 6, 5});
  for (auto& l : zero.layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  std::vector<double> x{0.3, -1, 2, 5};
  auto pi = zero.forward(x);
  for (Eigen::Index k = 0; k < 5; ++k) CHECK(pi[k] == doctest::Approx(0.2));

  Rng rng(1);
  SpqrNet net({4, 6, 5});
  net.initialize(rng);
  auto before = net.forward(x);
  CHECK(before.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(before.minCoeff() > 0.0);
  net.layers().back().bias.array() += 3.7;
  CHECK((net.forward(x) - before).norm() < 1e-14);
  std::vector<double> bad{0, NAN, 0, 0};
  CHECK_THROWS_AS(net.forward(bad), InvalidArgument);
}

TEST_CASE("flatten round trip") {
  Rng rng(2);
  SpqrNet net({3, 4, 2, 6});
  net.initialize(rng);
  auto p = net.flatten();
  CHECK(p.size() == net.parameter_count());
  SpqrNet other({3, 4, 2, 6});
  other.unflatten(p);
  CHECK(other.flatten() == p);
}

TEST_CASE("nll gradient matches finite differences") {
  Rng rng(3);
  SplineBasis basis(5, 3);
  for (int rep = 0; rep < 10; ++rep) {
    for (auto act : {Activation::relu, Activation::sigmoid}) {
      SpqrNet net({3, 7, 4, 5}, act);
      net.initialize(rng);
      // zero biases put dead-unit samples exactly on the ReLU kink
      for (auto& l : net.layers())
        for (Eigen::Index k = 0; k < l.bias.size(); ++k) l.bias[k] = 0.1 * rng.normal();
      auto x = random_x(3, 20, rng);
      auto u = random_u(20, rng);
      std::vector<DenseLayer> grad;
      nll_gradient(net, basis, x, u, &grad);
      auto g = flat_grad(net, grad);
      auto p = net.flatten();
      double worst = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double h = 1e-5;
        auto q = p;
        q[i] += h;
        net.unflatten(q);
        const double up = nll_gradient(net, basis, x, u, nullptr).loss;
        q[i] -= 2 * h;
        net.unflatten(q);
        const double dn = nll_gradient(net, basis, x, u, nullptr).loss;
        net.unflatten(p);
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-4}));
      }
      CHECK(worst < 1e-5);
    }
  }
}

TEST_CASE("nll of the uniform-weight net") {
  SplineBasis basis(5, 3);
  SpqrNet net({2, 5});
  for (auto& l : net.layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  Rng rng(4);
  auto x = random_x(2, 30, rng);
  auto u = random_u(30, rng);
  double ref = 0;
  for (double v : u) {
    auto m = basis.m_values(v);
    double s = 0;
    for (double b : m) s += b;
    ref -= std::log(s / 5) / 30;
  }
  CHECK(nll_gradient(net, basis, x, u, nullptr).loss == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("duplicated batch leaves loss and gradient unchanged") {
  Rng rng(5);
  SplineBasis basis(6, 3);
  SpqrNet net({3, 5, 6});
  net.initialize(rng);
  auto x = random_x(3, 10, rng);
  auto u = random_u(10, rng);
  Eigen::MatrixXd x2(3, 20);
  x2 << x, x;
  auto u2 = u;
  u2.insert(u2.end(), u.begin(), u.end());
  std::vector<DenseLayer> g1, g2;
  const double l1 = nll_gradient(net, basis, x, u, &g1).loss;
  const double l2 = nll_gradient(net, basis, x2, u2, &g2).loss;
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-13));
  auto a = flat_grad(net, g1), b = flat_grad(net, g2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("boundary responses are clamped and counted") {
  Rng rng(6);
  SplineBasis basis(6, 3);
  SpqrNet net({2, 6});
  net.initialize(rng);
  auto x = random_x(2, 3, rng);
  std::vector<double> u{0.0, 0.5, 1.0};
  auto r = nll_gradient(net, basis, x, u, nullptr);
  CHECK(r.clamped == 2);
  CHECK(std::isfinite(r.loss));
}

TEST_CASE("density, cdf and quantile of a model") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    auto model = random_model(rng);
    std::vector<double> x{rng.normal(), rng.uniform(), rng.uniform()};
    CHECK(model.cdf(x, 0.0) == doctest::Approx(0.0));
    CHECK(model.cdf(x, 1.0) == doctest::Approx(1.0));
    double mass = 0;
    for (int s = 0; s < 7; ++s) {
      mass += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
          [&](double u) { return model.density(x, u); }, s / 7.0, (s + 1) / 7.0, 10, 1e-13);
    }
    CHECK(std::abs(mass - 1.0) < 1e-7);
    for (int k = 0; k < 5; ++k) {
      const double u = rng.uniform();
      CHECK(model.quantile(x, model.cdf(x, u)) == doctest::Approx(u).epsilon(1e-7));
    }
  }
}

TEST_CASE("batched log density agrees with scalar evaluation") {
  Rng rng(8);
  auto model = random_model(rng);
  model.set_standardization(Eigen::Vector3d(0.1, 0.5, 0.5), Eigen::Vector3d(2.0, 0.3, 0.3));
  auto x = random_x(3, 12, rng);
  auto u = random_u(12, rng);
  std::vector<double> ld(12), lc(12);
  model.log_density(x, u, ld);
  model.log_cdf(x, u, lc);
  for (int b = 0; b < 12; ++b) {
    std::vector<double> col(x.col(b).data(), x.col(b).data() + 3);
    CHECK(ld[b] == doctest::Approx(std::log(model.density(col, u[b]))));
    CHECK(lc[b] == doctest::Approx(std::log(model.cdf(col, u[b]))));
  }
}

TEST_CASE("feature assembly") {
  CHECK(theta_feature(ThetaComponent::delta, 0.5) == doctest::Approx(0.0));
  CHECK(theta_feature(ThetaComponent::rho, 1.0) == doctest::Approx(0.0));
  CHECK(neighbor_feature(0.5, NeighborScale::normal) == doctest::Approx(0.0));
  CHECK(neighbor_feature(0.0, NeighborScale::uniform) == doctest::Approx(kFeatureClamp));

  SpatialModel model{ModelVariant::pmm, 1.0, true, 1.0};
  auto g = global_layout(model, 4, NeighborScale::uniform);
  CHECK(g.width() == 3 + 4 + 8);
  std::vector<double> theta{0.3, 0.2, 0.9}, nb{0.4, 0.6};
  std::vector<Point2> off{{0.1, 0.0}, {0.0, -0.2}};
  std::vector<double> out(g.width());
  assemble_features(g, theta, nb, off, 0.5, out);
  CHECK(out[3] == 0.4);
  CHECK(out[5] == 0.5);
  CHECK(out[6] == 0.5);
  CHECK(out[7] == doctest::Approx(0.1));
  CHECK(out[10] == doctest::Approx(-0.2));
  CHECK(out[11] == kPadOffset);
  CHECK(out[14] == kPadOffset);
  auto l = local_layout(model, 2, NeighborScale::uniform);
  CHECK(l.width() == 5);
  CHECK(l.names().size() == 5);
}

TEST_CASE("training is deterministic and produces valid densities") {
  std::vector<Point2> pts{{0.1, 0.1}, {0.2, 0.15}, {0.3, 0.1}, {0.25, 0.3}};
  auto sites = SiteSet::unit_square(pts);
  auto graph = build_neighbor_sets(sites, order_sites(sites), 3);
  SpatialModel model{ModelVariant::pmm, 1.0, false, 1.0};
  DesignDistribution design;
  design.rho_lo = 0.05;
  TrainConfig cfg;
  cfg.samples = 3000;
  cfg.epochs = 5;
  cfg.hidden = {8};
  cfg.knots = 8;
  TrainReport r1, r2;
  auto m1 = train_local(sites, graph, 3, model, design, cfg, &r1);
  auto m2 = train_local(sites, graph, 3, model, design, cfg, &r2);
  CHECK(m1.nets()[0].flatten() == m2.nets()[0].flatten());
  CHECK(r1.train_loss.size() == 5);
  CHECK(r1.best_epoch >= 1);
  CHECK(r1.best_valid == doctest::Approx(*std::min_element(r1.valid_loss.begin(), r1.valid_loss.end())));

  cfg.hidden = {};
  auto lin = train_local(sites, graph, 3, model, design, cfg);
  CHECK(lin.nets()[0].layers().size() == 1);
  std::vector<double> x(lin.layout().width(), 0.3);
  x[0] = 0.0;
  CHECK(lin.cdf(x, 1.0) == doctest::Approx(1.0));

  cfg.learning_rate = -1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("small learning rate gives a nonincreasing training loss") {
  std::vector<Point2> pts{{0.1, 0.1}, {0.2, 0.15}, {0.3, 0.1}};
  auto sites = SiteSet::unit_square(pts);
  auto graph = build_neighbor_sets(sites, order_sites(sites), 2);
  SpatialModel model{ModelVariant::pmm, 1.0, false, 1.0};
  DesignDistribution design;
  design.rho_lo = 0.05;
  TrainConfig cfg;
  cfg.samples = 2000;
  cfg.epochs = 8;
  cfg.hidden = {6};
  cfg.learning_rate = 1e-4;
  TrainReport r;
  train_local(sites, graph, 2, model, design, cfg, &r);
  for (std::size_t e = 1; e < r.train_loss.size(); ++e) CHECK(r.train_loss[e] <= r.train_loss[e - 1] + 1e-6);
}

TEST_CASE("global training data pads short neighbour sets") {
  std::vector<Point2> pts{{0.1, 0.1}, {0.2, 0.15}, {0.3, 0.1}, {0.25, 0.3}};
  auto sites = SiteSet::unit_square(pts);
  auto graph = build_neighbor_sets(sites, order_sites(sites), 3);
  SpatialModel model{ModelVariant::gp, 1.0, false, 1.0};
  auto layout = global_layout(model, 3, NeighborScale::uniform);
  DesignDistribution design;
  design.rho_lo = 0.05;
  auto data = generate_global_training_data(sites, graph, model, design, layout, 500, 9);
  CHECK(data.x.rows() == static_cast<Eigen::Index>(layout.width()));
  CHECK(data.x.cols() == 500);
  int padded = 0;
  for (Eigen::Index c = 0; c < data.x.cols(); ++c) padded += data.x(data.x.rows() - 1, c) == kPadOffset;
  CHECK(padded > 0);
}

TEST_CASE("bundle round trip") {
  Rng rng(10);
  NetBundle b;
  b.spatial = {ModelVariant::pmm, 1.0, true, 1.0};
  b.site_order = {"a", "b", "c"};
  b.max_neighbors = 2;
  b.models.resize(3);
  b.models[1] = random_model(rng);
  b.models[2] = random_model(rng, 7);
  b.models[2].set_standardization(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(0.5, 0.25, 4));
  b.meta["seed"] = "10";
  std::stringstream ss;
  write_bundle(ss, b);
  auto r = read_bundle(ss);
  CHECK(r.site_order == b.site_order);
  CHECK(r.meta.at("seed") == "10");
  CHECK(r.models[0].nets().empty());
  CHECK(r.models[2].layout() == b.models[2].layout());
  std::vector<double> x{0.2, 0.3, 0.4};
  for (int i : {1, 2}) CHECK(r.models[i].density(x, 0.37) == b.models[i].density(x, 0.37));

  std::stringstream junk("{\"format\": \"other\"}");
  CHECK_THROWS_AS(read_bundle(junk), InvalidArgument);
}

TEST_CASE("ale of an unused feature vanishes") {
  Rng rng(11);
  auto model = random_model(rng);
  model.nets()[0].layers()[0].weight.col(1).setZero();
  Eigen::MatrixXd ref(3, 200);
  for (Eigen::Index c = 0; c < 200; ++c) ref.col(c) << rng.normal(), rng.uniform(), rng.uniform();
  std::vector<double> taus{0.05, 0.5, 0.95};
  auto a = ale_and_vi(model, ref, 1, taus);
  for (double v : a.importance) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a.curve.cwiseAbs().maxCoeff() < 1e-10);

  auto b = ale_and_vi(model, ref, 2, taus);
  auto scaled = model;
  scaled.nets()[0].layers()[0].weight.col(2) /= 3.0;
  Eigen::MatrixXd ref3 = ref;
  ref3.row(2) *= 3.0;
  auto c = ale_and_vi(scaled, ref3, 2, taus);
  for (std::size_t t = 0; t < 3; ++t) CHECK(c.importance[t] == doctest::Approx(b.importance[t]).epsilon(1e-4));

  Eigen::MatrixXd flat = ref;
  flat.row(0).setConstant(0.7);
  auto d = ale_and_vi(model, flat, 0, taus);
  CHECK(d.constant_feature);
  CHECK(d.importance[0] == 0.0);
}
