#include <cmath>

#include "../support/gaussian_oracle.hpp"
#include "acceptance.hpp"
#include "pmm/exact_gaussian.hpp"
#include "pmm/spline.hpp"
#include "pmm/spqr_net.hpp"
#include "pmm/spqr_train.hpp"
#include "pmm/surrogate.hpp"

namespace pmm::acceptance {
namespace {

constexpr std::size_t kGradNets = 50;
constexpr double kGradStep = 1e-5;
constexpr double kGradTol = 1e-5;
constexpr double kGradFloor = 1e-4;  // denominator floor for near-zero partials

constexpr std::size_t kOracleTrain = 100'000;
constexpr std::size_t kOracleHeldOut = 1000;
constexpr double kOracleKlTol = 0.05;
constexpr double kOracleKsLevel = 0.01;

constexpr std::size_t kVecchiaConfigs = 20;
constexpr double kVecchiaTol = 1e-8;

Outcome gradient_check() {
  Rng rng(404);
  double worst = 0.0;
  for (std::size_t rep = 0; rep < kGradNets; ++rep) {
    std::vector<std::size_t> sizes{2 + rng.index(5)};
    const std::size_t hidden = rng.index(3);
    for (std::size_t h = 0; h < hidden; ++h) sizes.push_back(3 + rng.index(8));
    sizes.push_back(5 + rng.index(11));
    const auto act = rep % 2 ? Activation::sigmoid : Activation::relu;
    SpqrNet net(sizes, act);
    net.initialize(rng);
    // nonzero biases keep ReLU units off their kink
    for (auto& l : net.layers())
      for (Eigen::Index k = 0; k < l.bias.size(); ++k) l.bias[k] = 0.1 * rng.normal();
    const SplineBasis basis(sizes.back(), 3);
    const std::size_t b = 5 + rng.index(36);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(sizes.front()), static_cast<Eigen::Index>(b));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    std::vector<double> u(b);
    for (auto& v : u) v = rng.uniform();

    std::vector<DenseLayer> grad;
    nll_gradient(net, basis, x, u, &grad);
    SpqrNet g = net;
    g.layers() = grad;
    const auto analytic = g.flatten();
    const auto p = net.flatten();
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto q = p;
      q[i] = p[i] + kGradStep;
      net.unflatten(q);
      const double up = nll_gradient(net, basis, x, u, nullptr).loss;
      q[i] = p[i] - kGradStep;
      net.unflatten(q);
      const double dn = nll_gradient(net, basis, x, u, nullptr).loss;
      net.unflatten(p);
      const double fd = (up - dn) / (2.0 * kGradStep);
      const double denom = std::max({std::abs(fd), std::abs(analytic[i]), kGradFloor});
      worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
  }
  return {worst < kGradTol, fmt("max relative error ", worst, " over ", kGradNets, " nets (tol ", kGradTol, ")")};
}

double kl_to_fitted(const SpqrModel& model, std::span<const double> features, double m, double s) {
  // Simpson rule on the standardised scale of the exact conditional
  const int steps = 400;
  const double lo = -8.0, hi = 8.0, h = (hi - lo) / steps;
  double kl = 0.0;
  for (int k = 0; k <= steps; ++k) {
    const double w = lo + h * k;
    const double z = m + s * w;
    const double log_true = normal_logpdf(w) - std::log(s);
    const double u = std::clamp(normal_cdf(z), kFeatureClamp, 1.0 - kFeatureClamp);
    const double log_fit = std::log(model.density(features, u)) + normal_logpdf(z);
    const double weight = (k == 0 || k == steps) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    kl += weight * std::exp(normal_logpdf(w)) * (log_true - log_fit);
  }
  return kl * h / 3.0;
}

Outcome gaussian_oracle() {
  Rng layout(150);
  std::vector<Point2> pts(100);
  for (auto& p : pts) p = {layout.uniform(), layout.uniform()};
  const auto sites = SiteSet::unit_square(pts);
  const auto graph = build_neighbor_sets(sites, order_sites(sites), 10);
  const std::size_t pos = 50;
  const SpatialModel model{ModelVariant::gp, 1.0, true, 1.0};
  DesignDistribution design;
  design.rho_lo = 0.1;
  design.rho_hi = 1.23;
  TrainConfig cfg;
  cfg.samples = kOracleTrain;
  cfg.batch = 1000;
  cfg.epochs = 20;
  cfg.learning_rate = 0.005;
  cfg.hidden = {25, 15};
  cfg.knots = 10;
  cfg.activation = Activation::sigmoid;
  cfg.scale = NeighborScale::normal;
  cfg.seed = 151;
  TrainReport report;
  const SpqrModel fitted = train_local(sites, graph, pos, model, design, cfg, &report);

  const auto held = generate_local_training_data(sites, graph, pos, model, design, fitted.layout(), kOracleHeldOut, 9151);
  const GaussianConditionals exact(graph, model, sites);
  const std::size_t nt = fitted.layout().theta.size();
  std::vector<double> kls, pit;
  for (std::size_t c = 0; c < kOracleHeldOut; ++c) {
    const auto col = held.x.col(static_cast<Eigen::Index>(c));
    std::vector<double> x(col.data(), col.data() + col.size());
    const std::vector<double> theta{std::exp(x[0]), expit(x[1])};
    Eigen::VectorXd w;
    double sd;
    exact.conditional(pos, theta, w, sd);
    double m = 0.0;
    for (Eigen::Index r = 0; r < w.size(); ++r) m += w[r] * x[nt + static_cast<std::size_t>(r)];
    kls.push_back(kl_to_fitted(fitted, x, m, sd));
    pit.push_back(fitted.cdf(x, held.u[c]));
  }
  const double kl = mean(kls);
  const double p = ks_uniform(pit).p_value;
  const bool ok = kl < kOracleKlTol && p > kOracleKsLevel;
  return {ok, fmt("mean KL ", kl, " nats (tol ", kOracleKlTol, "); PIT KS p ", p, " (level ", kOracleKsLevel,
                  "); best epoch ", report.best_epoch, ", valid nll ", report.best_valid)};
}

Outcome vecchia_oracle() {
  double worst = 0.0;
  for (std::size_t c = 0; c < kVecchiaConfigs; ++c) {
    Rng rng(606, c);
    const std::size_t n = 10 + rng.index(31);
    std::vector<Point2> pts(n);
    for (auto& p : pts) p = {rng.uniform(), rng.uniform()};
    const auto sites = SiteSet::unit_square(pts);
    const auto graph = build_neighbor_sets(sites, order_sites(sites), 3 + rng.index(13));
    const SpatialModel model{ModelVariant::gp, 1.0, true, 1.0};
    const std::vector<double> theta{rng.uniform(0.05, 0.5), rng.uniform(0.3, 0.95)};
    const auto params = model.params(theta);
    const std::size_t years = 5 + rng.index(20);
    ProcessSimulator sim(pts, params, ModelVariant::gp);
    Eigen::MatrixXd u(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(years));
    std::vector<double> col(n);
    for (std::size_t t = 0; t < years; ++t) {
      sim.draw_u(rng, col);
      for (std::size_t i = 0; i < n; ++i) u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = col[i];
    }
    const GaussianConditionals exact(graph, model, sites);
    const double ours = vecchia_loglik(u, theta, exact);
    const double oracle = testing::gaussian_vecchia_loglik(pts, graph, params, u);
    worst = std::max(worst, std::abs(ours - oracle));
  }
  return {worst < kVecchiaTol, fmt("max |difference| ", worst, " over ", kVecchiaConfigs, " configurations (tol ",
                                   kVecchiaTol, ")")};
}

}  // namespace

std::vector<Criterion> surrogate_criteria() {
  return {
      {4, "SPQR gradient vs finite differences", false, gradient_check},
      {5, "local SPQR vs exact Gaussian conditional", false, gaussian_oracle},
      {6, "Vecchia likelihood vs analytic Gaussian Vecchia", false, vecchia_oracle},
  };
}

}  // namespace pmm::acceptance
