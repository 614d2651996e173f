#include "pmm/spqr_train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pmm/error.hpp"
#include "pmm/parallel.hpp"

namespace pmm {
namespace {

std::vector<Point2> gather_points(const SiteSet& sites, const NeighborGraph& graph,
                                  std::size_t pos) {
  std::vector<Point2> pts;
  pts.push_back(sites.scaled[graph.order[pos]]);
  for (auto nb : graph.neighbors[pos]) pts.push_back(sites.scaled[graph.order[nb]]);
  return pts;
}

std::vector<Point2> gather_offsets(const SiteSet& sites, const NeighborGraph& graph,
                                   std::size_t pos) {
  const Point2 target = sites.scaled[graph.order[pos]];
  std::vector<Point2> off;
  for (auto nb : graph.neighbors[pos]) {
    const Point2 p = sites.scaled[graph.order[nb]];
    off.push_back({p.x - target.x, p.y - target.y});
  }
  return off;
}

// One synthetic pair for the target at pos; writes features into column c.
void draw_pair(const SiteSet& sites, const NeighborGraph& graph, std::size_t pos,
               const SpatialModel& model, const DesignDistribution& design,
               const FeatureLayout& layout, Rng& rng, Eigen::MatrixXd& x, std::vector<double>& u,
               std::size_t c) {
  const auto theta = design.draw(model, rng);
  const auto params = model.params(theta);
  const auto pts = gather_points(sites, graph, pos);
  const ProcessSimulator sim(pts, params, model.variant);
  const FieldRealization f = sim.draw(rng);
  std::vector<double> nb(f.u.begin() + 1, f.u.end());
  const auto off = layout.offsets ? gather_offsets(sites, graph, pos) : std::vector<Point2>{};
  std::vector<double> feat(layout.width());
  // padded slots in training get fresh uniforms, drawn after the field
  std::vector<Point2> off_full = off;
  while (layout.offsets && nb.size() < layout.neighbors) {
    nb.push_back(rng.uniform());
    off_full.push_back({kPadOffset, kPadOffset});
  }
  assemble_features(layout, theta, nb, off_full, 0.5, feat);
  for (std::size_t r = 0; r < feat.size(); ++r) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = feat[r];
  u[c] = f.u[0];
}

struct Adam {
  std::vector<DenseLayer> m, v;
  std::size_t t = 0;

  explicit Adam(const SpqrNet& net) {
    for (const auto& l : net.layers()) {
      m.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    }
    v = m;
  }

  void step(SpqrNet& net, const std::vector<DenseLayer>& g, const TrainConfig& cfg) {
    ++t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      m[l].weight = cfg.beta1 * m[l].weight + (1.0 - cfg.beta1) * g[l].weight;
      v[l].weight = cfg.beta2 * v[l].weight + (1.0 - cfg.beta2) * g[l].weight.cwiseAbs2();
      m[l].bias = cfg.beta1 * m[l].bias + (1.0 - cfg.beta1) * g[l].bias;
      v[l].bias = cfg.beta2 * v[l].bias + (1.0 - cfg.beta2) * g[l].bias.cwiseAbs2();
      layers[l].weight.array() -= cfg.learning_rate * (m[l].weight.array() / c1) /
                                  ((v[l].weight.array() / c2).sqrt() + cfg.epsilon);
      layers[l].bias.array() -= cfg.learning_rate * (m[l].bias.array() / c1) /
                                ((v[l].bias.array() / c2).sqrt() + cfg.epsilon);
    }
  }
};

double mean_loss(const SpqrNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& b,
                 std::span<const std::size_t> idx) {
  constexpr std::size_t chunk = 4096;
  double total = 0.0;
  for (std::size_t s = 0; s < idx.size(); s += chunk) {
    const std::size_t e = std::min(idx.size(), s + chunk);
    Eigen::MatrixXd xs(x.rows(), static_cast<Eigen::Index>(e - s));
    Eigen::MatrixXd bs(b.rows(), static_cast<Eigen::Index>(e - s));
    for (std::size_t k = s; k < e; ++k) {
      xs.col(static_cast<Eigen::Index>(k - s)) = x.col(static_cast<Eigen::Index>(idx[k]));
      bs.col(static_cast<Eigen::Index>(k - s)) = b.col(static_cast<Eigen::Index>(idx[k]));
    }
    total += nll_gradient(net, xs, bs, nullptr) * static_cast<double>(e - s);
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace

void DesignDistribution::validate() const {
  require(delta_lo >= 0.0 && delta_lo < delta_hi && delta_hi <= 1.0, "delta design range must lie in [0,1]");
  require(rho_lo >= 0.0 && rho_lo < rho_hi, "rho design range must be positive and nonempty");
  require(r_lo >= 0.0 && r_lo < r_hi && r_hi <= 1.0, "r design range must lie in [0,1]");
}

std::vector<double> DesignDistribution::draw(const SpatialModel& model, Rng& rng) const {
  std::vector<double> theta;
  for (auto c : model.components()) {
    switch (c) {
      case ThetaComponent::delta: theta.push_back(rng.uniform(delta_lo, delta_hi)); break;
      case ThetaComponent::rho: theta.push_back(rng.uniform(rho_lo, rho_hi)); break;
      case ThetaComponent::r: theta.push_back(rng.uniform(r_lo, r_hi)); break;
    }
  }
  return theta;
}

void TrainConfig::validate() const {
  require(samples >= 10, "training sample size is too small");
  require(batch >= 1 && batch <= samples, "batch size must lie in [1, samples]");
  require(epochs >= 1, "need at least one epoch");
  require(learning_rate > 0.0, "learning rate must be positive");
  require(validation > 0.0 && validation < 1.0, "validation fraction must lie in (0,1)");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0,
          "invalid Adam moment parameters");
  require(ensemble >= 1, "ensemble size must be at least one");
  require(knots >= static_cast<std::size_t>(degree) + 1, "too few spline basis functions");
}

FeatureLayout local_layout(const SpatialModel& model, std::size_t neighbors, NeighborScale scale) {
  FeatureLayout l;
  l.theta = model.components();
  l.neighbors = neighbors;
  l.scale = scale;
  return l;
}

FeatureLayout global_layout(const SpatialModel& model, std::size_t max_neighbors, NeighborScale scale) {
  FeatureLayout l = local_layout(model, max_neighbors, scale);
  l.offsets = true;
  return l;
}

TrainingData generate_local_training_data(const SiteSet& sites, const NeighborGraph& graph,
                                          std::size_t pos, const SpatialModel& model,
                                          const DesignDistribution& design,
                                          const FeatureLayout& layout, std::size_t samples,
                                          std::uint64_t seed, unsigned threads) {
  require(pos >= 1 && pos < graph.size(), "local nets exist for ordered positions 2..n");
  require(layout.offsets || layout.neighbors == graph.neighbors[pos].size(),
          "layout neighbour count does not match the conditioning set");
  design.validate();
  TrainingData d;
  d.x.resize(static_cast<Eigen::Index>(layout.width()), static_cast<Eigen::Index>(samples));
  d.u.resize(samples);
  parallel_for(samples, threads, [&](std::size_t k) {
    Rng rng(seed, k, 1);
    draw_pair(sites, graph, pos, model, design, layout, rng, d.x, d.u, k);
  });
  return d;
}

TrainingData generate_global_training_data(const SiteSet& sites, const NeighborGraph& graph,
                                           const SpatialModel& model,
                                           const DesignDistribution& design,
                                           const FeatureLayout& layout, std::size_t samples,
                                           std::uint64_t seed, unsigned threads) {
  require(graph.size() >= 2, "global training needs at least two sites");
  require(layout.offsets && layout.neighbors == graph.max_neighbors,
          "global layout must carry offsets for every neighbour slot");
  design.validate();
  TrainingData d;
  d.x.resize(static_cast<Eigen::Index>(layout.width()), static_cast<Eigen::Index>(samples));
  d.u.resize(samples);
  parallel_for(samples, threads, [&](std::size_t k) {
    Rng rng(seed, k, 2);
    const std::size_t pos = 1 + rng.index(graph.size() - 1);
    draw_pair(sites, graph, pos, model, design, layout, rng, d.x, d.u, k);
  });
  return d;
}

SpqrModel fit_spqr(const TrainingData& data, const FeatureLayout& layout,
                   const TrainConfig& config, TrainReport* report) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = data.u.size();
  require(static_cast<std::size_t>(data.x.cols()) == n, "features and responses disagree");
  require(static_cast<std::size_t>(data.x.rows()) == layout.width(), "training features do not match the layout");

  SplineBasis basis(config.knots, config.degree);
  TrainReport rep;
  const Eigen::MatrixXd b = basis_matrix(basis, data.u, &rep.clamped);

  const auto width = static_cast<Eigen::Index>(layout.width());
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(width);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(width);
  if (config.standardize) {
    shift = data.x.rowwise().mean();
    const Eigen::MatrixXd centered = data.x.colwise() - shift;
    for (Eigen::Index r = 0; r < width; ++r) {
      const double sd = std::sqrt(centered.row(r).squaredNorm() / static_cast<double>(std::max<std::size_t>(n - 1, 1)));
      scale(r) = sd > 1e-12 ? sd : 1.0;
    }
  }
  const Eigen::MatrixXd x = ((data.x.colwise() - shift).array().colwise() / scale.array()).matrix();

  // fixed split: a seeded permutation, last fraction held out
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  {
    Rng rng(config.seed, 0, 11);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
  }
  const std::size_t n_valid = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(config.validation * static_cast<double>(n))));
  std::vector<std::size_t> train(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(n_valid));
  const std::vector<std::size_t> valid(perm.end() - static_cast<std::ptrdiff_t>(n_valid), perm.end());
  require(!train.empty(), "no training rows left after the validation split");

  std::vector<std::size_t> sizes{layout.width()};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(config.knots);

  std::vector<SpqrNet> nets;
  std::vector<double> best_valid_per_net;
  for (std::size_t e = 0; e < config.ensemble; ++e) {
    SpqrNet net(sizes, config.activation);
    Rng rng(config.seed, e, 12);
    net.initialize(rng);
    Adam adam(net);
    std::vector<double> best = net.flatten();
    double best_valid = mean_loss(net, x, b, valid);
    std::size_t best_epoch = 0;
    std::vector<DenseLayer> grad;
    Eigen::MatrixXd xb(width, static_cast<Eigen::Index>(config.batch));
    Eigen::MatrixXd bb(b.rows(), static_cast<Eigen::Index>(config.batch));
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      std::shuffle(train.begin(), train.end(), rng.engine());
      for (std::size_t s = 0; s < train.size(); s += config.batch) {
        const std::size_t e2 = std::min(train.size(), s + config.batch);
        const auto cols = static_cast<Eigen::Index>(e2 - s);
        if (xb.cols() != cols) {
          xb.resize(width, cols);
          bb.resize(b.rows(), cols);
        }
        for (std::size_t k = s; k < e2; ++k) {
          xb.col(static_cast<Eigen::Index>(k - s)) = x.col(static_cast<Eigen::Index>(train[k]));
          bb.col(static_cast<Eigen::Index>(k - s)) = b.col(static_cast<Eigen::Index>(train[k]));
        }
        const double loss = nll_gradient(net, xb, bb, &grad);
        if (!std::isfinite(loss)) {
          std::ostringstream msg;
          msg << "training loss became non-finite in epoch " << epoch;
          throw NumericError(msg.str());
        }
        adam.step(net, grad, config);
      }
      const double vl = mean_loss(net, x, b, valid);
      if (!std::isfinite(vl)) {
        std::ostringstream msg;
        msg << "validation loss became non-finite in epoch " << epoch;
        throw NumericError(msg.str());
      }
      if (e == 0) {
        rep.train_loss.push_back(mean_loss(net, x, b, train));
        rep.valid_loss.push_back(vl);
      }
      if (vl < best_valid) {
        best_valid = vl;
        best = net.flatten();
        best_epoch = epoch;
      }
    }
    net.unflatten(best);
    nets.push_back(std::move(net));
    if (e == 0) {
      rep.best_epoch = best_epoch;
      rep.best_valid = best_valid;
    }
  }

  SpqrModel model(basis, layout, std::move(nets));
  model.set_standardization(shift, scale);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (report) *report = std::move(rep);
  return model;
}

SpqrModel train_local(const SiteSet& sites, const NeighborGraph& graph, std::size_t pos,
                      const SpatialModel& model, const DesignDistribution& design,
                      const TrainConfig& config, TrainReport* report, unsigned threads) {
  const auto layout = local_layout(model, graph.neighbors.at(pos).size(), config.scale);
  const auto data = generate_local_training_data(sites, graph, pos, model, design, layout,
                                                 config.samples, config.seed, threads);
  return fit_spqr(data, layout, config, report);
}

SpqrModel train_global(const SiteSet& sites, const NeighborGraph& graph,
                       const SpatialModel& model, const DesignDistribution& design,
                       const TrainConfig& config, TrainReport* report, unsigned threads) {
  const auto layout = global_layout(model, graph.max_neighbors, config.scale);
  const auto data = generate_global_training_data(sites, graph, model, design, layout,
                                                  config.samples, config.seed, threads);
  return fit_spqr(data, layout, config, report);
}

std::vector<SpqrModel> train_all_local(const SiteSet& sites, const NeighborGraph& graph,
                                       const SpatialModel& model,
                                       const DesignDistribution& design,
                                       const TrainConfig& config, unsigned threads,
                                       std::vector<TrainReport>* reports) {
  std::vector<SpqrModel> models(graph.size());
  std::vector<TrainReport> reps(graph.size());
  if (graph.size() > 1) {
    parallel_for(graph.size() - 1, threads, [&](std::size_t k) {
      const std::size_t pos = k + 1;
      TrainConfig cfg = config;
      cfg.seed = stream_key(config.seed, pos, 3);
      models[pos] = train_local(sites, graph, pos, model, design, cfg, &reps[pos], 1);
    });
  }
  if (reports) *reports = std::move(reps);
  return models;
}

}  // namespace pmm
