#include "pmm/procsim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "pmm/error.hpp"
#include "pmm/margins.hpp"
#include "pmm/parallel.hpp"
#include "pmm/stats.hpp"

namespace pmm {

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::pmm: return "pmm";
    case ModelVariant::hw: return "hw";
    case ModelVariant::msp: return "msp";
    case ModelVariant::gp: return "gp";
    case ModelVariant::independent: return "independent";
  }
  return "unknown";
}

ModelVariant parse_variant(const std::string& name) {
  for (auto v : {ModelVariant::pmm, ModelVariant::hw, ModelVariant::msp, ModelVariant::gp,
                 ModelVariant::independent}) {
    if (to_string(v) == name) return v;
  }
  throw InvalidArgument("unknown model variant '" + name + "'");
}

std::string to_string(ThetaComponent c) {
  switch (c) {
    case ThetaComponent::delta: return "delta";
    case ThetaComponent::rho: return "rho";
    case ThetaComponent::r: return "r";
  }
  return "unknown";
}

void SpatialParams::validate() const {
  require(delta >= 0.0 && delta <= 1.0, "delta must lie in [0,1]");
  require(r >= 0.0 && r <= 1.0, "r must lie in [0,1]");
  require(rho_w > 0.0 && rho_r > 0.0, "ranges must be positive");
  require(alpha_w > 0.0 && alpha_w <= 2.0 && alpha_r > 0.0 && alpha_r <= 2.0,
          "smoothness parameters must lie in (0,2]");
}

double tied_range_ratio() {
  const double z = normal_quantile(0.975);
  return std::log(20.0) / (4.0 * z * z);
}

SpatialParams tied_params(double delta, double rho, double alpha, double r) {
  SpatialParams p;
  p.delta = delta;
  p.rho_w = rho;
  p.rho_r = tied_range_ratio() * rho;
  p.alpha_w = alpha;
  p.alpha_r = alpha;
  p.r = r;
  return p;
}

std::vector<ThetaComponent> SpatialModel::components() const {
  std::vector<ThetaComponent> c;
  if (variant == ModelVariant::independent) return c;
  if (variant == ModelVariant::pmm || variant == ModelVariant::hw) c.push_back(ThetaComponent::delta);
  c.push_back(ThetaComponent::rho);
  if (free_r) c.push_back(ThetaComponent::r);
  return c;
}

SpatialParams SpatialModel::params(std::span<const double> theta) const {
  const auto comps = components();
  require(theta.size() == comps.size(), "theta length does not match the spatial model");
  double delta = variant == ModelVariant::msp ? 1.0 : 0.0;
  double rho = 0.1;
  double r = fixed_r;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    switch (comps[k]) {
      case ThetaComponent::delta: delta = theta[k]; break;
      case ThetaComponent::rho: rho = theta[k]; break;
      case ThetaComponent::r: r = theta[k]; break;
    }
  }
  return tied_params(delta, rho, alpha, r);
}

double gp_correlation(double h, double rho_w, double alpha_w, double r) {
  if (h <= 0.0) return 1.0;
  return r * std::exp(-std::pow(h / rho_w, alpha_w));
}

double br_semivariogram(double h, double rho_r, double alpha_r) {
  return std::pow(h / rho_r, alpha_r);
}

double br_extremal_coefficient(double h, double rho_r, double alpha_r) {
  return 2.0 * normal_cdf(std::sqrt(br_semivariogram(h, rho_r, alpha_r) / 2.0));
}

Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& cov) {
  if (cov.rows() == 0) return cov;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  for (double jitter = 1e-10; jitter <= 1e-6 * 1.0001; jitter *= 10.0) {
    Eigen::MatrixXd shifted = cov;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericError("covariance factorization failed after maximum diagonal jitter");
}

GaussianFieldSampler::GaussianFieldSampler(std::span<const Point2> points, double rho_w,
                                           double alpha_w, double r) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double c = i == j ? 1.0 : gp_correlation(distance(points[i], points[j]), rho_w, alpha_w, r);
      cov(i, j) = c;
      cov(j, i) = c;
    }
  }
  try {
    chol_ = robust_cholesky(cov);
  } catch (const NumericError&) {
    Eigen::Index bi = 0, bj = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) {
        if (cov(i, j) > best) {
          best = cov(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    std::ostringstream msg;
    msg << "GP covariance not positive definite; most collinear site pair (" << bj << ", " << bi
        << ") with correlation " << best;
    throw NumericError(msg.str());
  }
}

void GaussianFieldSampler::draw(Rng& rng, std::span<double> out) const {
  const auto n = chol_.rows();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
  Eigen::VectorXd x = chol_.triangularView<Eigen::Lower>() * z;
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = x(i);
}

BrownResnickSampler::BrownResnickSampler(std::span<const Point2> points, double rho_r,
                                         double alpha_r, Method method, std::size_t truncation)
    : points_(points.begin(), points.end()),
      rho_r_(rho_r),
      alpha_r_(alpha_r),
      method_(method),
      truncation_(truncation) {
  require(!points_.empty(), "Brown-Resnick sampler needs at least one site");
  require(rho_r > 0.0 && alpha_r > 0.0 && alpha_r <= 2.0, "invalid Brown-Resnick variogram");
  const auto n = static_cast<Eigen::Index>(points_.size());
  drift_.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      drift_(i, j) = br_semivariogram(distance(points_[i], points_[j]), rho_r, alpha_r);
    }
  }
  const Eigen::Index anchors = method == Method::exact ? n : 1;
  chol_.reserve(static_cast<std::size_t>(anchors));
  for (Eigen::Index j = 0; j < anchors; ++j) {
    Eigen::MatrixXd cov(n - 1, n - 1);
    Eigen::Index a = 0;
    for (Eigen::Index x = 0; x < n; ++x) {
      if (x == j) continue;
      Eigen::Index b = 0;
      for (Eigen::Index y = 0; y < n; ++y) {
        if (y == j) continue;
        cov(a, b) = drift_(x, j) + drift_(y, j) - drift_(x, y);
        ++b;
      }
      ++a;
    }
    chol_.push_back(robust_cholesky(cov));
  }
}

void BrownResnickSampler::spectral(std::size_t j, Rng& rng, std::span<double> out) const {
  const auto& l = chol_[j];
  const auto m = l.rows();
  Eigen::VectorXd z(m);
  for (Eigen::Index i = 0; i < m; ++i) z(i) = rng.normal();
  Eigen::VectorXd g = l.triangularView<Eigen::Lower>() * z;
  Eigen::Index a = 0;
  for (std::size_t x = 0; x < points_.size(); ++x) {
    if (x == j) {
      out[x] = 1.0;
      continue;
    }
    out[x] = std::exp(g(a++) - drift_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(j)));
  }
}

void BrownResnickSampler::draw(Rng& rng, std::span<double> out) const {
  const std::size_t n = points_.size();
  std::vector<double> y(n);
  if (method_ == Method::truncated) {
    std::fill(out.begin(), out.end(), 0.0);
    double gamma = 0.0;
    for (std::size_t k = 0; k < truncation_; ++k) {
      gamma += rng.exponential();
      const double zeta = 1.0 / gamma;
      spectral(0, rng, y);
      for (std::size_t x = 0; x < n; ++x) out[x] = std::max(out[x], zeta * y[x]);
    }
    return;
  }

  // Extremal functions: site j only needs Poisson points that can exceed the
  // current maximum there and are not dominated at earlier sites.
  double gamma = rng.exponential();
  spectral(0, rng, y);
  for (std::size_t x = 0; x < n; ++x) out[x] = y[x] / gamma;
  for (std::size_t j = 1; j < n; ++j) {
    gamma = rng.exponential();
    while (1.0 / gamma > out[j]) {
      const double zeta = 1.0 / gamma;
      spectral(j, rng, y);
      bool dominated = false;
      for (std::size_t i = 0; i < j; ++i) {
        if (zeta * y[i] >= out[i]) {
          dominated = true;
          break;
        }
      }
      if (!dominated) {
        for (std::size_t x = 0; x < n; ++x) out[x] = std::max(out[x], zeta * y[x]);
      }
      gamma += rng.exponential();
    }
  }
}

void apply_msp_nugget(std::span<double> frechet, double r, Rng& rng) {
  require(r >= 0.0 && r <= 1.0, "nugget fraction r must lie in [0,1]");
  if (r == 1.0) return;
  for (double& value : frechet) {
    const double noise = 1.0 / rng.exponential();
    value = std::max(r * value, (1.0 - r) * noise);
  }
}

ProcessSimulator::ProcessSimulator(std::span<const Point2> points, const SpatialParams& params,
                                   ModelVariant variant, BrownResnickSampler::Method method)
    : n_(points.size()), params_(params), variant_(variant) {
  params.validate();
  switch (variant) {
    case ModelVariant::pmm: delta_ = params.delta; break;
    case ModelVariant::hw: delta_ = params.delta; break;
    case ModelVariant::msp: delta_ = 1.0; break;
    case ModelVariant::gp: delta_ = 0.0; break;
    case ModelVariant::independent: delta_ = 0.0; break;
  }
  const bool need_gp = variant != ModelVariant::independent && delta_ < 1.0;
  const bool need_br = (variant == ModelVariant::pmm && delta_ > 0.0) || variant == ModelVariant::msp;
  if (need_gp) gp_.emplace_back(points, params.rho_w, params.alpha_w, params.r);
  if (need_br) br_.emplace_back(points, params.rho_r, params.alpha_r, method);
}

FieldRealization ProcessSimulator::draw(Rng& rng) const {
  FieldRealization f;
  f.w.assign(n_, 0.0);
  f.r.assign(n_, 0.0);
  f.v.resize(n_);
  f.u.resize(n_);

  if (variant_ == ModelVariant::independent) {
    for (std::size_t i = 0; i < n_; ++i) {
      f.w[i] = rng.exponential();
      f.v[i] = f.w[i];
      f.u[i] = -std::expm1(-f.w[i]);
    }
    return f;
  }
  if (!gp_.empty()) {
    gp_.front().draw(rng, f.w);
    for (double& w : f.w) w = normal_to_exp(w);
  }
  if (!br_.empty()) {
    br_.front().draw(rng, f.r);
    apply_msp_nugget(f.r, params_.r, rng);
    for (double& r : f.r) r = frechet_to_exp(r);
  } else if (variant_ == ModelVariant::hw) {
    std::fill(f.r.begin(), f.r.end(), rng.exponential());
  }
  for (std::size_t i = 0; i < n_; ++i) {
    f.v[i] = delta_ * f.r[i] + (1.0 - delta_) * f.w[i];
    f.u[i] = hypoexp_cdf(f.v[i], delta_);
  }
  return f;
}

void ProcessSimulator::draw_u(Rng& rng, std::span<double> out) const {
  const FieldRealization f = draw(rng);
  std::copy(f.u.begin(), f.u.end(), out.begin());
}

std::vector<double> simulate_gp(const SiteSet& sites, const SpatialParams& params,
                                std::uint64_t seed, std::uint64_t replicate) {
  params.validate();
  Rng rng(seed, replicate);
  GaussianFieldSampler sampler(sites.scaled, params.rho_w, params.alpha_w, params.r);
  std::vector<double> w(sites.size());
  sampler.draw(rng, w);
  for (double& x : w) x = normal_to_exp(x);
  return w;
}

std::vector<double> simulate_brown_resnick(const SiteSet& sites, double rho_r, double alpha_r,
                                           std::uint64_t seed, std::uint64_t replicate) {
  Rng rng(seed, replicate);
  BrownResnickSampler sampler(sites.scaled, rho_r, alpha_r);
  std::vector<double> out(sites.size());
  sampler.draw(rng, out);
  return out;
}

FieldRealization simulate_pmm(const SiteSet& sites, const SpatialParams& params,
                              std::uint64_t seed, std::uint64_t replicate) {
  return simulate_variant(ModelVariant::pmm, sites, params, seed, replicate);
}

FieldRealization simulate_variant(ModelVariant variant, const SiteSet& sites,
                                  const SpatialParams& params, std::uint64_t seed,
                                  std::uint64_t replicate) {
  Rng rng(seed, replicate);
  return ProcessSimulator(sites.scaled, params, variant).draw(rng);
}

std::vector<FieldRealization> simulate_batch(ModelVariant variant, const SiteSet& sites,
                                             const SpatialParams& params, std::size_t replicates,
                                             std::uint64_t seed, unsigned threads) {
  const ProcessSimulator sim(sites.scaled, params, variant);
  std::vector<FieldRealization> out(replicates);
  parallel_for(replicates, threads, [&](std::size_t k) {
    Rng rng(seed, k);
    out[k] = sim.draw(rng);
  });
  return out;
}

void write_batch_csv(std::ostream& out, const SiteSet& sites,
                     std::span<const FieldRealization> batch) {
  out << "replicate,site_id,U,V,W,R\n";
  out.precision(17);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& f = batch[k];
    for (std::size_t i = 0; i < sites.size(); ++i) {
      out << k + 1 << ',' << sites.ids[i] << ',' << f.u[i] << ',' << f.v[i] << ',' << f.w[i]
          << ',' << f.r[i] << '\n';
    }
  }
}

}  // namespace pmm
