#include "pmm/spqr_model.hpp"

#include <algorithm>
#include <cmath>

#include "pmm/error.hpp"
#include "pmm/stats.hpp"

namespace pmm {
namespace {

constexpr double kThetaClamp = 1e-6;

double clamp_unit(double v, double eps) { return std::clamp(v, eps, 1.0 - eps); }

}  // namespace

std::vector<std::string> FeatureLayout::names() const {
  std::vector<std::string> out;
  for (auto c : theta) {
    switch (c) {
      case ThetaComponent::delta: out.push_back("logit_delta"); break;
      case ThetaComponent::rho: out.push_back("log_rho"); break;
      case ThetaComponent::r: out.push_back("logit_r"); break;
    }
  }
  for (std::size_t j = 0; j < neighbors; ++j) out.push_back("u_nb" + std::to_string(j + 1));
  if (offsets) {
    for (std::size_t j = 0; j < neighbors; ++j) {
      out.push_back("dx_nb" + std::to_string(j + 1));
      out.push_back("dy_nb" + std::to_string(j + 1));
    }
  }
  return out;
}

double theta_feature(ThetaComponent c, double value) {
  switch (c) {
    case ThetaComponent::delta:
    case ThetaComponent::r: return logit(clamp_unit(value, kThetaClamp));
    case ThetaComponent::rho:
      require(value > 0.0, "range must be positive");
      return std::log(value);
  }
  return value;
}

double neighbor_feature(double u, NeighborScale scale) {
  const double v = clamp_unit(u, kFeatureClamp);
  return scale == NeighborScale::normal ? normal_quantile(v) : v;
}

void assemble_features(const FeatureLayout& layout, std::span<const double> theta,
                       std::span<const double> nb_u, std::span<const Point2> offsets,
                       double pad_u, std::span<double> out) {
  require(theta.size() == layout.theta.size(), "theta length does not match the feature layout");
  require(out.size() == layout.width(), "feature buffer has the wrong width");
  require(nb_u.size() <= layout.neighbors, "more neighbours than feature slots");
  require(layout.offsets || nb_u.size() == layout.neighbors,
          "local nets need exactly one value per neighbour slot");
  std::size_t k = 0;
  for (std::size_t c = 0; c < theta.size(); ++c) out[k++] = theta_feature(layout.theta[c], theta[c]);
  for (std::size_t j = 0; j < layout.neighbors; ++j) {
    out[k++] = neighbor_feature(j < nb_u.size() ? nb_u[j] : pad_u, layout.scale);
  }
  if (layout.offsets) {
    for (std::size_t j = 0; j < layout.neighbors; ++j) {
      const bool real = j < nb_u.size();
      out[k++] = real ? offsets[j].x : kPadOffset;
      out[k++] = real ? offsets[j].y : kPadOffset;
    }
  }
}

SpqrModel::SpqrModel(SplineBasis basis, FeatureLayout layout, std::vector<SpqrNet> nets)
    : basis_(std::move(basis)), layout_(std::move(layout)), nets_(std::move(nets)) {
  require(!nets_.empty(), "a model needs at least one net");
  for (const auto& net : nets_) {
    require(net.input_size() == layout_.width(), "net input width does not match the feature layout");
    require(net.output_size() == basis_.size(), "net output size does not match the spline basis");
  }
  const auto w = static_cast<Eigen::Index>(layout_.width());
  shift_ = Eigen::VectorXd::Zero(w);
  scale_ = Eigen::VectorXd::Ones(w);
}

void SpqrModel::set_standardization(Eigen::VectorXd shift, Eigen::VectorXd scale) {
  require(static_cast<std::size_t>(shift.size()) == layout_.width() &&
              static_cast<std::size_t>(scale.size()) == layout_.width(),
          "standardisation vectors have the wrong width");
  require((scale.array() > 0.0).all(), "standardisation scales must be positive");
  shift_ = std::move(shift);
  scale_ = std::move(scale);
}

Eigen::MatrixXd SpqrModel::standardize(const Eigen::MatrixXd& features) const {
  require(static_cast<std::size_t>(features.rows()) == layout_.width(), "feature matrix has the wrong width");
  if (!features.allFinite()) throw InvalidArgument("non-finite feature");
  return ((features.colwise() - shift_).array().colwise() / scale_.array()).matrix();
}

Eigen::MatrixXd SpqrModel::weights(const Eigen::MatrixXd& features) const {
  const Eigen::MatrixXd z = standardize(features);
  Eigen::MatrixXd pi = nets_.front().forward(z);
  for (std::size_t e = 1; e < nets_.size(); ++e) pi += nets_[e].forward(z);
  if (nets_.size() > 1) pi /= static_cast<double>(nets_.size());
  return pi;
}

Eigen::VectorXd SpqrModel::weights(std::span<const double> features) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(features.size()), 1);
  for (std::size_t i = 0; i < features.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = features[i];
  return weights(x).col(0);
}

double mixture_density(const SplineBasis& basis, const Eigen::VectorXd& pi, double u) {
  const auto m = basis.m_values(u);
  double f = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) f += pi(static_cast<Eigen::Index>(k)) * m[k];
  return f;
}

double mixture_cdf(const SplineBasis& basis, const Eigen::VectorXd& pi, double u) {
  const auto i = basis.i_values(u);
  double c = 0.0;
  for (std::size_t k = 0; k < i.size(); ++k) c += pi(static_cast<Eigen::Index>(k)) * i[k];
  return std::clamp(c, 0.0, 1.0);
}

double mixture_quantile(const SplineBasis& basis, const Eigen::VectorXd& pi, double tau) {
  require(tau > 0.0 && tau < 1.0, "quantile level must lie in (0,1)");
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (mixture_cdf(basis, pi, mid) < tau) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double SpqrModel::density(std::span<const double> features, double u) const {
  return mixture_density(basis_, weights(features), u);
}

double SpqrModel::cdf(std::span<const double> features, double u) const {
  return mixture_cdf(basis_, weights(features), u);
}

double SpqrModel::quantile(std::span<const double> features, double tau) const {
  return mixture_quantile(basis_, weights(features), tau);
}

void SpqrModel::log_density(const Eigen::MatrixXd& features, std::span<const double> u,
                            std::span<double> out) const {
  require(static_cast<std::size_t>(features.cols()) == u.size() && out.size() == u.size(),
          "one response per feature column");
  const Eigen::MatrixXd pi = weights(features);
  std::vector<double> m(basis_.size());
  for (std::size_t c = 0; c < u.size(); ++c) {
    basis_.evaluate(clamp_unit(u[c], kFeatureClamp), m, {});
    double f = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) f += pi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) * m[k];
    out[c] = std::log(f);
  }
}

void SpqrModel::log_cdf(const Eigen::MatrixXd& features, std::span<const double> u,
                        std::span<double> out) const {
  require(static_cast<std::size_t>(features.cols()) == u.size() && out.size() == u.size(),
          "one response per feature column");
  const Eigen::MatrixXd pi = weights(features);
  std::vector<double> iv(basis_.size());
  for (std::size_t c = 0; c < u.size(); ++c) {
    basis_.evaluate(clamp_unit(u[c], kFeatureClamp), {}, iv);
    double f = 0.0;
    for (std::size_t k = 0; k < iv.size(); ++k) f += pi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) * iv[k];
    out[c] = std::log(std::clamp(f, 1e-300, 1.0));
  }
}

}  // namespace pmm
