#include "pmm/exact_gaussian.hpp"

#include <algorithm>
#include <cmath>

#include "pmm/error.hpp"
#include "pmm/stats.hpp"

namespace pmm {
namespace {

double clamp_u(double u) { return std::clamp(u, kFeatureClamp, 1.0 - kFeatureClamp); }

}  // namespace

GaussianConditionals::GaussianConditionals(NeighborGraph graph, SpatialModel spatial,
                                           const SiteSet& sites)
    : graph_(std::move(graph)), spatial_(spatial) {
  require(spatial_.variant == ModelVariant::gp, "exact Gaussian conditionals need the GP variant");
  require(sites.size() == graph_.size(), "site set does not match the neighbour graph");
  for (std::size_t pos = 0; pos < graph_.size(); ++pos) points_.push_back(sites.scaled[graph_.order[pos]]);
}

void GaussianConditionals::conditional(std::size_t pos, std::span<const double> theta,
                                       Eigen::VectorXd& weights, double& sd) const {
  const SpatialParams p = spatial_.params(theta);
  const auto& nb = graph_.neighbors[pos];
  const auto m = static_cast<Eigen::Index>(nb.size());
  if (m == 0) {
    weights.resize(0);
    sd = 1.0;
    return;
  }
  Eigen::MatrixXd cnn(m, m);
  Eigen::VectorXd cin(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    cin(a) = gp_correlation(distance(points_[pos], points_[nb[static_cast<std::size_t>(a)]]), p.rho_w, p.alpha_w, p.r);
    for (Eigen::Index b = 0; b <= a; ++b) {
      const double c = a == b ? 1.0
                              : gp_correlation(distance(points_[nb[static_cast<std::size_t>(a)]], points_[nb[static_cast<std::size_t>(b)]]),
                                               p.rho_w, p.alpha_w, p.r);
      cnn(a, b) = c;
      cnn(b, a) = c;
    }
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(cnn);
  if (llt.info() != Eigen::Success) throw NumericError("neighbour correlation matrix is not positive definite");
  weights = llt.solve(cin);
  const double var = 1.0 - cin.dot(weights);
  if (!(var > 0.0)) throw NumericError("conditional variance is not positive");
  sd = std::sqrt(var);
}

void GaussianConditionals::log_density(std::size_t pos, std::span<const double> theta,
                                       const Eigen::MatrixXd& nb, std::span<const double> u,
                                       std::span<double> out) const {
  if (pos == 0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  Eigen::VectorXd b;
  double sd = 1.0;
  conditional(pos, theta, b, sd);
  for (std::size_t c = 0; c < u.size(); ++c) {
    double mean = 0.0;
    for (Eigen::Index r = 0; r < nb.rows(); ++r) mean += b(r) * normal_quantile(clamp_u(nb(r, static_cast<Eigen::Index>(c))));
    const double z = normal_quantile(clamp_u(u[c]));
    out[c] = normal_logpdf((z - mean) / sd) - std::log(sd) - normal_logpdf(z);
  }
}

void GaussianConditionals::log_cdf(std::size_t pos, std::span<const double> theta,
                                   const Eigen::MatrixXd& nb, std::span<const double> u,
                                   std::span<double> out) const {
  if (pos == 0) {
    for (std::size_t c = 0; c < u.size(); ++c) out[c] = std::log(clamp_u(u[c]));
    return;
  }
  Eigen::VectorXd b;
  double sd = 1.0;
  conditional(pos, theta, b, sd);
  for (std::size_t c = 0; c < u.size(); ++c) {
    double mean = 0.0;
    for (Eigen::Index r = 0; r < nb.rows(); ++r) mean += b(r) * normal_quantile(clamp_u(nb(r, static_cast<Eigen::Index>(c))));
    const double z = normal_quantile(clamp_u(u[c]));
    out[c] = std::log(std::max(normal_cdf((z - mean) / sd), 1e-300));
  }
}

}  // namespace pmm
