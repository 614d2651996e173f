#pragma once

#include "pmm/surrogate.hpp"

namespace pmm {

// Exact Gaussian-copula conditionals of the GP variant on the uniform scale:
// z = qnorm(u), z_i | z_N ~ N(b'z_N, 1 - c'b), densities carry the
// 1/phi(z) change of variables.
class GaussianConditionals : public ConditionalModel {
 public:
  GaussianConditionals(NeighborGraph graph, SpatialModel spatial, const SiteSet& sites);

  const NeighborGraph& graph() const override { return graph_; }
  const SpatialModel& spatial() const override { return spatial_; }
  void log_density(std::size_t pos, std::span<const double> theta, const Eigen::MatrixXd& nb,
                   std::span<const double> u, std::span<double> out) const override;
  void log_cdf(std::size_t pos, std::span<const double> theta, const Eigen::MatrixXd& nb,
               std::span<const double> u, std::span<double> out) const override;

  // Kriging weights and conditional standard deviation at one position.
  void conditional(std::size_t pos, std::span<const double> theta, Eigen::VectorXd& weights,
                   double& sd) const;

 private:
  NeighborGraph graph_;
  SpatialModel spatial_;
  std::vector<Point2> points_;  // by ordered position
};

}  // namespace pmm
