#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pmm/geo.hpp"
#include "pmm/procsim.hpp"
#include "pmm/spline.hpp"
#include "pmm/spqr_net.hpp"

namespace pmm {

enum class NeighborScale {
  uniform,  // raw u in (0,1)
  normal,   // normal scores qnorm(u)
};

// Where each feature comes from. Order: transformed theta, neighbour values
// (nearest first), then (dx, dy) offsets per neighbour slot if `offsets`.
struct FeatureLayout {
  std::vector<ThetaComponent> theta;
  std::size_t neighbors = 0;
  bool offsets = false;
  NeighborScale scale = NeighborScale::uniform;

  std::size_t width() const { return theta.size() + neighbors * (offsets ? 3 : 1); }
  std::vector<std::string> names() const;
  bool operator==(const FeatureLayout&) const = default;
};

// Offset used for empty neighbour slots of the global net.
inline constexpr double kPadOffset = 2.0;
// Neighbour values are clamped away from 0 and 1 before use.
inline constexpr double kFeatureClamp = 1e-10;

// logit delta, log rho, logit r
double theta_feature(ThetaComponent c, double value);
double neighbor_feature(double u, NeighborScale scale);

// Fill one raw feature vector. nb_u.size() may be below layout.neighbors only
// when offsets are on; missing slots get pad_u and kPadOffset offsets.
void assemble_features(const FeatureLayout& layout, std::span<const double> theta,
                       std::span<const double> nb_u, std::span<const Point2> offsets,
                       double pad_u, std::span<double> out);

// A conditional density model: spline basis + softmax net(s) + feature
// standardisation. With several nets the mixture weights are averaged.
class SpqrModel {
 public:
  SpqrModel() = default;
  SpqrModel(SplineBasis basis, FeatureLayout layout, std::vector<SpqrNet> nets);

  const SplineBasis& basis() const { return basis_; }
  const FeatureLayout& layout() const { return layout_; }
  const std::vector<SpqrNet>& nets() const { return nets_; }
  std::vector<SpqrNet>& nets() { return nets_; }
  const Eigen::VectorXd& shift() const { return shift_; }
  const Eigen::VectorXd& scale() const { return scale_; }
  void set_standardization(Eigen::VectorXd shift, Eigen::VectorXd scale);

  // Mixture weights for raw feature columns (width x B) -> K x B.
  Eigen::MatrixXd weights(const Eigen::MatrixXd& features) const;
  Eigen::VectorXd weights(std::span<const double> features) const;

  double density(std::span<const double> features, double u) const;
  double cdf(std::span<const double> features, double u) const;
  double quantile(std::span<const double> features, double tau) const;

  // Batched: one response per feature column.
  void log_density(const Eigen::MatrixXd& features, std::span<const double> u,
                   std::span<double> out) const;
  void log_cdf(const Eigen::MatrixXd& features, std::span<const double> u,
               std::span<double> out) const;

 private:
  Eigen::MatrixXd standardize(const Eigen::MatrixXd& features) const;

  SplineBasis basis_;
  FeatureLayout layout_;
  std::vector<SpqrNet> nets_;
  Eigen::VectorXd shift_;
  Eigen::VectorXd scale_;
};

// CDF / quantile of a fixed mixture weight vector.
double mixture_density(const SplineBasis& basis, const Eigen::VectorXd& pi, double u);
double mixture_cdf(const SplineBasis& basis, const Eigen::VectorXd& pi, double u);
double mixture_quantile(const SplineBasis& basis, const Eigen::VectorXd& pi, double tau);

}  // namespace pmm
