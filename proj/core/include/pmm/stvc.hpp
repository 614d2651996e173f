#pragma once

#include <Eigen/Dense>
#include <array>
#include <span>
#include <string>
#include <vector>

#include "pmm/geo.hpp"

namespace pmm {

// Matern correlation 2^(1-k)/Gamma(k) (h/range)^k K_k(h/range); 1 at h = 0.
double matern_correlation(double h, double range, double smoothness);

// GP prior of one GEV coefficient field: mean beta, partial sill tau2,
// Matern range, nugget variance.
struct FieldHyper {
  double beta = 0.0;
  double tau2 = 1.0;
  double range = 0.3;
  double nugget = 0.1;
};

inline constexpr std::array<const char*, 4> kStvcFieldNames{"mu0", "mu1", "log_sigma", "xi"};

struct StvcHyper {
  std::array<FieldHyper, 4> fields;
  double smoothness = 0.5;  // shared Matern smoothness
};

// Multivariate normal log density of field values at the sites.
double stvc_prior_logdensity(std::span<const double> values, const FieldHyper& hyper,
                             double smoothness, std::span<const Point2> points);

// Factorised prior covariance, reusable while the hyperparameters are fixed.
class FieldPrior {
 public:
  FieldPrior() = default;
  FieldPrior(std::span<const Point2> points, const FieldHyper& hyper, double smoothness);
  double logdensity(std::span<const double> values) const;
  const FieldHyper& hyper() const { return hyper_; }

 private:
  FieldHyper hyper_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_ = 0.0;
  std::size_t n_ = 0;
};

}  // namespace pmm
