#include "pmm/stvc.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pmm/error.hpp"

namespace pmm {

double matern_correlation(double h, double range, double smoothness) {
  require(range > 0.0 && smoothness > 0.0, "Matern range and smoothness must be positive");
  if (h <= 0.0) return 1.0;
  const double x = h / range;
  if (x > 700.0) return 0.0;
  if (std::abs(smoothness - 0.5) < 1e-14) return std::exp(-x);
  const double log_c = (1.0 - smoothness) * std::log(2.0) - boost::math::lgamma(smoothness) +
                       smoothness * std::log(x);
  const double k = boost::math::cyl_bessel_k(smoothness, x);
  if (k <= 0.0) return 0.0;
  return std::min(1.0, std::exp(log_c + std::log(k)));
}

FieldPrior::FieldPrior(std::span<const Point2> points, const FieldHyper& hyper, double smoothness)
    : hyper_(hyper), n_(points.size()) {
  require(hyper.tau2 >= 0.0 && hyper.nugget > 0.0 && hyper.range > 0.0,
          "field hyperparameters must be positive");
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double c = hyper.tau2 * matern_correlation(distance(points[i], points[j]), hyper.range, smoothness);
      cov(i, j) = c;
      cov(j, i) = c;
    }
    cov(i, i) += hyper.nugget;
  }
  llt_.compute(cov);
  if (llt_.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "field prior covariance is not positive definite (tau2=" << hyper.tau2
        << ", range=" << hyper.range << ", smoothness=" << smoothness << ")";
    throw NumericError(msg.str());
  }
  const Eigen::MatrixXd l = llt_.matrixL();
  log_det_ = 2.0 * l.diagonal().array().log().sum();
}

double FieldPrior::logdensity(std::span<const double> values) const {
  require(values.size() == n_, "field has the wrong number of sites");
  Eigen::VectorXd r(static_cast<Eigen::Index>(n_));
  for (std::size_t i = 0; i < n_; ++i) r(static_cast<Eigen::Index>(i)) = values[i] - hyper_.beta;
  const Eigen::VectorXd z = llt_.matrixL().solve(r);
  return -0.5 * (static_cast<double>(n_) * std::log(2.0 * std::numbers::pi) + log_det_ + z.squaredNorm());
}

double stvc_prior_logdensity(std::span<const double> values, const FieldHyper& hyper,
                             double smoothness, std::span<const Point2> points) {
  return FieldPrior(points, hyper, smoothness).logdensity(values);
}

}  // namespace pmm
