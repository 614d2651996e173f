#include "pmm/ale.hpp"

#include <algorithm>
#include <cmath>

#include "pmm/error.hpp"
#include "pmm/stats.hpp"

namespace pmm {
namespace {

// Quantiles at every tau for the given feature columns.
Eigen::MatrixXd quantiles(const SpqrModel& model, const Eigen::MatrixXd& x,
                          std::span<const double> taus) {
  const Eigen::MatrixXd pi = model.weights(x);
  Eigen::MatrixXd q(x.cols(), static_cast<Eigen::Index>(taus.size()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const Eigen::VectorXd p = pi.col(c);
    for (std::size_t t = 0; t < taus.size(); ++t) {
      q(c, static_cast<Eigen::Index>(t)) = mixture_quantile(model.basis(), p, taus[t]);
    }
  }
  return q;
}

}  // namespace

AleResult ale_and_vi(const SpqrModel& model, const Eigen::MatrixXd& reference,
                     std::size_t feature, std::span<const double> taus, std::size_t bins) {
  require(reference.cols() > 0, "ALE needs a nonempty reference sample");
  require(feature < static_cast<std::size_t>(reference.rows()), "feature index out of range");
  require(bins >= 1 && !taus.empty(), "ALE needs at least one bin and one quantile level");
  const auto j = static_cast<Eigen::Index>(feature);
  const auto n = reference.cols();
  const auto nt = static_cast<Eigen::Index>(taus.size());

  AleResult res;
  res.taus.assign(taus.begin(), taus.end());
  std::vector<double> xj(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < n; ++c) xj[static_cast<std::size_t>(c)] = reference(j, c);
  const double sd = sample_sd(xj);
  const auto [lo_it, hi_it] = std::minmax_element(xj.begin(), xj.end());
  if (!(*hi_it > *lo_it)) {
    res.constant_feature = true;
    res.edges = {*lo_it};
    res.curve = Eigen::MatrixXd::Zero(1, nt);
    res.importance.assign(taus.size(), 0.0);
    return res;
  }

  // quantile-spaced edges, duplicates removed
  for (std::size_t b = 0; b <= bins; ++b) {
    res.edges.push_back(sample_quantile(xj, static_cast<double>(b) / static_cast<double>(bins)));
  }
  res.edges.erase(std::unique(res.edges.begin(), res.edges.end()), res.edges.end());
  const std::size_t nb = res.edges.size() - 1;

  // central-difference derivative of Q in x_j at every reference point
  const double h = 1e-3 * sd;
  Eigen::MatrixXd up = reference, down = reference;
  up.row(j).array() += h;
  down.row(j).array() -= h;
  const Eigen::MatrixXd deriv = (quantiles(model, up, taus) - quantiles(model, down, taus)) / (2.0 * h);

  std::vector<std::size_t> bin_of(static_cast<std::size_t>(n));
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nb), nt);
  std::vector<double> count(nb, 0.0);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double v = xj[static_cast<std::size_t>(c)];
    std::size_t b = static_cast<std::size_t>(std::upper_bound(res.edges.begin() + 1, res.edges.end() - 1, v) - (res.edges.begin() + 1));
    bin_of[static_cast<std::size_t>(c)] = b;
    sum.row(static_cast<Eigen::Index>(b)) += deriv.row(c);
    count[b] += 1.0;
  }

  // accumulate mean slope x bin width
  Eigen::MatrixXd curve = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nb + 1), nt);
  for (std::size_t b = 0; b < nb; ++b) {
    const double width = res.edges[b + 1] - res.edges[b];
    Eigen::RowVectorXd slope = Eigen::RowVectorXd::Zero(nt);
    if (count[b] > 0.0) slope = sum.row(static_cast<Eigen::Index>(b)) / count[b];
    curve.row(static_cast<Eigen::Index>(b + 1)) = curve.row(static_cast<Eigen::Index>(b)) + slope * width;
  }

  // ALE at each sample point by linear interpolation within its bin
  Eigen::MatrixXd at_sample(n, nt);
  for (Eigen::Index c = 0; c < n; ++c) {
    const std::size_t b = bin_of[static_cast<std::size_t>(c)];
    const double width = res.edges[b + 1] - res.edges[b];
    const double w = width > 0.0 ? (xj[static_cast<std::size_t>(c)] - res.edges[b]) / width : 0.0;
    at_sample.row(c) = (1.0 - w) * curve.row(static_cast<Eigen::Index>(b)) + w * curve.row(static_cast<Eigen::Index>(b + 1));
  }
  const Eigen::RowVectorXd centre = at_sample.colwise().mean();
  curve.rowwise() -= centre;
  at_sample.rowwise() -= centre;

  res.curve = curve;
  for (Eigen::Index t = 0; t < nt; ++t) {
    std::vector<double> col(at_sample.col(t).data(), at_sample.col(t).data() + n);
    res.importance.push_back(sample_sd(col));
  }
  return res;
}

}  // namespace pmm
