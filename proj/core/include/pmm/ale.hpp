#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "pmm/spqr_model.hpp"

namespace pmm {

struct AleResult {
  std::vector<double> edges;        // bin edges on the raw feature scale
  std::vector<double> taus;
  Eigen::MatrixXd curve;            // edges x taus, centred accumulated effects
  std::vector<double> importance;   // VI per tau
  bool constant_feature = false;
};

// Accumulated local effect of raw feature j on the conditional quantile
// Q(tau | x), with quantile-spaced bins over the reference sample (columns of
// `reference`). VI is the standard deviation of the curve over the sample.
AleResult ale_and_vi(const SpqrModel& model, const Eigen::MatrixXd& reference,
                     std::size_t feature, std::span<const double> taus, std::size_t bins = 20);

}  // namespace pmm
