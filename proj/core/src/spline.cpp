#include "pmm/spline.hpp"

#include <algorithm>
#include <cmath>

#include "pmm/error.hpp"

namespace pmm {

void bspline_values(std::span<const double> knots, int order, double x, std::span<double> out) {
  const std::size_t nk = knots.size();
  const std::size_t nb = nk - static_cast<std::size_t>(order);
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(nb), 0.0);

  // span s with knots[s] <= x < knots[s+1]
  std::size_t s = 0;
  if (x >= knots[nk - 1]) {
    s = nk - 1;
    while (s > 0 && knots[s - 1] >= knots[nk - 1]) --s;
    --s;
  } else {
    s = static_cast<std::size_t>(std::upper_bound(knots.begin(), knots.end(), x) - knots.begin()) - 1;
  }

  // de Boor triangle; local[j] holds N_{s-k+1+j, k}
  std::vector<double> local(static_cast<std::size_t>(order), 0.0);
  local[0] = 1.0;
  for (int k = 1; k < order; ++k) {
    double saved = 0.0;
    for (int r = 0; r < k; ++r) {
      const std::size_t left = s + 1 + static_cast<std::size_t>(r) - static_cast<std::size_t>(k);
      const std::size_t right = s + 1 + static_cast<std::size_t>(r);
      const double denom = knots[right] - knots[left];
      const double term = denom > 0.0 ? local[static_cast<std::size_t>(r)] / denom : 0.0;
      local[static_cast<std::size_t>(r)] = saved + (knots[right] - x) * term;
      saved = (x - knots[left]) * term;
    }
    local[static_cast<std::size_t>(k)] = saved;
  }
  for (int j = 0; j < order; ++j) {
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(s) - order + 1 + j;
    if (idx >= 0 && static_cast<std::size_t>(idx) < nb) out[static_cast<std::size_t>(idx)] = local[static_cast<std::size_t>(j)];
  }
}

SplineBasis::SplineBasis(std::size_t size, int degree) : size_(size), degree_(degree) {
  require(degree >= 0, "spline degree must be nonnegative");
  const std::size_t order = static_cast<std::size_t>(degree) + 1;
  require(size >= order, "number of spline basis functions must be at least degree + 1");
  const std::size_t interior = size - order;
  knots_.assign(order, 0.0);
  for (std::size_t j = 1; j <= interior; ++j) {
    knots_.push_back(static_cast<double>(j) / static_cast<double>(interior + 1));
  }
  knots_.insert(knots_.end(), order, 1.0);
  augmented_.reserve(knots_.size() + 2);
  augmented_.push_back(0.0);
  augmented_.insert(augmented_.end(), knots_.begin(), knots_.end());
  augmented_.push_back(1.0);
}

void SplineBasis::evaluate(double u, std::span<double> m, std::span<double> i) const {
  if (!(u >= 0.0 && u <= 1.0)) throw InvalidArgument("spline argument outside [0,1]");
  const int order = degree_ + 1;
  if (!m.empty()) {
    bspline_values(knots_, order, u, m);
    for (std::size_t k = 0; k < size_; ++k) {
      const double width = knots_[k + static_cast<std::size_t>(order)] - knots_[k];
      m[k] = width > 0.0 ? m[k] * order / width : 0.0;
    }
  }
  if (!i.empty()) {
    // I_k = sum over m > k of the order+1 B-splines on the augmented knots
    std::vector<double> b(size_ + 1);
    bspline_values(augmented_, order + 1, u, b);
    double tail = 0.0;
    for (std::size_t k = size_; k-- > 0;) {
      tail += b[k + 1];
      i[k] = std::min(tail, 1.0);
    }
  }
}

std::vector<double> SplineBasis::m_values(double u) const {
  std::vector<double> m(size_);
  evaluate(u, m, {});
  return m;
}

std::vector<double> SplineBasis::i_values(double u) const {
  std::vector<double> i(size_);
  evaluate(u, {}, i);
  return i;
}

}  // namespace pmm
