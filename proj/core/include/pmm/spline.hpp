#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pmm {

// M-spline basis on [0,1] with equally spaced interior knots, plus the
// I-splines (running integrals). Each M_k integrates to one.
class SplineBasis {
 public:
  explicit SplineBasis(std::size_t size = 15, int degree = 3);

  std::size_t size() const { return size_; }
  int degree() const { return degree_; }
  const std::vector<double>& knots() const { return knots_; }

  // Either output span may be empty to skip that half.
  void evaluate(double u, std::span<double> m, std::span<double> i) const;
  std::vector<double> m_values(double u) const;
  std::vector<double> i_values(double u) const;

 private:
  std::size_t size_;
  int degree_;
  std::vector<double> knots_;      // order zeros, interior, order ones
  std::vector<double> augmented_;  // one more boundary knot at each end
};

// All B-splines of the given order on `knots` at x; out has knots.size() - order
// entries. x = right endpoint is assigned to the last nonempty span.
void bspline_values(std::span<const double> knots, int order, double x, std::span<double> out);

}  // namespace pmm
