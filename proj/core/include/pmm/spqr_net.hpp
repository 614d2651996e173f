#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pmm/rng.hpp"

namespace pmm {

enum class Activation { relu, sigmoid };
std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Feed-forward net with softmax output: features -> mixture weights pi_k.
// Zero hidden layers gives the multinomial-logit (linear) model.
class SpqrNet {
 public:
  SpqrNet() = default;
  // sizes = {inputs, hidden..., outputs}
  SpqrNet(std::vector<std::size_t> sizes, Activation activation = Activation::relu);

  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  Activation activation() const { return activation_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  // Glorot uniform weights, zero biases.
  void initialize(Rng& rng);

  Eigen::VectorXd forward(std::span<const double> x) const;
  // Columns of x are samples; returns K x B weights.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> params);

 private:
  std::vector<std::size_t> sizes_;
  Activation activation_ = Activation::relu;
  std::vector<DenseLayer> layers_;
};

// Responses are clamped into [kResponseClamp, 1 - kResponseClamp].
inline constexpr double kResponseClamp = 1e-6;

struct NllResult {
  double loss = 0.0;
  std::size_t clamped = 0;
};

class SplineBasis;

// Mean negative log-likelihood of responses u (one per column of x) under the
// M-spline mixture, and its gradient if `grad` is non-null (same shapes as the
// net's layers).
NllResult nll_gradient(const SpqrNet& net, const SplineBasis& basis, const Eigen::MatrixXd& x,
                       std::span<const double> u, std::vector<DenseLayer>* grad);
// Same with the basis values precomputed (K x B, columns match x).
double nll_gradient(const SpqrNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& bvals,
                    std::vector<DenseLayer>* grad);

// K x B matrix of M-spline values at the clamped responses.
Eigen::MatrixXd basis_matrix(const SplineBasis& basis, std::span<const double> u,
                             std::size_t* clamped = nullptr);

}  // namespace pmm
