#include "pmm/spqr_net.hpp"

#include <algorithm>
#include <cmath>

#include "pmm/error.hpp"
#include "pmm/spline.hpp"

namespace pmm {
namespace {

void activate(Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::relu) {
    z = z.cwiseMax(0.0);
  } else {
    z = (1.0 + (-z.array()).exp()).inverse().matrix();
  }
}

// Column-wise softmax in place.
void softmax(Eigen::MatrixXd& z) {
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    auto col = z.col(c);
    const double top = col.maxCoeff();
    col = (col.array() - top).exp().matrix();
    col /= col.sum();
  }
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "sigmoid"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw InvalidArgument("unknown activation '" + name + "'");
}

SpqrNet::SpqrNet(std::vector<std::size_t> sizes, Activation activation)
    : sizes_(std::move(sizes)), activation_(activation) {
  require(sizes_.size() >= 2, "a net needs input and output sizes");
  for (auto s : sizes_) require(s >= 1, "layer sizes must be positive");
  require(sizes_.back() >= 2, "a mixture needs at least two components");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes_[l]);
    const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
    layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
}

void SpqrNet::initialize(Rng& rng) {
  for (auto& layer : layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = rng.uniform(-limit, limit);
    }
    layer.bias.setZero();
  }
}

Eigen::VectorXd SpqrNet::forward(std::span<const double> x) const {
  require(x.size() == input_size(), "feature vector has the wrong length");
  Eigen::MatrixXd in(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw InvalidArgument("non-finite feature");
    in(static_cast<Eigen::Index>(i), 0) = x[i];
  }
  return forward(in).col(0);
}

Eigen::MatrixXd SpqrNet::forward(const Eigen::MatrixXd& x) const {
  require(static_cast<std::size_t>(x.rows()) == input_size(), "feature matrix has the wrong row count");
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) activate(z, activation_);
    a = std::move(z);
  }
  softmax(a);
  return a;
}

std::size_t SpqrNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<double> SpqrNet::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

void SpqrNet::unflatten(std::span<const double> params) {
  require(params.size() == parameter_count(), "parameter vector has the wrong length");
  std::size_t k = 0;
  for (auto& l : layers_) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(k), l.weight.size(), l.weight.data());
    k += static_cast<std::size_t>(l.weight.size());
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(k), l.bias.size(), l.bias.data());
    k += static_cast<std::size_t>(l.bias.size());
  }
}

Eigen::MatrixXd basis_matrix(const SplineBasis& basis, std::span<const double> u,
                             std::size_t* clamped) {
  Eigen::MatrixXd b(static_cast<Eigen::Index>(basis.size()), static_cast<Eigen::Index>(u.size()));
  std::size_t count = 0;
  for (std::size_t c = 0; c < u.size(); ++c) {
    double v = u[c];
    if (!std::isfinite(v)) throw InvalidArgument("non-finite response");
    if (v < kResponseClamp || v > 1.0 - kResponseClamp) {
      v = std::clamp(v, kResponseClamp, 1.0 - kResponseClamp);
      ++count;
    }
    basis.evaluate(v, {b.col(static_cast<Eigen::Index>(c)).data(), basis.size()}, {});
  }
  if (clamped) *clamped += count;
  return b;
}

double nll_gradient(const SpqrNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& bvals,
                    std::vector<DenseLayer>* grad) {
  const auto& layers = net.layers();
  const std::size_t nl = layers.size();
  const double batch = static_cast<double>(x.cols());
  require(x.cols() > 0 && x.cols() == bvals.cols(), "batch shapes disagree");

  std::vector<Eigen::MatrixXd> acts;  // acts[l] = input to layer l
  acts.reserve(nl + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < nl; ++l) {
    Eigen::MatrixXd z = layers[l].weight * acts.back();
    z.colwise() += layers[l].bias;
    if (l + 1 < nl) activate(z, net.activation());
    acts.push_back(std::move(z));
  }
  Eigen::MatrixXd& pi = acts.back();
  softmax(pi);

  const Eigen::RowVectorXd f = (pi.array() * bvals.array()).colwise().sum();
  double loss = -f.array().log().sum() / batch;
  if (!grad) return loss;

  // d loss / d logits = pi_k (1 - B_k / f) / batch
  Eigen::MatrixXd delta = pi.array() * (1.0 - bvals.array().rowwise() / f.array());
  delta /= batch;

  grad->resize(nl);
  for (std::size_t l = nl; l-- > 0;) {
    (*grad)[l].weight = delta * acts[l].transpose();
    (*grad)[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = layers[l].weight.transpose() * delta;
    const Eigen::MatrixXd& a = acts[l];
    if (net.activation() == Activation::relu) {
      delta = (a.array() > 0.0).select(back.array(), 0.0).matrix();
    } else {
      delta = (back.array() * a.array() * (1.0 - a.array())).matrix();
    }
  }
  return loss;
}

NllResult nll_gradient(const SpqrNet& net, const SplineBasis& basis, const Eigen::MatrixXd& x,
                       std::span<const double> u, std::vector<DenseLayer>* grad) {
  require(static_cast<std::size_t>(x.cols()) == u.size(), "one response per feature column");
  require(basis.size() == net.output_size(), "basis size must match the net's output layer");
  NllResult r;
  const Eigen::MatrixXd b = basis_matrix(basis, u, &r.clamped);
  r.loss = nll_gradient(net, x, b, grad);
  return r;
}

}  // namespace pmm
