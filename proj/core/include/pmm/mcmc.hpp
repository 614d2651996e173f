#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pmm/rng.hpp"

namespace pmm {

// Map between a parameter's natural scale and the real line.
struct ParamTransform {
  enum class Kind { identity, log, logit };
  Kind kind = Kind::identity;
  double lo = 0.0;  // logit bounds
  double hi = 1.0;

  static ParamTransform identity() { return {}; }
  static ParamTransform positive() { return {Kind::log, 0.0, 0.0}; }
  static ParamTransform interval(double lo, double hi) { return {Kind::logit, lo, hi}; }

  double to_free(double x) const;
  double to_natural(double z) const;
  // log |dx/dz| at free value z
  double log_jacobian(double z) const;
};

// A jointly proposed group of parameters with diagonal random-walk scales.
struct ProposalBlock {
  std::string name;
  std::vector<double> scales;
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  std::size_t window_proposed = 0;
  std::size_t window_accepted = 0;

  double acceptance_rate() const {
    return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  }
};

struct AdaptConfig {
  bool enabled = true;
  double target = 0.4;
  double c0 = 1.0;
  std::size_t window = 50;
};

// Gaussian random walk on the free scale. log_target receives natural-scale
// values; its result is combined with the transform Jacobians. On acceptance
// `values` and `log_post` are updated. Non-finite targets are rejected.
bool metropolis_block(std::vector<double>& values, double& log_post, ProposalBlock& block,
                      std::span<const ParamTransform> transforms,
                      const std::function<double(std::span<const double>)>& log_target, Rng& rng);

// Robbins-Monro step on the block's log scale at the end of every window:
// log s += c0 / ceil(t / window) * (window acceptance - target).
// `iteration` is 1-based. Returns true if the scales changed.
bool adapt_scales(ProposalBlock& block, const AdaptConfig& config, std::size_t iteration);

}  // namespace pmm
