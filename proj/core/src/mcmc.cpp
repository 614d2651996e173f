#include "pmm/mcmc.hpp"

#include <cmath>

#include "pmm/error.hpp"
#include "pmm/stats.hpp"

namespace pmm {

double ParamTransform::to_free(double x) const {
  switch (kind) {
    case Kind::identity: return x;
    case Kind::log:
      require(x > 0.0, "positive parameter must be > 0");
      return std::log(x);
    case Kind::logit:
      require(x > lo && x < hi, "bounded parameter outside its interval");
      return logit((x - lo) / (hi - lo));
  }
  return x;
}

double ParamTransform::to_natural(double z) const {
  switch (kind) {
    case Kind::identity: return z;
    case Kind::log: return std::exp(z);
    case Kind::logit: return lo + (hi - lo) * expit(z);
  }
  return z;
}

double ParamTransform::log_jacobian(double z) const {
  switch (kind) {
    case Kind::identity: return 0.0;
    case Kind::log: return z;
    case Kind::logit:
      // log p(1-p) with p = expit(z)
      return std::log(hi - lo) - std::abs(z) - 2.0 * std::log1p(std::exp(-std::abs(z)));
  }
  return 0.0;
}

bool metropolis_block(std::vector<double>& values, double& log_post, ProposalBlock& block,
                      std::span<const ParamTransform> transforms,
                      const std::function<double(std::span<const double>)>& log_target, Rng& rng) {
  const std::size_t d = values.size();
  require(transforms.size() == d && block.scales.size() == d, "block dimensions disagree");
  std::vector<double> z(d), z_new(d), proposal(d);
  double jac_old = 0.0, jac_new = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    require(block.scales[k] > 0.0, "proposal scale must be positive");
    z[k] = transforms[k].to_free(values[k]);
    z_new[k] = z[k] + block.scales[k] * rng.normal();
    proposal[k] = transforms[k].to_natural(z_new[k]);
    jac_old += transforms[k].log_jacobian(z[k]);
    jac_new += transforms[k].log_jacobian(z_new[k]);
  }
  ++block.proposed;
  ++block.window_proposed;

  bool ok = true;
  for (std::size_t k = 0; k < d; ++k) {
    const auto& t = transforms[k];
    if (!std::isfinite(proposal[k]) || (t.kind == ParamTransform::Kind::logit && !(proposal[k] > t.lo && proposal[k] < t.hi)) ||
        (t.kind == ParamTransform::Kind::log && !(proposal[k] > 0.0))) {
      ok = false;
    }
  }
  const double target = ok ? log_target(proposal) : -INFINITY;
  const double log_ratio = (target + jac_new) - (log_post + jac_old);
  const bool accept = std::isfinite(target) && (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio);
  if (accept) {
    values = std::move(proposal);
    log_post = target;
    ++block.accepted;
    ++block.window_accepted;
  }
  return accept;
}

bool adapt_scales(ProposalBlock& block, const AdaptConfig& config, std::size_t iteration) {
  if (!config.enabled || config.window == 0 || iteration == 0 || iteration % config.window != 0) return false;
  if (block.window_proposed == 0) return false;
  const double rate = static_cast<double>(block.window_accepted) / static_cast<double>(block.window_proposed);
  const double step = config.c0 / std::ceil(static_cast<double>(iteration) / static_cast<double>(config.window));
  const double factor = std::exp(step * (rate - config.target));
  for (double& s : block.scales) s *= factor;
  block.window_proposed = 0;
  block.window_accepted = 0;
  return true;
}

}  // namespace pmm
