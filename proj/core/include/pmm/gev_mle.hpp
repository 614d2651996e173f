#pragma once

#include <span>

#include "pmm/margins.hpp"

namespace pmm {

struct GevFit {
  GevParams params;
  double loglik = 0.0;
  bool converged = false;
};

// Maximum likelihood GEV fit (Nelder-Mead on mu, log sigma, xi) started from
// moment estimates. Non-finite values are ignored. Used to seed samplers.
GevFit fit_gev_mle(std::span<const double> y);

}  // namespace pmm
