#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pmm/mcmc.hpp"
#include "pmm/stvc.hpp"
#include "pmm/surrogate.hpp"

namespace pmm {

enum class MarginMode {
  stvc,    // per-site (mu0, mu1, log sigma, xi) with GP priors
  shared,  // one (mu, log sigma, xi) for every site, no trend
  fixed,   // known margins, not updated
};
std::string to_string(MarginMode m);
MarginMode parse_margin_mode(const std::string& name);

struct PriorSpec {
  double rho_max = 0.5;          // rho ~ U(0, rho_max); delta, r ~ U(0, 1)
  double beta_sd = 10.0;         // field means
  double ig_shape = 0.1;         // tau2, nugget ~ IG(shape, rate)
  double ig_rate = 0.1;
  double log_range_mean = -1.0;  // log field range ~ N(mean, sd^2)
  double log_range_sd = 1.0;
  double log_smooth_mean = -2.0; // log Matern smoothness ~ N(mean, sd^2)
  double log_smooth_sd = 1.0;
  double location_sd = 10.0;     // shared mode: mu, log sigma ~ N(0, sd^2)
  double xi_sd = 0.25;           // shared mode: xi ~ N(0, sd^2)
};

struct SamplerConfig {
  std::size_t iterations = 11000;
  std::size_t burn_in = 1000;
  std::size_t thin = 10;
  std::size_t chains = 2;
  std::vector<double> delta_starts{0.1, 0.9};
  std::uint64_t seed = 1;
  MarginMode margins = MarginMode::stvc;
  std::optional<MarginalState> fixed_margins;
  AdaptConfig adapt;
  bool use_likelihood = true;
  // Compare the cached log posterior with a full recomputation after every
  // audit_every-th iteration (0 = never).
  std::size_t audit_every = 0;
  bool store_pointwise = false;
  unsigned threads = 1;  // chains in parallel

  void validate() const;
};

struct ChainOutput {
  std::vector<std::string> names;
  Eigen::MatrixXd draws;               // stored iterations x parameters
  std::vector<double> log_posterior;   // per stored iteration
  Eigen::MatrixXd pointwise;           // stored iterations x non-missing cells
  std::map<std::string, std::pair<std::size_t, std::size_t>> acceptance;  // accepted, proposed
  std::uint64_t seed = 0;
  double delta_start = 0.0;
  std::size_t theta_size = 0;
  MarginMode margin_mode = MarginMode::stvc;
  std::size_t n_sites = 0;
  std::size_t audits = 0;
  double max_audit_error = 0.0;

  std::size_t column(const std::string& name) const;
  // theta and margins of one stored draw; `fallback` supplies margins in fixed mode.
  std::vector<double> theta_at(std::size_t k) const;
  MarginalState margins_at(std::size_t k, const MarginalState* fallback = nullptr) const;
};

std::vector<std::string> parameter_names(const SpatialModel& model, MarginMode mode,
                                         const SiteSet& sites);

// Initial margins: per-site (stvc) or pooled (shared) GEV maximum likelihood.
MarginalState initial_margins(const Dataset& data, MarginMode mode);

ChainOutput run_chain(const SamplerConfig& config, std::size_t chain, const Dataset& data,
                      const ConditionalModel& model, const TimeCovariate& x,
                      const PriorSpec& prior);
std::vector<ChainOutput> run_chains(const SamplerConfig& config, const Dataset& data,
                                    const ConditionalModel& model, const TimeCovariate& x,
                                    const PriorSpec& prior);

}  // namespace pmm
