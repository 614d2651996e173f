#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pmm/sampler.hpp"

namespace pmm {

// Split-chain potential scale reduction (each chain halved).
double split_rhat(std::span<const std::vector<double>> chains);
// Multi-chain effective sample size from variogram autocorrelations with
// Geyer's initial monotone positive-pair truncation.
double effective_sample_size(std::span<const std::vector<double>> chains);

struct ParamSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q500 = 0.0;
  double q975 = 0.0;
  double rhat = 1.0;
  double ess = 0.0;
};

std::vector<ParamSummary> summarize(std::span<const ChainOutput> chains);

void write_chain_csv(std::ostream& out, const ChainOutput& chain);
// Reads the draws back (names, draws, log posterior). Metadata comes from the manifest.
ChainOutput read_chain_csv(std::istream& in);
void write_summary_csv(std::ostream& out, std::span<const ParamSummary> rows);

}  // namespace pmm
