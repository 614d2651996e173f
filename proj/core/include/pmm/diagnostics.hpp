#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pmm/geo.hpp"
#include "pmm/procsim.hpp"
#include "pmm/stats.hpp"
#include "pmm/surrogate.hpp"

namespace pmm {

// Per-row ranks mapped to r / (T + 1); NaN cells stay NaN and are not ranked.
Eigen::MatrixXd rank_standardize(const Eigen::MatrixXd& panel);

// count edges+1 equal-width bin edges on [0, max_h].
std::vector<double> equal_bins(double max_h, std::size_t count);
// Default: 20 bins up to half the largest pairwise distance.
std::vector<double> default_bins(std::span<const Point2> points, std::size_t count = 20);

struct ChiEstimate {
  std::vector<double> levels;
  std::vector<double> edges;            // bin b covers [edges[b], edges[b+1])
  Eigen::MatrixXd value;                // levels x bins, NaN for empty bins
  Eigen::MatrixXd se;
  Eigen::MatrixXi pairs;                // ordered pairs contributing per cell
  std::vector<std::string> warnings;
};

// chi_u(h) from a sites x replicates panel. Ordered pairs are grouped by
// distance bin; each pair contributes #{both > u} / #{conditioning site > u}
// and the bin reports the pair average. Rank standardisation is applied first
// unless `ranked` is false.
ChiEstimate empirical_chi(const Eigen::MatrixXd& panel, std::span<const Point2> points,
                          std::span<const double> levels, std::span<const double> edges,
                          bool ranked = true);

// Joint and conditioning exceedance counts pooled over all ordered pairs of a
// uniform-margin panel (no ranking); chi = joint / conditioning.
struct ExceedanceCounts {
  double joint = 0.0;
  double conditioning = 0.0;
  double chi() const { return conditioning > 0.0 ? joint / conditioning : NAN; }
};
ExceedanceCounts pooled_exceedance_counts(const Eigen::MatrixXd& panel, double level);

// Limit of chi_u as u -> 1 when R is shared by all sites.
double chi_shared_r_limit(double delta);

struct QqResult {
  std::vector<double> pit;          // sorted
  std::vector<double> theoretical;  // i / (n + 1)
  std::vector<double> exp_observed; // -log(1 - pit)
  std::vector<double> exp_theoretical;
  std::vector<double> lower;        // pointwise 95% envelope, uniform scale
  std::vector<double> upper;
  KsResult ks;
};
QqResult pit_and_qq(std::span<const double> pit);
// PIT of every cell at ordered positions >= 2 under the conditional model.
std::vector<double> pit_values(const Eigen::MatrixXd& u, std::span<const double> theta,
                               const ConditionalModel& model);

struct Variogram {
  std::vector<double> edges;
  std::vector<double> value;  // NaN for empty bins
  std::vector<std::size_t> pairs;
  std::vector<std::string> warnings;
};
// Matheron estimator per column (year), averaged over years.
Variogram variogram(const Eigen::MatrixXd& panel, std::span<const Point2> points,
                    std::span<const double> edges);

struct ScoreReport {
  double lppd = 0.0;
  double p_waic = 0.0;
  double waic = 0.0;
  double waic_se = 0.0;
  double elpd_loo = 0.0;
  double p_loo = 0.0;
  double looic = 0.0;
  double loo_se = 0.0;
  std::size_t samples = 0;
  std::size_t cells = 0;
};
// Pointwise log-likelihood matrix: posterior samples x cells.
ScoreReport waic_and_loo(const Eigen::MatrixXd& loglik, double truncation_quantile = 0.999);

// Pr[all U_i > u_i] for one parameter draw at the given sites.
double joint_exceedance_probability(std::span<const Point2> points, ModelVariant variant,
                                    const SpatialParams& params,
                                    std::span<const double> u_thresholds, std::size_t sims,
                                    std::uint64_t seed, unsigned threads = 1);

struct ExceedanceDraw {
  std::vector<double> theta;
  std::vector<GevParams> margins_a;  // cluster sites, year a
  std::vector<GevParams> margins_b;  // cluster sites, year b
};

struct ExceedanceReport {
  std::vector<double> prob_a;
  std::vector<double> prob_b;
  double mean_a = 0.0, sd_a = 0.0;
  double mean_b = 0.0, sd_b = 0.0;
  double prob_b_greater = 0.0;  // share of draws with p_b > p_a
};

// Per posterior draw, thresholds q_i on the data scale are mapped through the
// draw's margins and the joint exceedance is simulated from the fitted process.
ExceedanceReport joint_exceedance(std::span<const ExceedanceDraw> draws, const SpatialModel& model,
                                  std::span<const Point2> cluster, std::span<const double> q,
                                  std::size_t sims, std::uint64_t seed, unsigned threads = 1);

// Long-format CSV rows: estimator,level,bin_lo,bin_hi,value,se,count
struct TidyRow {
  std::string estimator;
  double level = NAN;
  double bin_lo = NAN;
  double bin_hi = NAN;
  double value = NAN;
  double se = NAN;
  double count = NAN;
};
void write_tidy_csv(std::ostream& out, std::span<const TidyRow> rows);
std::vector<TidyRow> tidy(const ChiEstimate& chi);
std::vector<TidyRow> tidy(const Variogram& v);
std::vector<TidyRow> tidy(const QqResult& qq);
std::vector<TidyRow> tidy(const ScoreReport& s, const std::string& model);

}  // namespace pmm
