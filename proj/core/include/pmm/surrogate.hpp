#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pmm/geo.hpp"
#include "pmm/margins.hpp"
#include "pmm/procsim.hpp"
#include "pmm/spqr_model.hpp"

namespace pmm {

enum class CellStatus : std::uint8_t { observed, censored, missing };

// Responses on the data scale, sites x years (rows follow sites.ids).
struct Dataset {
  SiteSet sites;
  std::vector<int> years;
  Eigen::MatrixXd y;                // NaN at missing cells, T_c at censored cells
  std::vector<CellStatus> status;   // row-major, sites x years
  std::optional<double> censor_threshold;

  std::size_t n_sites() const { return static_cast<std::size_t>(y.rows()); }
  std::size_t n_years() const { return static_cast<std::size_t>(y.cols()); }
  CellStatus cell(std::size_t i, std::size_t t) const { return status[i * n_years() + t]; }
  std::size_t count(CellStatus s) const;

  // All cells observed.
  static Dataset complete(SiteSet sites, std::vector<int> years, Eigen::MatrixXd y);
  void set_missing(std::size_t i, std::size_t t);
  // Observed cells below the threshold become censored at it.
  void apply_censoring(double threshold);
  void validate() const;
};

struct MarginalState {
  std::vector<GevSiteParams> sites;
  GevParams at(std::size_t i, std::size_t t, const TimeCovariate& x) const {
    return stvc_gev(sites[i], t, x);
  }
};

struct UniformPanel {
  Eigen::MatrixXd u;             // NaN at missing cells
  Eigen::MatrixXd log_jacobian;  // 0 at censored and missing cells
  double total_log_jacobian = 0.0;
};

// Probability integral transform of every cell through its site/year GEV.
// Out-of-support observations give a -inf Jacobian (not an error).
UniformPanel to_uniform(const Dataset& data, const MarginalState& margins, const TimeCovariate& x);

// Conditional densities f_pos(u | theta, neighbour u's) for every ordered
// position. Position 0 is the uniform marginal.
class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;
  virtual const NeighborGraph& graph() const = 0;
  virtual const SpatialModel& spatial() const = 0;
  // nb holds one column per cell, rows follow graph().neighbors[pos].
  virtual void log_density(std::size_t pos, std::span<const double> theta,
                           const Eigen::MatrixXd& nb, std::span<const double> u,
                           std::span<double> out) const = 0;
  virtual void log_cdf(std::size_t pos, std::span<const double> theta, const Eigen::MatrixXd& nb,
                       std::span<const double> u, std::span<double> out) const = 0;
};

// Trained nets: one local model per position, or one global model.
class SpqrConditionals : public ConditionalModel {
 public:
  SpqrConditionals(NeighborGraph graph, SpatialModel spatial, std::vector<SpqrModel> local);
  SpqrConditionals(NeighborGraph graph, SpatialModel spatial, SpqrModel global, const SiteSet& sites);

  const NeighborGraph& graph() const override { return graph_; }
  const SpatialModel& spatial() const override { return spatial_; }
  void log_density(std::size_t pos, std::span<const double> theta, const Eigen::MatrixXd& nb,
                   std::span<const double> u, std::span<double> out) const override;
  void log_cdf(std::size_t pos, std::span<const double> theta, const Eigen::MatrixXd& nb,
               std::span<const double> u, std::span<double> out) const override;

  const SpqrModel& model(std::size_t pos) const;
  // Raw feature columns for the cells of one position.
  Eigen::MatrixXd features(std::size_t pos, std::span<const double> theta, const Eigen::MatrixXd& nb) const;

 private:
  NeighborGraph graph_;
  SpatialModel spatial_;
  std::vector<SpqrModel> local_;
  std::optional<SpqrModel> global_;
  std::vector<std::vector<Point2>> offsets_;
};

// log f of every cell's Vecchia factor (sites x years, rows by site index):
// log density for observed/missing cells, log CDF for censored ones.
Eigen::MatrixXd vecchia_factors(const Eigen::MatrixXd& u, std::span<const CellStatus> status,
                                std::span<const double> theta, const ConditionalModel& model,
                                unsigned threads = 1);
// Sum over years and positions; all cells treated as observed.
double vecchia_loglik(const Eigen::MatrixXd& u, std::span<const double> theta,
                      const ConditionalModel& model, unsigned threads = 1);

// Cached per-cell terms for a Metropolis sampler. Proposals stage changes,
// accept()/reject() commit or discard them. Only the cells that depend on a
// changed quantity are recomputed.
class LikelihoodCache {
 public:
  LikelihoodCache(const Dataset& data, const ConditionalModel& model, TimeCovariate x,
                  unsigned threads = 1);

  // latent: sites x years with values at missing cells (others ignored).
  void reset(std::span<const double> theta, const MarginalState& margins,
             const Eigen::MatrixXd& latent);

  double total() const { return total_; }
  double log_jacobian() const;
  double log_factors() const;

  double propose_theta(std::span<const double> theta);
  double propose_site(std::size_t site, const GevSiteParams& params);
  double propose_margins(const MarginalState& margins);
  double propose_latent(std::size_t site, std::size_t t, double u);
  void accept();
  void reject();

  // Full evaluation of the committed state from scratch.
  double recompute() const;
  // Jacobian + factor per cell; NaN at missing cells.
  Eigen::MatrixXd pointwise() const;

  const std::vector<double>& theta() const { return theta_; }
  const MarginalState& margins() const { return margins_; }
  const Eigen::MatrixXd& u() const { return u_; }
  const TimeCovariate& covariate() const { return x_; }
  // Number of cell factors recomputed by the last proposal.
  std::size_t last_recomputed() const { return last_cells_; }

 private:
  void fill_site_row(std::size_t site, const GevSiteParams& p, Eigen::MatrixXd& u,
                     Eigen::MatrixXd& jac) const;
  void fill_factor_rows(std::span<const std::size_t> positions, std::span<const double> theta,
                        const Eigen::MatrixXd& u, Eigen::MatrixXd& fac, std::size_t col_begin,
                        std::size_t col_end) const;
  double sum_totals(const Eigen::MatrixXd& jac, const Eigen::MatrixXd& fac) const;
  std::vector<std::size_t> affected_positions(std::span<const std::size_t> sites) const;

  const Dataset& data_;
  const ConditionalModel& model_;
  TimeCovariate x_;
  unsigned threads_;

  std::vector<double> theta_;
  MarginalState margins_;
  Eigen::MatrixXd u_, jac_, fac_;
  double total_ = 0.0;

  // staged proposal
  enum class Pending { none, theta, rows, cell };
  Pending pending_ = Pending::none;
  std::vector<double> p_theta_;
  MarginalState p_margins_;
  Eigen::MatrixXd p_u_, p_jac_, p_fac_;
  double p_total_ = 0.0;
  std::vector<std::size_t> touched_sites_;      // rows of u / jac
  std::vector<std::size_t> touched_positions_;  // rows of fac (by position)
  std::size_t touched_col_ = 0;
  std::size_t last_cells_ = 0;
};

}  // namespace pmm
