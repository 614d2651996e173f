#include "pmm/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pmm/error.hpp"
#include "pmm/parallel.hpp"
#include "pmm/stats.hpp"

namespace pmm {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double matrix_sum(const Eigen::MatrixXd& m) {
  return pairwise_sum({m.data(), static_cast<std::size_t>(m.size())});
}

// Neighbour columns for one position over years [c0, c1).
Eigen::MatrixXd neighbor_block(const NeighborGraph& g, std::size_t pos, const Eigen::MatrixXd& u,
                               std::size_t c0, std::size_t c1) {
  const auto& nb = g.neighbors[pos];
  Eigen::MatrixXd out(static_cast<Eigen::Index>(nb.size()), static_cast<Eigen::Index>(c1 - c0));
  for (std::size_t r = 0; r < nb.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) =
        u.row(static_cast<Eigen::Index>(g.order[nb[r]])).segment(static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(c1 - c0));
  }
  return out;
}

// Factor row of one position over years [c0, c1), written into fac.
void factor_row(const ConditionalModel& model, std::size_t pos, std::span<const double> theta,
                const Eigen::MatrixXd& u, std::span<const CellStatus> status, std::size_t years,
                std::size_t c0, std::size_t c1, Eigen::MatrixXd& fac) {
  const auto& g = model.graph();
  const std::size_t site = g.order[pos];
  const auto row = static_cast<Eigen::Index>(site);
  std::vector<std::size_t> dens, cens;
  for (std::size_t t = c0; t < c1; ++t) {
    (status[site * years + t] == CellStatus::censored ? cens : dens).push_back(t);
  }
  const Eigen::MatrixXd nb_all = neighbor_block(g, pos, u, c0, c1);
  auto run = [&](const std::vector<std::size_t>& cols, bool cdf) {
    if (cols.empty()) return;
    Eigen::MatrixXd nb(nb_all.rows(), static_cast<Eigen::Index>(cols.size()));
    std::vector<double> uu(cols.size()), out(cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
      nb.col(static_cast<Eigen::Index>(k)) = nb_all.col(static_cast<Eigen::Index>(cols[k] - c0));
      uu[k] = u(row, static_cast<Eigen::Index>(cols[k]));
    }
    if (cdf) {
      model.log_cdf(pos, theta, nb, uu, out);
    } else {
      model.log_density(pos, theta, nb, uu, out);
    }
    for (std::size_t k = 0; k < cols.size(); ++k) fac(row, static_cast<Eigen::Index>(cols[k])) = out[k];
  };
  run(dens, false);
  run(cens, true);
}

}  // namespace

std::size_t Dataset::count(CellStatus s) const {
  return static_cast<std::size_t>(std::count(status.begin(), status.end(), s));
}

Dataset Dataset::complete(SiteSet sites, std::vector<int> years, Eigen::MatrixXd y) {
  Dataset d;
  d.sites = std::move(sites);
  d.years = std::move(years);
  d.y = std::move(y);
  d.status.assign(d.n_sites() * d.n_years(), CellStatus::observed);
  d.validate();
  return d;
}

void Dataset::set_missing(std::size_t i, std::size_t t) {
  require(i < n_sites() && t < n_years(), "cell index out of range");
  status[i * n_years() + t] = CellStatus::missing;
  y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = kNaN;
}

void Dataset::apply_censoring(double threshold) {
  require(std::isfinite(threshold), "censoring threshold must be finite");
  censor_threshold = threshold;
  for (std::size_t i = 0; i < n_sites(); ++i) {
    for (std::size_t t = 0; t < n_years(); ++t) {
      auto& s = status[i * n_years() + t];
      auto& v = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
      if (s == CellStatus::observed && v < threshold) {
        s = CellStatus::censored;
        v = threshold;
      }
    }
  }
}

void Dataset::validate() const {
  require(sites.size() == n_sites(), "dataset rows must match the site count");
  require(years.size() == n_years(), "dataset columns must match the year count");
  require(status.size() == n_sites() * n_years(), "status mask has the wrong size");
  for (std::size_t i = 0; i < n_sites(); ++i) {
    for (std::size_t t = 0; t < n_years(); ++t) {
      const double v = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
      switch (cell(i, t)) {
        case CellStatus::observed:
          require(std::isfinite(v), "observed cells must be finite");
          break;
        case CellStatus::censored:
          require(censor_threshold && v == *censor_threshold, "censored cells must carry the threshold");
          break;
        case CellStatus::missing: break;
      }
    }
  }
}

UniformPanel to_uniform(const Dataset& data, const MarginalState& margins, const TimeCovariate& x) {
  require(margins.sites.size() == data.n_sites(), "one GEV parameter set per site");
  require(x.size() == data.n_years(), "one covariate value per year");
  const auto n = static_cast<Eigen::Index>(data.n_sites());
  const auto T = static_cast<Eigen::Index>(data.n_years());
  UniformPanel p;
  p.u = Eigen::MatrixXd::Constant(n, T, kNaN);
  p.log_jacobian = Eigen::MatrixXd::Zero(n, T);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto s = data.cell(static_cast<std::size_t>(i), static_cast<std::size_t>(t));
      if (s == CellStatus::missing) continue;
      const GevParams g = margins.at(static_cast<std::size_t>(i), static_cast<std::size_t>(t), x);
      p.u(i, t) = gev_cdf(data.y(i, t), g);
      if (s == CellStatus::observed) p.log_jacobian(i, t) = gev_logpdf(data.y(i, t), g);
    }
  }
  p.total_log_jacobian = matrix_sum(p.log_jacobian);
  return p;
}

// ---- SpqrConditionals ----

SpqrConditionals::SpqrConditionals(NeighborGraph graph, SpatialModel spatial,
                                   std::vector<SpqrModel> local)
    : graph_(std::move(graph)), spatial_(spatial), local_(std::move(local)) {
  require(local_.size() == graph_.size(), "need one model slot per ordered position");
  const auto comps = spatial_.components();
  for (std::size_t pos = 1; pos < graph_.size(); ++pos) {
    const auto& m = local_[pos];
    require(!m.nets().empty(), "missing net for ordered position " + std::to_string(pos + 1));
    const auto& l = m.layout();
    require(!l.offsets && l.neighbors == graph_.neighbors[pos].size() && l.theta == comps,
            "feature layout of the net at ordered position " + std::to_string(pos + 1) +
                " does not match the neighbour graph");
  }
}

SpqrConditionals::SpqrConditionals(NeighborGraph graph, SpatialModel spatial, SpqrModel global,
                                   const SiteSet& sites)
    : graph_(std::move(graph)), spatial_(spatial), global_(std::move(global)) {
  const auto& l = global_->layout();
  require(l.offsets && l.neighbors == graph_.max_neighbors && l.theta == spatial_.components(),
          "global net layout does not match the neighbour graph");
  require(sites.size() == graph_.size(), "site set does not match the neighbour graph");
  offsets_.resize(graph_.size());
  for (std::size_t pos = 0; pos < graph_.size(); ++pos) {
    const Point2 target = sites.scaled[graph_.order[pos]];
    for (auto nb : graph_.neighbors[pos]) {
      const Point2 p = sites.scaled[graph_.order[nb]];
      offsets_[pos].push_back({p.x - target.x, p.y - target.y});
    }
  }
}

const SpqrModel& SpqrConditionals::model(std::size_t pos) const {
  return global_ ? *global_ : local_.at(pos);
}

Eigen::MatrixXd SpqrConditionals::features(std::size_t pos, std::span<const double> theta,
                                           const Eigen::MatrixXd& nb) const {
  const auto& m = model(pos);
  const auto& layout = m.layout();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(layout.width()), nb.cols());
  std::vector<double> col(layout.width()), nbu(static_cast<std::size_t>(nb.rows()));
  const std::span<const Point2> off = global_ ? std::span<const Point2>(offsets_[pos]) : std::span<const Point2>{};
  for (Eigen::Index c = 0; c < nb.cols(); ++c) {
    for (Eigen::Index r = 0; r < nb.rows(); ++r) nbu[static_cast<std::size_t>(r)] = nb(r, c);
    assemble_features(layout, theta, nbu, off, 0.5, col);
    for (std::size_t r = 0; r < col.size(); ++r) x(static_cast<Eigen::Index>(r), c) = col[r];
  }
  return x;
}

void SpqrConditionals::log_density(std::size_t pos, std::span<const double> theta,
                                   const Eigen::MatrixXd& nb, std::span<const double> u,
                                   std::span<double> out) const {
  if (pos == 0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  model(pos).log_density(features(pos, theta, nb), u, out);
}

void SpqrConditionals::log_cdf(std::size_t pos, std::span<const double> theta,
                               const Eigen::MatrixXd& nb, std::span<const double> u,
                               std::span<double> out) const {
  if (pos == 0) {
    for (std::size_t k = 0; k < u.size(); ++k) out[k] = std::log(std::clamp(u[k], kFeatureClamp, 1.0));
    return;
  }
  model(pos).log_cdf(features(pos, theta, nb), u, out);
}

// ---- Vecchia sums ----

Eigen::MatrixXd vecchia_factors(const Eigen::MatrixXd& u, std::span<const CellStatus> status,
                                std::span<const double> theta, const ConditionalModel& model,
                                unsigned threads) {
  const auto& g = model.graph();
  require(static_cast<std::size_t>(u.rows()) == g.size(), "U rows must match the neighbour graph");
  const auto years = static_cast<std::size_t>(u.cols());
  require(status.size() == g.size() * years, "status mask has the wrong size");
  Eigen::MatrixXd fac = Eigen::MatrixXd::Zero(u.rows(), u.cols());
  parallel_for(g.size(), threads, [&](std::size_t pos) {
    factor_row(model, pos, theta, u, status, years, 0, years, fac);
  });
  return fac;
}

double vecchia_loglik(const Eigen::MatrixXd& u, std::span<const double> theta,
                      const ConditionalModel& model, unsigned threads) {
  const std::vector<CellStatus> status(static_cast<std::size_t>(u.size()), CellStatus::observed);
  return matrix_sum(vecchia_factors(u, status, theta, model, threads));
}

// ---- LikelihoodCache ----

LikelihoodCache::LikelihoodCache(const Dataset& data, const ConditionalModel& model,
                                 TimeCovariate x, unsigned threads)
    : data_(data), model_(model), x_(std::move(x)), threads_(threads) {
  require(model.graph().size() == data.n_sites(), "neighbour graph does not match the dataset");
  require(x_.size() == data.n_years(), "one covariate value per year");
}

void LikelihoodCache::fill_site_row(std::size_t site, const GevSiteParams& p, Eigen::MatrixXd& u,
                                    Eigen::MatrixXd& jac) const {
  const auto i = static_cast<Eigen::Index>(site);
  for (std::size_t t = 0; t < data_.n_years(); ++t) {
    const auto c = static_cast<Eigen::Index>(t);
    const auto s = data_.cell(site, t);
    if (s == CellStatus::missing) {
      jac(i, c) = 0.0;
      continue;
    }
    const GevParams g = stvc_gev(p, t, x_);
    const double y = data_.y(i, c);
    u(i, c) = gev_cdf(y, g);
    jac(i, c) = s == CellStatus::observed ? gev_logpdf(y, g) : 0.0;
  }
}

void LikelihoodCache::fill_factor_rows(std::span<const std::size_t> positions,
                                       std::span<const double> theta, const Eigen::MatrixXd& u,
                                       Eigen::MatrixXd& fac, std::size_t col_begin,
                                       std::size_t col_end) const {
  parallel_for(positions.size(), threads_, [&](std::size_t k) {
    factor_row(model_, positions[k], theta, u, data_.status, data_.n_years(), col_begin, col_end, fac);
  });
}

double LikelihoodCache::sum_totals(const Eigen::MatrixXd& jac, const Eigen::MatrixXd& fac) const {
  return matrix_sum(jac) + matrix_sum(fac);
}

std::vector<std::size_t> LikelihoodCache::affected_positions(std::span<const std::size_t> sites) const {
  const auto& g = model_.graph();
  std::vector<std::size_t> out;
  for (auto s : sites) {
    const std::size_t pos = g.position[s];
    out.push_back(pos);
    out.insert(out.end(), g.dependents[pos].begin(), g.dependents[pos].end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void LikelihoodCache::reset(std::span<const double> theta, const MarginalState& margins,
                            const Eigen::MatrixXd& latent) {
  require(margins.sites.size() == data_.n_sites(), "one GEV parameter set per site");
  require(latent.rows() == data_.y.rows() && latent.cols() == data_.y.cols(), "latent matrix has the wrong shape");
  theta_.assign(theta.begin(), theta.end());
  margins_ = margins;
  const auto n = data_.y.rows(), T = data_.y.cols();
  u_ = Eigen::MatrixXd::Constant(n, T, kNaN);
  jac_ = Eigen::MatrixXd::Zero(n, T);
  fac_ = Eigen::MatrixXd::Zero(n, T);
  for (std::size_t i = 0; i < data_.n_sites(); ++i) {
    fill_site_row(i, margins_.sites[i], u_, jac_);
    for (std::size_t t = 0; t < data_.n_years(); ++t) {
      if (data_.cell(i, t) == CellStatus::missing) {
        u_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = latent(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
      }
    }
  }
  std::vector<std::size_t> all(data_.n_sites());
  for (std::size_t p = 0; p < all.size(); ++p) all[p] = p;
  fill_factor_rows(all, theta_, u_, fac_, 0, data_.n_years());
  total_ = sum_totals(jac_, fac_);
  p_u_ = u_;
  p_jac_ = jac_;
  p_fac_ = fac_;
  p_theta_ = theta_;
  p_margins_ = margins_;
  pending_ = Pending::none;
}

double LikelihoodCache::log_jacobian() const { return matrix_sum(jac_); }
double LikelihoodCache::log_factors() const { return matrix_sum(fac_); }

double LikelihoodCache::propose_theta(std::span<const double> theta) {
  require(pending_ == Pending::none, "a proposal is already staged");
  p_theta_.assign(theta.begin(), theta.end());
  std::vector<std::size_t> all(data_.n_sites());
  for (std::size_t p = 0; p < all.size(); ++p) all[p] = p;
  touched_positions_ = all;
  touched_sites_.clear();
  fill_factor_rows(all, p_theta_, p_u_, p_fac_, 0, data_.n_years());
  last_cells_ = all.size() * data_.n_years();
  p_total_ = sum_totals(p_jac_, p_fac_);
  pending_ = Pending::theta;
  return p_total_;
}

double LikelihoodCache::propose_site(std::size_t site, const GevSiteParams& params) {
  require(pending_ == Pending::none, "a proposal is already staged");
  require(site < data_.n_sites(), "site index out of range");
  p_margins_.sites[site] = params;
  fill_site_row(site, params, p_u_, p_jac_);
  touched_sites_ = {site};
  touched_positions_ = affected_positions(touched_sites_);
  fill_factor_rows(touched_positions_, theta_, p_u_, p_fac_, 0, data_.n_years());
  last_cells_ = touched_positions_.size() * data_.n_years();
  p_total_ = sum_totals(p_jac_, p_fac_);
  pending_ = Pending::rows;
  return p_total_;
}

double LikelihoodCache::propose_margins(const MarginalState& margins) {
  require(pending_ == Pending::none, "a proposal is already staged");
  require(margins.sites.size() == data_.n_sites(), "one GEV parameter set per site");
  p_margins_ = margins;
  touched_sites_.resize(data_.n_sites());
  for (std::size_t i = 0; i < data_.n_sites(); ++i) {
    touched_sites_[i] = i;
    fill_site_row(i, margins.sites[i], p_u_, p_jac_);
  }
  touched_positions_ = touched_sites_;
  fill_factor_rows(touched_positions_, theta_, p_u_, p_fac_, 0, data_.n_years());
  last_cells_ = touched_positions_.size() * data_.n_years();
  p_total_ = sum_totals(p_jac_, p_fac_);
  pending_ = Pending::rows;
  return p_total_;
}

double LikelihoodCache::propose_latent(std::size_t site, std::size_t t, double u) {
  require(pending_ == Pending::none, "a proposal is already staged");
  require(data_.cell(site, t) == CellStatus::missing, "only missing cells carry latent values");
  p_u_(static_cast<Eigen::Index>(site), static_cast<Eigen::Index>(t)) = u;
  touched_sites_ = {site};
  touched_positions_ = affected_positions(touched_sites_);
  touched_col_ = t;
  fill_factor_rows(touched_positions_, theta_, p_u_, p_fac_, t, t + 1);
  last_cells_ = touched_positions_.size();
  p_total_ = sum_totals(p_jac_, p_fac_);
  pending_ = Pending::cell;
  return p_total_;
}

void LikelihoodCache::accept() {
  const auto& g = model_.graph();
  switch (pending_) {
    case Pending::none: return;
    case Pending::theta:
      theta_ = p_theta_;
      fac_ = p_fac_;
      break;
    case Pending::rows:
      margins_ = p_margins_;
      for (auto s : touched_sites_) {
        u_.row(static_cast<Eigen::Index>(s)) = p_u_.row(static_cast<Eigen::Index>(s));
        jac_.row(static_cast<Eigen::Index>(s)) = p_jac_.row(static_cast<Eigen::Index>(s));
      }
      for (auto p : touched_positions_) {
        fac_.row(static_cast<Eigen::Index>(g.order[p])) = p_fac_.row(static_cast<Eigen::Index>(g.order[p]));
      }
      break;
    case Pending::cell: {
      const auto c = static_cast<Eigen::Index>(touched_col_);
      const auto s = static_cast<Eigen::Index>(touched_sites_.front());
      u_(s, c) = p_u_(s, c);
      for (auto p : touched_positions_) {
        fac_(static_cast<Eigen::Index>(g.order[p]), c) = p_fac_(static_cast<Eigen::Index>(g.order[p]), c);
      }
      break;
    }
  }
  total_ = p_total_;
  pending_ = Pending::none;
}

void LikelihoodCache::reject() {
  const auto& g = model_.graph();
  switch (pending_) {
    case Pending::none: return;
    case Pending::theta:
      p_theta_ = theta_;
      p_fac_ = fac_;
      break;
    case Pending::rows:
      p_margins_ = margins_;
      for (auto s : touched_sites_) {
        p_u_.row(static_cast<Eigen::Index>(s)) = u_.row(static_cast<Eigen::Index>(s));
        p_jac_.row(static_cast<Eigen::Index>(s)) = jac_.row(static_cast<Eigen::Index>(s));
      }
      for (auto p : touched_positions_) {
        p_fac_.row(static_cast<Eigen::Index>(g.order[p])) = fac_.row(static_cast<Eigen::Index>(g.order[p]));
      }
      break;
    case Pending::cell: {
      const auto c = static_cast<Eigen::Index>(touched_col_);
      const auto s = static_cast<Eigen::Index>(touched_sites_.front());
      p_u_(s, c) = u_(s, c);
      for (auto p : touched_positions_) {
        p_fac_(static_cast<Eigen::Index>(g.order[p]), c) = fac_(static_cast<Eigen::Index>(g.order[p]), c);
      }
      break;
    }
  }
  pending_ = Pending::none;
}

double LikelihoodCache::recompute() const {
  const auto n = data_.y.rows(), T = data_.y.cols();
  Eigen::MatrixXd u = Eigen::MatrixXd::Constant(n, T, kNaN);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, T);
  for (std::size_t i = 0; i < data_.n_sites(); ++i) {
    fill_site_row(i, margins_.sites[i], u, jac);
    for (std::size_t t = 0; t < data_.n_years(); ++t) {
      if (data_.cell(i, t) == CellStatus::missing) {
        u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = u_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
      }
    }
  }
  const Eigen::MatrixXd fac = vecchia_factors(u, data_.status, theta_, model_, threads_);
  return sum_totals(jac, fac);
}

Eigen::MatrixXd LikelihoodCache::pointwise() const {
  Eigen::MatrixXd p = jac_ + fac_;
  for (std::size_t i = 0; i < data_.n_sites(); ++i) {
    for (std::size_t t = 0; t < data_.n_years(); ++t) {
      if (data_.cell(i, t) == CellStatus::missing) p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = kNaN;
    }
  }
  return p;
}

}  // namespace pmm
