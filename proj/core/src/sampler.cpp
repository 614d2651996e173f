#include "pmm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>

#include "pmm/error.hpp"
#include "pmm/gev_mle.hpp"
#include "pmm/parallel.hpp"

namespace pmm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double normal_logdensity(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double inv_gamma_logdensity(double x, double shape, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

double lognormal_logdensity(double x, double mean, double sd) {
  if (!(x > 0.0)) return kNegInf;
  return normal_logdensity(std::log(x), mean, sd) - std::log(x);
}

double field_value(const GevSiteParams& p, std::size_t f) {
  switch (f) {
    case 0: return p.mu0;
    case 1: return p.mu1;
    case 2: return p.log_sigma;
    default: return p.xi;
  }
}

std::vector<double> field_values(const MarginalState& m, std::size_t f) {
  std::vector<double> v;
  v.reserve(m.sites.size());
  for (const auto& s : m.sites) v.push_back(field_value(s, f));
  return v;
}

class Chain {
 public:
  Chain(const SamplerConfig& cfg, std::size_t index, const Dataset& data,
        const ConditionalModel& model, const TimeCovariate& x, const PriorSpec& prior)
      : cfg_(cfg),
        data_(data),
        model_(model),
        prior_(prior),
        rng_(cfg.seed, index, 7),
        comps_(model.spatial().components()) {
    out_.seed = stream_key(cfg.seed, index, 7);
    out_.theta_size = comps_.size();
    out_.margin_mode = cfg.margins;
    out_.n_sites = data.n_sites();
    out_.names = parameter_names(model.spatial(), cfg.margins, data.sites);

    // theta at prior medians, delta from the configured starts
    for (auto c : comps_) {
      switch (c) {
        case ThetaComponent::delta:
          out_.delta_start = cfg.delta_starts.empty() ? 0.5 : cfg.delta_starts[index % cfg.delta_starts.size()];
          theta_.push_back(out_.delta_start);
          theta_tf_.push_back(ParamTransform::interval(0.0, 1.0));
          break;
        case ThetaComponent::rho:
          theta_.push_back(0.5 * prior.rho_max);
          theta_tf_.push_back(ParamTransform::interval(0.0, prior.rho_max));
          break;
        case ThetaComponent::r:
          theta_.push_back(0.5);
          theta_tf_.push_back(ParamTransform::interval(0.0, 1.0));
          break;
      }
    }

    margins_ = cfg.margins == MarginMode::fixed ? *cfg.fixed_margins : initial_margins(data, cfg.margins);
    if (cfg.margins == MarginMode::stvc) init_hyper();

    for (std::size_t i = 0; i < data.n_sites(); ++i) {
      for (std::size_t t = 0; t < data.n_years(); ++t) {
        if (data.cell(i, t) == CellStatus::missing) missing_.push_back({i, t});
      }
    }
    Eigen::MatrixXd latent = Eigen::MatrixXd::Constant(data.y.rows(), data.y.cols(), 0.5);

    if (cfg.use_likelihood) {
      cache_.emplace(data, model, x, 1);
      cache_->reset(theta_, margins_, latent);
    }
    latent_ = latent;

    theta_block_ = {"theta", std::vector<double>(comps_.size(), 0.3)};
    shared_block_ = {"margins", {0.02, 0.02, 0.02}};
    for (std::size_t i = 0; i < data.n_sites() && cfg.margins == MarginMode::stvc; ++i) {
      site_blocks_.push_back({"site", {0.05, 0.05, 0.05, 0.05}});
    }
    for (std::size_t k = 0; k < 17; ++k) hyper_blocks_.push_back({"hyper", {0.3}});
    latent_block_ = {"latent", {1.0}};

    prior_margins_ = margin_prior();
    prior_hyper_ = hyper_prior();
    log_post_ = likelihood() + prior_margins_ + prior_hyper_;
    if (!std::isfinite(log_post_)) {
      std::ostringstream msg;
      msg << "non-finite log posterior at initialization of chain " << index << ": likelihood="
          << likelihood() << " margin prior=" << prior_margins_ << " hyper prior=" << prior_hyper_;
      if (cache_) {
        msg << " log-jacobian=" << cache_->log_jacobian() << " factors=" << cache_->log_factors();
        const Eigen::MatrixXd pw = cache_->pointwise();
        int shown = 0;
        for (Eigen::Index i = 0; i < pw.rows() && shown < 5; ++i) {
          for (Eigen::Index t = 0; t < pw.cols() && shown < 5; ++t) {
            if (!std::isnan(pw(i, t)) && !std::isfinite(pw(i, t))) {
              msg << " cell(" << data.sites.ids[static_cast<std::size_t>(i)] << "," << data.years[static_cast<std::size_t>(t)] << ")=" << pw(i, t);
              ++shown;
            }
          }
        }
      }
      throw NumericError(msg.str());
    }
  }

  ChainOutput run() {
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<double>> pointwise_rows;
    for (std::size_t it = 1; it <= cfg_.iterations; ++it) {
      sweep();
      if (it <= cfg_.burn_in) adapt(it);
      if (cfg_.audit_every > 0 && it % cfg_.audit_every == 0) audit();
      if (it > cfg_.burn_in && (it - cfg_.burn_in) % cfg_.thin == 0) {
        rows.push_back(current_row());
        out_.log_posterior.push_back(log_post_);
        if (cfg_.store_pointwise && cache_) pointwise_rows.push_back(pointwise_row());
      }
    }
    out_.draws.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(out_.names.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < rows[r].size(); ++c) out_.draws(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    if (!pointwise_rows.empty()) {
      out_.pointwise.resize(static_cast<Eigen::Index>(pointwise_rows.size()), static_cast<Eigen::Index>(pointwise_rows[0].size()));
      for (std::size_t r = 0; r < pointwise_rows.size(); ++r) {
        for (std::size_t c = 0; c < pointwise_rows[r].size(); ++c) out_.pointwise(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = pointwise_rows[r][c];
      }
    }
    auto record = [&](const ProposalBlock& b, const std::string& name) {
      auto& a = out_.acceptance[name];
      a.first += b.accepted;
      a.second += b.proposed;
    };
    if (!comps_.empty()) record(theta_block_, "theta");
    if (cfg_.margins == MarginMode::shared) record(shared_block_, "margins");
    for (const auto& b : site_blocks_) record(b, "site");
    if (cfg_.margins == MarginMode::stvc) {
      for (const auto& b : hyper_blocks_) record(b, "hyper");
    }
    if (!missing_.empty()) record(latent_block_, "latent");
    return std::move(out_);
  }

 private:
  double likelihood() const { return cache_ ? cache_->total() : 0.0; }

  void init_hyper() {
    for (std::size_t f = 0; f < 4; ++f) {
      const auto v = field_values(margins_, f);
      const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - m) * (x - m);
      var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
      var = std::max(var, 1e-2);
      hyper_.fields[f] = {m, 0.5 * var, std::exp(prior_.log_range_mean), 0.5 * var};
    }
    hyper_.smoothness = 0.5;
    for (std::size_t f = 0; f < 4; ++f) field_priors_[f] = FieldPrior(data_.sites.scaled, hyper_.fields[f], hyper_.smoothness);
  }

  double margin_prior() const {
    switch (cfg_.margins) {
      case MarginMode::fixed: return 0.0;
      case MarginMode::shared: {
        const auto& p = margins_.sites.front();
        return normal_logdensity(p.mu0, 0.0, prior_.location_sd) +
               normal_logdensity(p.log_sigma, 0.0, prior_.location_sd) +
               normal_logdensity(p.xi, 0.0, prior_.xi_sd);
      }
      case MarginMode::stvc: {
        double s = 0.0;
        for (std::size_t f = 0; f < 4; ++f) s += field_priors_[f].logdensity(field_values(margins_, f));
        return s;
      }
    }
    return 0.0;
  }

  double hyper_prior_of(const StvcHyper& h) const {
    if (cfg_.margins != MarginMode::stvc) return 0.0;
    double s = lognormal_logdensity(h.smoothness, prior_.log_smooth_mean, prior_.log_smooth_sd);
    for (const auto& f : h.fields) {
      s += normal_logdensity(f.beta, 0.0, prior_.beta_sd);
      s += inv_gamma_logdensity(f.tau2, prior_.ig_shape, prior_.ig_rate);
      s += inv_gamma_logdensity(f.nugget, prior_.ig_shape, prior_.ig_rate);
      s += lognormal_logdensity(f.range, prior_.log_range_mean, prior_.log_range_sd);
    }
    return s;
  }
  double hyper_prior() const { return hyper_prior_of(hyper_); }

  // Accept or roll back the staged likelihood proposal.
  void settle(bool accepted) {
    if (!cache_) return;
    if (accepted) {
      cache_->accept();
    } else {
      cache_->reject();
    }
  }

  void sweep() {
    if (!comps_.empty()) update_theta();
    switch (cfg_.margins) {
      case MarginMode::fixed: break;
      case MarginMode::shared: update_shared(); break;
      case MarginMode::stvc:
        for (std::size_t i = 0; i < data_.n_sites(); ++i) update_site(i);
        update_hyper();
        break;
    }
    if (cache_) {
      for (const auto& [i, t] : missing_) update_latent(i, t);
    }
  }

  void update_theta() {
    const std::vector<ParamTransform> tf = theta_tf_;
    const bool accepted = metropolis_block(theta_, log_post_, theta_block_, tf, [&](std::span<const double> th) {
      const double lik = cache_ ? cache_->propose_theta(th) : 0.0;
      return lik + prior_margins_ + prior_hyper_;
    }, rng_);
    settle(accepted);
  }

  void update_shared() {
    const auto& p = margins_.sites.front();
    std::vector<double> v{p.mu0, p.log_sigma, p.xi};
    const std::vector<ParamTransform> tf(3);
    double pm_new = 0.0;
    MarginalState proposal;
    const bool accepted = metropolis_block(v, log_post_, shared_block_, tf, [&](std::span<const double> q) {
      proposal.sites.assign(data_.n_sites(), GevSiteParams{q[0], 0.0, q[1], q[2]});
      pm_new = normal_logdensity(q[0], 0.0, prior_.location_sd) + normal_logdensity(q[1], 0.0, prior_.location_sd) +
               normal_logdensity(q[2], 0.0, prior_.xi_sd);
      const double lik = cache_ ? cache_->propose_margins(proposal) : 0.0;
      return lik + pm_new + prior_hyper_;
    }, rng_);
    settle(accepted);
    if (accepted) {
      margins_ = std::move(proposal);
      prior_margins_ = pm_new;
    }
  }

  void update_site(std::size_t i) {
    const auto& p = margins_.sites[i];
    std::vector<double> v{p.mu0, p.mu1, p.log_sigma, p.xi};
    const std::vector<ParamTransform> tf(4);
    double pm_new = 0.0;
    const bool accepted = metropolis_block(v, log_post_, site_blocks_[i], tf, [&](std::span<const double> q) {
      const GevSiteParams np{q[0], q[1], q[2], q[3]};
      pm_new = 0.0;
      for (std::size_t f = 0; f < 4; ++f) {
        auto vals = field_values(margins_, f);
        vals[i] = field_value(np, f);
        pm_new += field_priors_[f].logdensity(vals);
      }
      const double lik = cache_ ? cache_->propose_site(i, np) : 0.0;
      return lik + pm_new + prior_hyper_;
    }, rng_);
    settle(accepted);
    if (accepted) {
      margins_.sites[i] = {v[0], v[1], v[2], v[3]};
      prior_margins_ = pm_new;
    }
  }

  void update_hyper() {
    std::size_t b = 0;
    for (std::size_t f = 0; f < 4; ++f) {
      for (std::size_t k = 0; k < 4; ++k, ++b) {
        FieldHyper& h = hyper_.fields[f];
        double* slot = k == 0 ? &h.beta : k == 1 ? &h.tau2 : k == 2 ? &h.range : &h.nugget;
        std::vector<double> v{*slot};
        const std::vector<ParamTransform> tf{k == 0 ? ParamTransform::identity() : ParamTransform::positive()};
        std::optional<FieldPrior> fp;
        double pm_new = 0.0, ph_new = 0.0;
        const bool accepted = metropolis_block(v, log_post_, hyper_blocks_[b], tf, [&](std::span<const double> q) {
          StvcHyper trial = hyper_;
          FieldHyper& th = trial.fields[f];
          (k == 0 ? th.beta : k == 1 ? th.tau2 : k == 2 ? th.range : th.nugget) = q[0];
          try {
            fp.emplace(data_.sites.scaled, th, trial.smoothness);
          } catch (const NumericError&) {
            return kNegInf;
          }
          pm_new = prior_margins_ - field_priors_[f].logdensity(field_values(margins_, f)) +
                   fp->logdensity(field_values(margins_, f));
          ph_new = hyper_prior_of(trial);
          return likelihood() + pm_new + ph_new;
        }, rng_);
        if (accepted) {
          *slot = v[0];
          field_priors_[f] = *fp;
          prior_margins_ = margin_prior();
          prior_hyper_ = ph_new;
          log_post_ = likelihood() + prior_margins_ + prior_hyper_;
        }
      }
    }
    // shared smoothness
    std::vector<double> v{hyper_.smoothness};
    const std::vector<ParamTransform> tf{ParamTransform::positive()};
    std::array<FieldPrior, 4> fps;
    double ph_new = 0.0;
    const bool accepted = metropolis_block(v, log_post_, hyper_blocks_[16], tf, [&](std::span<const double> q) {
      StvcHyper trial = hyper_;
      trial.smoothness = q[0];
      double pm = 0.0;
      try {
        for (std::size_t f = 0; f < 4; ++f) {
          fps[f] = FieldPrior(data_.sites.scaled, trial.fields[f], trial.smoothness);
          pm += fps[f].logdensity(field_values(margins_, f));
        }
      } catch (const NumericError&) {
        return kNegInf;
      }
      ph_new = hyper_prior_of(trial);
      return likelihood() + pm + ph_new;
    }, rng_);
    if (accepted) {
      hyper_.smoothness = v[0];
      field_priors_ = fps;
      prior_margins_ = margin_prior();
      prior_hyper_ = ph_new;
      log_post_ = likelihood() + prior_margins_ + prior_hyper_;
    }
  }

  void update_latent(std::size_t i, std::size_t t) {
    std::vector<double> v{latent_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t))};
    const std::vector<ParamTransform> tf{ParamTransform::interval(0.0, 1.0)};
    const bool accepted = metropolis_block(v, log_post_, latent_block_, tf, [&](std::span<const double> q) {
      return cache_->propose_latent(i, t, q[0]) + prior_margins_ + prior_hyper_;
    }, rng_);
    settle(accepted);
    if (accepted) latent_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = v[0];
  }

  void adapt(std::size_t it) {
    if (!comps_.empty()) adapt_scales(theta_block_, cfg_.adapt, it);
    if (cfg_.margins == MarginMode::shared) adapt_scales(shared_block_, cfg_.adapt, it);
    for (auto& b : site_blocks_) adapt_scales(b, cfg_.adapt, it);
    if (cfg_.margins == MarginMode::stvc) {
      for (auto& b : hyper_blocks_) adapt_scales(b, cfg_.adapt, it);
    }
    if (!missing_.empty()) adapt_scales(latent_block_, cfg_.adapt, it);
  }

  void audit() {
    double full = cache_ ? cache_->recompute() : 0.0;
    if (cfg_.margins == MarginMode::stvc) {
      for (std::size_t f = 0; f < 4; ++f) {
        full += stvc_prior_logdensity(field_values(margins_, f), hyper_.fields[f], hyper_.smoothness, data_.sites.scaled);
      }
    } else {
      full += margin_prior();
    }
    full += hyper_prior();
    ++out_.audits;
    const double err = std::abs(full - log_post_);
    out_.max_audit_error = std::max(out_.max_audit_error, std::isfinite(err) ? err : INFINITY);
  }

  std::vector<double> current_row() const {
    std::vector<double> row(theta_);
    switch (cfg_.margins) {
      case MarginMode::fixed: break;
      case MarginMode::shared: {
        const auto& p = margins_.sites.front();
        row.insert(row.end(), {p.mu0, p.log_sigma, p.xi});
        break;
      }
      case MarginMode::stvc:
        for (const auto& p : margins_.sites) row.insert(row.end(), {p.mu0, p.mu1, p.log_sigma, p.xi});
        for (const auto& h : hyper_.fields) row.insert(row.end(), {h.beta, h.tau2, h.range, h.nugget});
        row.push_back(hyper_.smoothness);
        break;
    }
    return row;
  }

  std::vector<double> pointwise_row() const {
    const Eigen::MatrixXd pw = cache_->pointwise();
    std::vector<double> row;
    for (std::size_t i = 0; i < data_.n_sites(); ++i) {
      for (std::size_t t = 0; t < data_.n_years(); ++t) {
        if (data_.cell(i, t) != CellStatus::missing) row.push_back(pw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)));
      }
    }
    return row;
  }

  const SamplerConfig& cfg_;
  const Dataset& data_;
  const ConditionalModel& model_;
  const PriorSpec& prior_;
  Rng rng_;
  std::vector<ThetaComponent> comps_;
  std::vector<double> theta_;
  std::vector<ParamTransform> theta_tf_;
  MarginalState margins_;
  StvcHyper hyper_;
  std::array<FieldPrior, 4> field_priors_;
  std::vector<std::pair<std::size_t, std::size_t>> missing_;
  Eigen::MatrixXd latent_;
  std::optional<LikelihoodCache> cache_;

  ProposalBlock theta_block_, shared_block_, latent_block_;
  std::vector<ProposalBlock> site_blocks_, hyper_blocks_;

  double prior_margins_ = 0.0;
  double prior_hyper_ = 0.0;
  double log_post_ = 0.0;
  ChainOutput out_;
};

}  // namespace

std::string to_string(MarginMode m) {
  switch (m) {
    case MarginMode::stvc: return "stvc";
    case MarginMode::shared: return "shared";
    case MarginMode::fixed: return "fixed";
  }
  return "unknown";
}

MarginMode parse_margin_mode(const std::string& name) {
  for (auto m : {MarginMode::stvc, MarginMode::shared, MarginMode::fixed}) {
    if (to_string(m) == name) return m;
  }
  throw InvalidArgument("unknown margin mode '" + name + "'");
}

void SamplerConfig::validate() const {
  require(iterations > burn_in, "iterations must exceed burn-in");
  require(thin >= 1, "thinning interval must be at least one");
  require(chains >= 1, "need at least one chain");
  require(margins != MarginMode::fixed || fixed_margins.has_value(), "fixed margin mode needs margins");
  for (double d : delta_starts) require(d > 0.0 && d < 1.0, "delta starting values must lie in (0,1)");
  require(adapt.window >= 1 && adapt.c0 > 0.0 && adapt.target > 0.0 && adapt.target < 1.0,
          "invalid adaptation settings");
}

std::size_t ChainOutput::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  require(it != names.end(), "no parameter named '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<double> ChainOutput::theta_at(std::size_t k) const {
  std::vector<double> t(theta_size);
  for (std::size_t c = 0; c < theta_size; ++c) t[c] = draws(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c));
  return t;
}

MarginalState ChainOutput::margins_at(std::size_t k, const MarginalState* fallback) const {
  const auto r = static_cast<Eigen::Index>(k);
  const auto base = static_cast<Eigen::Index>(theta_size);
  MarginalState m;
  switch (margin_mode) {
    case MarginMode::fixed:
      require(fallback != nullptr, "fixed-margin chains need the known margins");
      return *fallback;
    case MarginMode::shared:
      m.sites.assign(n_sites, GevSiteParams{draws(r, base), 0.0, draws(r, base + 1), draws(r, base + 2)});
      return m;
    case MarginMode::stvc:
      for (std::size_t i = 0; i < n_sites; ++i) {
        const auto c = base + static_cast<Eigen::Index>(4 * i);
        m.sites.push_back({draws(r, c), draws(r, c + 1), draws(r, c + 2), draws(r, c + 3)});
      }
      return m;
  }
  return m;
}

std::vector<std::string> parameter_names(const SpatialModel& model, MarginMode mode,
                                         const SiteSet& sites) {
  std::vector<std::string> names;
  for (auto c : model.components()) names.push_back(to_string(c));
  switch (mode) {
    case MarginMode::fixed: break;
    case MarginMode::shared: names.insert(names.end(), {"mu", "log_sigma", "xi"}); break;
    case MarginMode::stvc:
      for (const auto& id : sites.ids) {
        for (const char* f : kStvcFieldNames) names.push_back(std::string(f) + "[" + id + "]");
      }
      for (const char* f : kStvcFieldNames) {
        for (const char* h : {"beta", "tau2", "range", "nugget"}) names.push_back(std::string(h) + "[" + f + "]");
      }
      names.push_back("smoothness");
      break;
  }
  return names;
}

MarginalState initial_margins(const Dataset& data, MarginMode mode) {
  MarginalState m;
  if (mode == MarginMode::shared) {
    std::vector<double> pooled;
    for (std::size_t i = 0; i < data.n_sites(); ++i) {
      for (std::size_t t = 0; t < data.n_years(); ++t) {
        if (data.cell(i, t) == CellStatus::observed) pooled.push_back(data.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)));
      }
    }
    const auto fit = fit_gev_mle(pooled);
    m.sites.assign(data.n_sites(), GevSiteParams{fit.params.mu, 0.0, std::log(fit.params.sigma), fit.params.xi});
    return m;
  }
  for (std::size_t i = 0; i < data.n_sites(); ++i) {
    std::vector<double> y;
    for (std::size_t t = 0; t < data.n_years(); ++t) {
      if (data.cell(i, t) == CellStatus::observed) y.push_back(data.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)));
    }
    const auto fit = fit_gev_mle(y);
    m.sites.push_back({fit.params.mu, 0.0, std::log(fit.params.sigma), fit.params.xi});
  }
  return m;
}

ChainOutput run_chain(const SamplerConfig& config, std::size_t chain, const Dataset& data,
                      const ConditionalModel& model, const TimeCovariate& x,
                      const PriorSpec& prior) {
  config.validate();
  require(prior.rho_max > 0.0, "rho upper bound must be positive");
  Chain c(config, chain, data, model, x, prior);
  return c.run();
}

std::vector<ChainOutput> run_chains(const SamplerConfig& config, const Dataset& data,
                                    const ConditionalModel& model, const TimeCovariate& x,
                                    const PriorSpec& prior) {
  config.validate();
  std::vector<ChainOutput> out(config.chains);
  parallel_for(config.chains, config.threads, [&](std::size_t k) {
    out[k] = run_chain(config, k, data, model, x, prior);
  });
  return out;
}

}  // namespace pmm
