#include "pmm/diagnostics.hpp"

#include <algorithm>
#include <boost/math/distributions/beta.hpp>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pmm/error.hpp"
#include "pmm/parallel.hpp"

namespace pmm {
namespace {

double logsumexp(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

std::size_t bin_index(std::span<const double> edges, double h) {
  if (h < edges.front() || h >= edges.back()) return static_cast<std::size_t>(-1);
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), h) - edges.begin()) - 1;
}

void check_edges(std::span<const double> edges) {
  require(edges.size() >= 2, "need at least one distance bin");
  for (std::size_t k = 1; k < edges.size(); ++k) require(edges[k] > edges[k - 1], "bin edges must increase");
}

}  // namespace

Eigen::MatrixXd rank_standardize(const Eigen::MatrixXd& panel) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(panel.rows(), panel.cols(), NAN);
  for (Eigen::Index i = 0; i < panel.rows(); ++i) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index t = 0; t < panel.cols(); ++t) {
      if (!std::isnan(panel(i, t))) idx.push_back(t);
    }
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return panel(i, a) < panel(i, b); });
    const double n = static_cast<double>(idx.size());
    for (std::size_t k = 0; k < idx.size();) {
      std::size_t e = k;
      while (e + 1 < idx.size() && panel(i, idx[e + 1]) == panel(i, idx[k])) ++e;
      const double rank = 0.5 * static_cast<double>(k + e) + 1.0;  // average rank for ties
      for (std::size_t j = k; j <= e; ++j) out(i, idx[j]) = rank / (n + 1.0);
      k = e + 1;
    }
  }
  return out;
}

std::vector<double> equal_bins(double max_h, std::size_t count) {
  require(max_h > 0.0 && count >= 1, "bins need a positive range and count");
  std::vector<double> e(count + 1);
  for (std::size_t k = 0; k <= count; ++k) e[k] = max_h * static_cast<double>(k) / static_cast<double>(count);
  e.back() = std::nextafter(max_h, INFINITY);
  return e;
}

std::vector<double> default_bins(std::span<const Point2> points, std::size_t count) {
  double diam = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) diam = std::max(diam, distance(points[i], points[j]));
  }
  require(diam > 0.0, "sites must not coincide");
  return equal_bins(0.5 * diam, count);
}

ChiEstimate empirical_chi(const Eigen::MatrixXd& panel, std::span<const Point2> points,
                          std::span<const double> levels, std::span<const double> edges,
                          bool ranked) {
  const auto n = static_cast<std::size_t>(panel.rows());
  require(n >= 2 && points.size() == n, "chi needs at least two sites with coordinates");
  check_edges(edges);
  for (double u : levels) require(u > 0.0 && u < 1.0, "chi levels must lie in (0,1)");
  const Eigen::MatrixXd p = ranked ? rank_standardize(panel) : panel;
  const std::size_t nb = edges.size() - 1;

  ChiEstimate est;
  est.levels.assign(levels.begin(), levels.end());
  est.edges.assign(edges.begin(), edges.end());
  est.value = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(levels.size()), static_cast<Eigen::Index>(nb), NAN);
  est.se = est.value;
  est.pairs = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(levels.size()), static_cast<Eigen::Index>(nb));

  for (std::size_t l = 0; l < levels.size(); ++l) {
    const double u = levels[l];
    std::vector<double> ratio_sum(nb, 0.0), joint(nb, 0.0), cond(nb, 0.0);
    std::vector<int> count(nb, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const std::size_t b = bin_index(edges, distance(points[i], points[j]));
        if (b == static_cast<std::size_t>(-1)) continue;
        double c = 0.0, jn = 0.0;
        for (Eigen::Index t = 0; t < p.cols(); ++t) {
          const double a = p(static_cast<Eigen::Index>(i), t), o = p(static_cast<Eigen::Index>(j), t);
          if (std::isnan(a) || std::isnan(o)) continue;
          if (a > u) {
            c += 1.0;
            if (o > u) jn += 1.0;
          }
        }
        if (c == 0.0) continue;
        ratio_sum[b] += jn / c;
        joint[b] += jn;
        cond[b] += c;
        ++count[b];
      }
    }
    for (std::size_t b = 0; b < nb; ++b) {
      const auto li = static_cast<Eigen::Index>(l), bi = static_cast<Eigen::Index>(b);
      est.pairs(li, bi) = count[b];
      if (count[b] == 0) continue;
      const double chi = ratio_sum[b] / count[b];
      est.value(li, bi) = chi;
      est.se(li, bi) = std::sqrt(std::max(chi * (1.0 - chi), 0.0) / cond[b]);
    }
  }
  for (std::size_t b = 0; b < nb; ++b) {
    if (est.pairs.col(static_cast<Eigen::Index>(b)).maxCoeff() == 0) {
      std::ostringstream msg;
      msg << "distance bin [" << edges[b] << ", " << edges[b + 1] << ") has no usable pairs; omitted";
      est.warnings.push_back(msg.str());
    }
  }
  return est;
}

ExceedanceCounts pooled_exceedance_counts(const Eigen::MatrixXd& panel, double level) {
  ExceedanceCounts c;
  const double n = static_cast<double>(panel.rows());
  for (Eigen::Index t = 0; t < panel.cols(); ++t) {
    const double k = static_cast<double>((panel.col(t).array() > level).count());
    c.joint += k * (k - 1.0);
    c.conditioning += k * (n - 1.0);
  }
  return c;
}

double chi_shared_r_limit(double delta) {
  require(delta >= 0.0 && delta <= 1.0, "delta must lie in [0,1]");
  if (delta <= 0.5) return 0.0;
  return 2.0 * (2.0 * delta - 1.0) / (3.0 * delta - 1.0);
}

QqResult pit_and_qq(std::span<const double> pit) {
  require(!pit.empty(), "no PIT values");
  QqResult q;
  q.pit.assign(pit.begin(), pit.end());
  std::sort(q.pit.begin(), q.pit.end());
  const std::size_t n = q.pit.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double k = static_cast<double>(i + 1);
    const double th = k / (static_cast<double>(n) + 1.0);
    q.theoretical.push_back(th);
    q.exp_theoretical.push_back(-std::log1p(-th));
    q.exp_observed.push_back(-std::log1p(-std::min(q.pit[i], 1.0 - 1e-16)));
    boost::math::beta_distribution<double> order(k, static_cast<double>(n) + 1.0 - k);
    q.lower.push_back(boost::math::quantile(order, 0.025));
    q.upper.push_back(boost::math::quantile(order, 0.975));
  }
  q.ks = ks_uniform(q.pit);
  return q;
}

std::vector<double> pit_values(const Eigen::MatrixXd& u, std::span<const double> theta,
                               const ConditionalModel& model) {
  const auto& g = model.graph();
  require(static_cast<std::size_t>(u.rows()) == g.size(), "U rows must match the neighbour graph");
  std::vector<double> out;
  const auto T = static_cast<std::size_t>(u.cols());
  for (std::size_t pos = 1; pos < g.size(); ++pos) {
    const auto& nb = g.neighbors[pos];
    Eigen::MatrixXd x(static_cast<Eigen::Index>(nb.size()), u.cols());
    for (std::size_t r = 0; r < nb.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = u.row(static_cast<Eigen::Index>(g.order[nb[r]]));
    std::vector<double> uu(T), lc(T);
    for (std::size_t t = 0; t < T; ++t) uu[t] = u(static_cast<Eigen::Index>(g.order[pos]), static_cast<Eigen::Index>(t));
    model.log_cdf(pos, theta, x, uu, lc);
    for (double v : lc) out.push_back(std::exp(v));
  }
  return out;
}

Variogram variogram(const Eigen::MatrixXd& panel, std::span<const Point2> points,
                    std::span<const double> edges) {
  const auto n = static_cast<std::size_t>(panel.rows());
  require(n >= 2 && points.size() == n, "variogram needs at least two sites with coordinates");
  check_edges(edges);
  const std::size_t nb = edges.size() - 1;
  Variogram v;
  v.edges.assign(edges.begin(), edges.end());
  v.pairs.assign(nb, 0);
  std::vector<double> year_sum(nb, 0.0);
  std::vector<double> years_used(nb, 0.0);
  std::vector<std::size_t> pair_bin;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const std::size_t b = bin_index(edges, distance(points[i], points[j]));
      if (b != static_cast<std::size_t>(-1)) ++v.pairs[b];
    }
  }
  for (Eigen::Index t = 0; t < panel.cols(); ++t) {
    std::vector<double> sum(nb, 0.0), cnt(nb, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const std::size_t b = bin_index(edges, distance(points[i], points[j]));
        if (b == static_cast<std::size_t>(-1)) continue;
        const double a = panel(static_cast<Eigen::Index>(i), t), c = panel(static_cast<Eigen::Index>(j), t);
        if (std::isnan(a) || std::isnan(c)) continue;
        sum[b] += (a - c) * (a - c);
        cnt[b] += 1.0;
      }
    }
    for (std::size_t b = 0; b < nb; ++b) {
      if (cnt[b] > 0.0) {
        year_sum[b] += sum[b] / (2.0 * cnt[b]);
        years_used[b] += 1.0;
      }
    }
  }
  for (std::size_t b = 0; b < nb; ++b) {
    if (years_used[b] > 0.0) {
      v.value.push_back(year_sum[b] / years_used[b]);
    } else {
      v.value.push_back(NAN);
      std::ostringstream msg;
      msg << "distance bin [" << edges[b] << ", " << edges[b + 1] << ") has no pairs; omitted";
      v.warnings.push_back(msg.str());
    }
  }
  return v;
}

ScoreReport waic_and_loo(const Eigen::MatrixXd& loglik, double truncation_quantile) {
  require(loglik.rows() >= 2, "WAIC needs at least two posterior samples");
  require(loglik.cols() >= 1, "WAIC needs at least one cell");
  require(truncation_quantile > 0.0 && truncation_quantile <= 1.0, "truncation quantile must lie in (0,1]");
  const auto S = static_cast<std::size_t>(loglik.rows());
  const auto N = static_cast<std::size_t>(loglik.cols());
  std::vector<double> lppd(N), pw(N), elpd_loo(N), waic_i(N), loo_i(N);
  std::vector<double> col(S), lw(S), tmp(S);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t s = 0; s < S; ++s) col[s] = loglik(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i));
    lppd[i] = logsumexp(col) - std::log(static_cast<double>(S));
    const double sd = sample_sd(col);
    pw[i] = sd * sd;
    waic_i[i] = -2.0 * (lppd[i] - pw[i]);

    for (std::size_t s = 0; s < S; ++s) lw[s] = -col[s];
    const double cap = sample_quantile(lw, truncation_quantile);
    for (std::size_t s = 0; s < S; ++s) {
      lw[s] = std::min(lw[s], cap);
      tmp[s] = lw[s] + col[s];
    }
    elpd_loo[i] = logsumexp(tmp) - logsumexp(lw);
    loo_i[i] = -2.0 * elpd_loo[i];
  }
  ScoreReport r;
  r.samples = S;
  r.cells = N;
  r.lppd = pairwise_sum(lppd);
  r.p_waic = pairwise_sum(pw);
  r.waic = -2.0 * (r.lppd - r.p_waic);
  r.elpd_loo = pairwise_sum(elpd_loo);
  r.p_loo = r.lppd - r.elpd_loo;
  r.looic = -2.0 * r.elpd_loo;
  const double n = static_cast<double>(N);
  r.waic_se = std::sqrt(n) * sample_sd(waic_i);
  r.loo_se = std::sqrt(n) * sample_sd(loo_i);
  return r;
}

double joint_exceedance_probability(std::span<const Point2> points, ModelVariant variant,
                                    const SpatialParams& params,
                                    std::span<const double> u_thresholds, std::size_t sims,
                                    std::uint64_t seed, unsigned threads) {
  require(points.size() == u_thresholds.size(), "one threshold per site");
  if (variant == ModelVariant::independent) {
    double p = 1.0;
    for (double u : u_thresholds) p *= 1.0 - std::clamp(u, 0.0, 1.0);
    return p;
  }
  require(sims >= 1, "need at least one simulation");
  const ProcessSimulator sim(points, params, variant);
  constexpr std::size_t chunk = 1000;
  const std::size_t chunks = (sims + chunk - 1) / chunk;
  std::vector<double> hits(chunks, 0.0);
  parallel_for(chunks, threads, [&](std::size_t c) {
    std::vector<double> u(points.size());
    const std::size_t end = std::min(sims, (c + 1) * chunk);
    for (std::size_t k = c * chunk; k < end; ++k) {
      Rng rng(seed, k);
      sim.draw_u(rng, u);
      bool all = true;
      for (std::size_t i = 0; i < u.size() && all; ++i) all = u[i] > u_thresholds[i];
      if (all) hits[c] += 1.0;
    }
  });
  return pairwise_sum(hits) / static_cast<double>(sims);
}

ExceedanceReport joint_exceedance(std::span<const ExceedanceDraw> draws, const SpatialModel& model,
                                  std::span<const Point2> cluster, std::span<const double> q,
                                  std::size_t sims, std::uint64_t seed, unsigned threads) {
  require(!draws.empty(), "no posterior draws");
  require(cluster.size() == q.size(), "one threshold per cluster site");
  ExceedanceReport rep;
  double greater = 0.0;
  for (std::size_t d = 0; d < draws.size(); ++d) {
    const auto& dr = draws[d];
    require(dr.margins_a.size() == q.size() && dr.margins_b.size() == q.size(), "margins per cluster site");
    const SpatialParams params = model.params(dr.theta);
    std::vector<double> ua(q.size()), ub(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      ua[i] = gev_cdf(q[i], dr.margins_a[i]);
      ub[i] = gev_cdf(q[i], dr.margins_b[i]);
    }
    // common random numbers across the two years
    const std::uint64_t s = stream_key(seed, d, 5);
    const double pa = joint_exceedance_probability(cluster, model.variant, params, ua, sims, s, threads);
    const double pb = joint_exceedance_probability(cluster, model.variant, params, ub, sims, s, threads);
    rep.prob_a.push_back(pa);
    rep.prob_b.push_back(pb);
    if (pb > pa) greater += 1.0;
  }
  rep.mean_a = mean(rep.prob_a);
  rep.sd_a = sample_sd(rep.prob_a);
  rep.mean_b = mean(rep.prob_b);
  rep.sd_b = sample_sd(rep.prob_b);
  rep.prob_b_greater = greater / static_cast<double>(draws.size());
  return rep;
}

void write_tidy_csv(std::ostream& out, std::span<const TidyRow> rows) {
  out.precision(12);
  auto cell = [&](double v) {
    if (!std::isnan(v)) out << v;
  };
  out << "estimator,level,bin_lo,bin_hi,value,se,count\n";
  for (const auto& r : rows) {
    out << r.estimator << ',';
    cell(r.level);
    out << ',';
    cell(r.bin_lo);
    out << ',';
    cell(r.bin_hi);
    out << ',';
    cell(r.value);
    out << ',';
    cell(r.se);
    out << ',';
    cell(r.count);
    out << '\n';
  }
}

std::vector<TidyRow> tidy(const ChiEstimate& chi) {
  std::vector<TidyRow> rows;
  for (std::size_t l = 0; l < chi.levels.size(); ++l) {
    for (std::size_t b = 0; b + 1 < chi.edges.size(); ++b) {
      const auto li = static_cast<Eigen::Index>(l), bi = static_cast<Eigen::Index>(b);
      if (chi.pairs(li, bi) == 0) continue;
      rows.push_back({"chi", chi.levels[l], chi.edges[b], chi.edges[b + 1], chi.value(li, bi), chi.se(li, bi),
                      static_cast<double>(chi.pairs(li, bi))});
    }
  }
  return rows;
}

std::vector<TidyRow> tidy(const Variogram& v) {
  std::vector<TidyRow> rows;
  for (std::size_t b = 0; b < v.value.size(); ++b) {
    if (std::isnan(v.value[b])) continue;
    rows.push_back({"variogram", NAN, v.edges[b], v.edges[b + 1], v.value[b], NAN, static_cast<double>(v.pairs[b])});
  }
  return rows;
}

std::vector<TidyRow> tidy(const QqResult& qq) {
  std::vector<TidyRow> rows;
  for (std::size_t i = 0; i < qq.pit.size(); ++i) {
    rows.push_back({"qq_uniform", qq.theoretical[i], qq.lower[i], qq.upper[i], qq.pit[i], NAN, NAN});
    rows.push_back({"qq_exponential", qq.exp_theoretical[i], -std::log1p(-qq.lower[i]), -std::log1p(-qq.upper[i]),
                    qq.exp_observed[i], NAN, NAN});
  }
  rows.push_back({"pit_ks_statistic", NAN, NAN, NAN, qq.ks.statistic, NAN, static_cast<double>(qq.pit.size())});
  rows.push_back({"pit_ks_pvalue", NAN, NAN, NAN, qq.ks.p_value, NAN, static_cast<double>(qq.pit.size())});
  return rows;
}

std::vector<TidyRow> tidy(const ScoreReport& s, const std::string& model) {
  const double cells = static_cast<double>(s.cells);
  return {{"waic_" + model, NAN, NAN, NAN, s.waic, s.waic_se, cells},
          {"looic_" + model, NAN, NAN, NAN, s.looic, s.loo_se, cells},
          {"lppd_" + model, NAN, NAN, NAN, s.lppd, NAN, cells},
          {"p_waic_" + model, NAN, NAN, NAN, s.p_waic, NAN, cells},
          {"p_loo_" + model, NAN, NAN, NAN, s.p_loo, NAN, cells}};
}

}  // namespace pmm
