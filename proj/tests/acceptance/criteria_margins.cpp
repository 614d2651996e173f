#include <cmath>

#include "acceptance.hpp"
#include "pmm/diagnostics.hpp"
#include "pmm/margins.hpp"
#include "pmm/procsim.hpp"
#include "pmm/stats.hpp"

namespace pmm::acceptance {
namespace {

constexpr double kHypoexpSupTol = 3e-3;
constexpr std::size_t kHypoexpDraws = 10'000'000;

constexpr std::size_t kHwReplicates = 1'000'000;
constexpr double kHwLevel = 0.9999;
constexpr double kHwTol = 0.05;
constexpr double kHwWeakMax = 0.05;

constexpr std::size_t kBrFields = 100'000;
constexpr double kBrTol = 0.02;
constexpr double kBrKsLevel = 0.01;

constexpr double kIndepTarget = 1e-10;
constexpr double kIndepFactor = 3.0;

Outcome hypoexponential_margin() {
  const double step = 0.01;
  const std::size_t cells = 1000;  // grid 0, 0.01, ..., 10
  double worst = 0.0;
  for (double delta : {0.1, 0.3, 0.49, 0.5, 0.7, 0.9}) {
    Rng rng(2024, static_cast<std::uint64_t>(delta * 100));
    std::vector<std::size_t> hist(cells + 2, 0);
    for (std::size_t k = 0; k < kHypoexpDraws; ++k) {
      const double v = delta * rng.exponential() + (1.0 - delta) * rng.exponential();
      // count of draws <= grid point g is the prefix sum up to g
      const double c = std::ceil(v / step);
      ++hist[c > static_cast<double>(cells) ? cells + 1 : static_cast<std::size_t>(c)];
    }
    std::size_t below = 0;
    for (std::size_t g = 0; g <= cells; ++g) {
      below += hist[g];
      const double emp = static_cast<double>(below) / static_cast<double>(kHypoexpDraws);
      worst = std::max(worst, std::abs(emp - hypoexp_cdf(step * static_cast<double>(g), delta)));
    }
  }
  return {worst < kHypoexpSupTol, fmt("max sup-norm error ", worst, " (tol ", kHypoexpSupTol, ")")};
}

// Pooled chi over all site pairs of an HW model whose GP part is pure nugget.
double hw_chi(double delta) {
  std::vector<Point2> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({0.1 * i, 0.0});
  SpatialParams p = tied_params(delta, 0.2, 1.0, 0.0);
  ProcessSimulator sim(pts, p, ModelVariant::hw);
  std::vector<double> u(pts.size());
  ExceedanceCounts c;
  const double n = static_cast<double>(pts.size());
  for (std::size_t k = 0; k < kHwReplicates; ++k) {
    Rng rng(31, k);
    sim.draw_u(rng, u);
    double hits = 0.0;
    for (double v : u) hits += v > kHwLevel;
    c.joint += hits * (hits - 1.0);
    c.conditioning += hits * (n - 1.0);
  }
  return c.chi();
}

Outcome shared_r_tail_limit() {
  const double strong = hw_chi(0.8);
  const double weak = hw_chi(0.2);
  const double target = chi_shared_r_limit(0.8);
  const bool ok = std::abs(strong - target) <= kHwTol && weak < kHwWeakMax;
  return {ok, fmt("chi(delta=0.8) ", strong, " vs ", target, " (tol ", kHwTol, "); chi(delta=0.2) ", weak,
                  " (max ", kHwWeakMax, ")")};
}

Outcome brown_resnick_correctness() {
  const double rho = 0.2;
  const std::vector<double> lags{0.05, 0.1, 0.2, 0.4, 0.8};
  std::vector<Point2> pts{{0.0, 0.0}};
  for (double h : lags) pts.push_back({h, 0.0});
  for (int i = 0; i < 4; ++i) pts.push_back({0.15 * i, 0.3});
  BrownResnickSampler br(pts, rho, 1.0);
  const std::size_t n = pts.size();
  std::vector<std::vector<double>> z(n, std::vector<double>(kBrFields));
  std::vector<double> f(n);
  for (std::size_t k = 0; k < kBrFields; ++k) {
    Rng rng(47, k);
    br.draw(rng, f);
    for (std::size_t i = 0; i < n; ++i) z[i][k] = f[i];
  }
  double worst = 0.0;
  for (std::size_t l = 0; l < lags.size(); ++l) {
    double s = 0.0;
    for (std::size_t k = 0; k < kBrFields; ++k) s += 1.0 / std::max(z[0][k], z[l + 1][k]);
    const double est = static_cast<double>(kBrFields) / s;
    worst = std::max(worst, std::abs(est - br_extremal_coefficient(lags[l], rho, 1.0)));
  }
  double min_p = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    min_p = std::min(min_p, ks_test(z[i], [](double x) { return std::exp(-1.0 / x); }).p_value);
  }
  const bool ok = worst <= kBrTol && min_p > kBrKsLevel;
  return {ok, fmt("max |theta_hat - theta| ", worst, " (tol ", kBrTol, "); min KS p over sites ", min_p, " (level ",
                  kBrKsLevel, ")")};
}

Outcome independence_exceedance() {
  std::vector<Point2> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({0.07 * i, 0.03 * i});
  std::vector<double> u(10, 0.9);
  const double p = joint_exceedance_probability(pts, ModelVariant::independent, SpatialParams{}, u, 0, 1);
  const bool ok = p > kIndepTarget / kIndepFactor && p < kIndepTarget * kIndepFactor;
  return {ok, fmt("p = ", p, " (target ", kIndepTarget, ", factor ", kIndepFactor, ")")};
}

}  // namespace

std::vector<Criterion> margin_criteria() {
  return {
      {1, "hypoexponential margin vs Monte Carlo", false, hypoexponential_margin},
      {2, "shared-R tail limit", false, shared_r_tail_limit},
      {3, "Brown-Resnick extremal coefficient and margins", false, brown_resnick_correctness},
      {9, "independence joint exceedance", false, independence_exceedance},
  };
}

}  // namespace pmm::acceptance
