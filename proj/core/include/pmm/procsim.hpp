#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pmm/geo.hpp"
#include "pmm/rng.hpp"

namespace pmm {

enum class ModelVariant {
  pmm,          // delta*R(s) + (1-delta)*W(s), R a Brown-Resnick process
  hw,           // Huser-Wadsworth: R is one Exp(1) scalar shared by all sites
  msp,          // delta = 1
  gp,           // delta = 0
  independent,  // i.i.d. uniforms, used as a reference model
};

std::string to_string(ModelVariant v);
ModelVariant parse_variant(const std::string& name);

// Spatial dependence parameters of the mixture.
struct SpatialParams {
  double delta = 0.5;
  double rho_w = 0.1;
  double alpha_w = 1.0;
  double rho_r = 0.1;
  double alpha_r = 1.0;
  double r = 1.0;  // spatial variance fraction; 1 - r is the nugget

  void validate() const;
};

// rho_R / rho_W giving equal effective ranges: the GP correlation and the
// Brown-Resnick chi both reach 0.05 at the same lag.
double tied_range_ratio();
SpatialParams tied_params(double delta, double rho, double alpha = 1.0, double r = 1.0);

// The free components of theta^SPAT for a given model.
enum class ThetaComponent { delta, rho, r };
std::string to_string(ThetaComponent c);

struct SpatialModel {
  ModelVariant variant = ModelVariant::pmm;
  double alpha = 1.0;
  bool free_r = false;
  double fixed_r = 1.0;

  std::vector<ThetaComponent> components() const;
  // Natural-scale theta (in components() order) -> tied SpatialParams.
  SpatialParams params(std::span<const double> theta) const;
};

double gp_correlation(double h, double rho_w, double alpha_w, double r);
double br_semivariogram(double h, double rho_r, double alpha_r);
// Pairwise extremal coefficient 2*Phi(sqrt(gamma(h)/2)).
double br_extremal_coefficient(double h, double rho_r, double alpha_r);

// Lower Cholesky factor of a covariance matrix; on failure adds 1e-10, 1e-9,
// ..., 1e-6 to the diagonal before giving up with NumericError.
Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& cov);

// Correlated standard normal draws at fixed sites.
class GaussianFieldSampler {
 public:
  GaussianFieldSampler(std::span<const Point2> points, double rho_w, double alpha_w, double r);
  void draw(Rng& rng, std::span<double> out) const;
  std::size_t size() const { return static_cast<std::size_t>(chol_.rows()); }

 private:
  Eigen::MatrixXd chol_;
};

// Unit-Frechet Brown-Resnick fields at fixed sites.
class BrownResnickSampler {
 public:
  enum class Method {
    exact,      // extremal functions; exact for any number of sites
    truncated,  // first `truncation` Poisson points; biased low far from site 0
  };

  BrownResnickSampler(std::span<const Point2> points, double rho_r, double alpha_r,
                      Method method = Method::exact, std::size_t truncation = 200);
  void draw(Rng& rng, std::span<double> out) const;
  std::size_t size() const { return points_.size(); }

 private:
  // Spectral function tilted at site j: exp(G(x) - gamma(x - x_j)), G(x_j) = 0.
  void spectral(std::size_t j, Rng& rng, std::span<double> out) const;

  std::vector<Point2> points_;
  double rho_r_;
  double alpha_r_;
  Method method_;
  std::size_t truncation_;
  std::vector<Eigen::MatrixXd> chol_;    // per anchor site, over the other sites
  Eigen::MatrixXd drift_;                // drift_(x, j) = gamma(x - x_j)
};

// max{r * R1(s), (1 - r) * R2(s)} with R2 i.i.d. unit Frechet; in place.
void apply_msp_nugget(std::span<double> frechet, double r, Rng& rng);

struct FieldRealization {
  std::vector<double> u;  // G(V), uniform margins
  std::vector<double> v;  // delta*R + (1-delta)*W
  std::vector<double> w;  // Exp(1) GP component
  std::vector<double> r;  // Exp(1) max-stable component
};

// Reusable simulator for one (sites, params, variant) triple.
class ProcessSimulator {
 public:
  ProcessSimulator(std::span<const Point2> points, const SpatialParams& params,
                   ModelVariant variant = ModelVariant::pmm,
                   BrownResnickSampler::Method method = BrownResnickSampler::Method::exact);
  FieldRealization draw(Rng& rng) const;
  // Only U, written into out.
  void draw_u(Rng& rng, std::span<double> out) const;
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  SpatialParams params_;
  ModelVariant variant_;
  double delta_;
  std::vector<GaussianFieldSampler> gp_;
  std::vector<BrownResnickSampler> br_;
};

std::vector<double> simulate_gp(const SiteSet& sites, const SpatialParams& params,
                                std::uint64_t seed, std::uint64_t replicate = 0);
std::vector<double> simulate_brown_resnick(const SiteSet& sites, double rho_r, double alpha_r,
                                           std::uint64_t seed, std::uint64_t replicate = 0);
FieldRealization simulate_pmm(const SiteSet& sites, const SpatialParams& params,
                              std::uint64_t seed, std::uint64_t replicate = 0);
FieldRealization simulate_variant(ModelVariant variant, const SiteSet& sites,
                                  const SpatialParams& params, std::uint64_t seed,
                                  std::uint64_t replicate = 0);

// Independent replicates; replicate k uses stream (seed, k) regardless of
// thread count.
std::vector<FieldRealization> simulate_batch(ModelVariant variant, const SiteSet& sites,
                                             const SpatialParams& params, std::size_t replicates,
                                             std::uint64_t seed, unsigned threads = 1);

// CSV columns: replicate,site_id,U,V,W,R
void write_batch_csv(std::ostream& out, const SiteSet& sites,
                     std::span<const FieldRealization> batch);

}  // namespace pmm
