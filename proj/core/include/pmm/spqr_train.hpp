#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pmm/geo.hpp"
#include "pmm/procsim.hpp"
#include "pmm/spqr_model.hpp"

namespace pmm {

// Independent uniform ranges for the components of theta^SPAT.
struct DesignDistribution {
  double delta_lo = 0.0, delta_hi = 1.0;
  double rho_lo = 0.0, rho_hi = 0.5;
  double r_lo = 0.0, r_hi = 1.0;

  void validate() const;
  // Natural-scale draw in model.components() order.
  std::vector<double> draw(const SpatialModel& model, Rng& rng) const;
};

struct TrainConfig {
  std::size_t samples = 100000;
  std::size_t batch = 100;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  double validation = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<std::size_t> hidden{30, 15};
  Activation activation = Activation::relu;
  std::size_t knots = 15;
  int degree = 3;
  NeighborScale scale = NeighborScale::uniform;
  std::size_t ensemble = 1;
  bool standardize = true;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainingData {
  Eigen::MatrixXd x;  // width x N raw features
  std::vector<double> u;
};

struct TrainReport {
  std::vector<double> train_loss;  // per epoch, full training set
  std::vector<double> valid_loss;
  std::size_t best_epoch = 0;      // 1-based
  double best_valid = 0.0;
  std::size_t clamped = 0;
  double seconds = 0.0;
};

FeatureLayout local_layout(const SpatialModel& model, std::size_t neighbors, NeighborScale scale);
FeatureLayout global_layout(const SpatialModel& model, std::size_t max_neighbors, NeighborScale scale);

// Synthetic (features, u) pairs for ordered position pos: theta ~ design,
// the variant simulated at the site and its conditioning set.
TrainingData generate_local_training_data(const SiteSet& sites, const NeighborGraph& graph,
                                          std::size_t pos, const SpatialModel& model,
                                          const DesignDistribution& design,
                                          const FeatureLayout& layout, std::size_t samples,
                                          std::uint64_t seed, unsigned threads = 1);
// Random target position per draw, padded slots filled with fresh uniforms.
TrainingData generate_global_training_data(const SiteSet& sites, const NeighborGraph& graph,
                                           const SpatialModel& model,
                                           const DesignDistribution& design,
                                           const FeatureLayout& layout, std::size_t samples,
                                           std::uint64_t seed, unsigned threads = 1);

// Adam on mini-batches, best validation checkpoint. Throws NumericError if the
// loss stops being finite.
SpqrModel fit_spqr(const TrainingData& data, const FeatureLayout& layout,
                   const TrainConfig& config, TrainReport* report = nullptr);

SpqrModel train_local(const SiteSet& sites, const NeighborGraph& graph, std::size_t pos,
                      const SpatialModel& model, const DesignDistribution& design,
                      const TrainConfig& config, TrainReport* report = nullptr,
                      unsigned threads = 1);
SpqrModel train_global(const SiteSet& sites, const NeighborGraph& graph,
                       const SpatialModel& model, const DesignDistribution& design,
                       const TrainConfig& config, TrainReport* report = nullptr,
                       unsigned threads = 1);

// One local model per ordered position >= 1 (slot 0 stays empty), trained in
// parallel over positions. Position p uses seed stream (config.seed, p).
std::vector<SpqrModel> train_all_local(const SiteSet& sites, const NeighborGraph& graph,
                                       const SpatialModel& model,
                                       const DesignDistribution& design,
                                       const TrainConfig& config, unsigned threads = 1,
                                       std::vector<TrainReport>* reports = nullptr);

}  // namespace pmm
