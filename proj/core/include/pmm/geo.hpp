#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pmm {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Point2& a, const Point2& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

enum class ProjectionMode {
  planar,             // coordinates already in km on a plane
  equirectangular_km  // (lon, lat) degrees, projected about the centroid latitude
};

// Sites with coordinates rescaled onto the unit square. `scale` converts a
// unit-square distance back to km (or to the planar input units).
struct SiteSet {
  std::vector<std::string> ids;
  std::vector<Point2> raw;
  std::vector<Point2> scaled;
  double scale = 1.0;

  std::size_t size() const { return scaled.size(); }

  // Coordinates that already live in [0,1]^2 (simulation studies); no rescale.
  static SiteSet unit_square(std::span<const Point2> points, std::vector<std::string> ids = {});
};

// Affine, aspect-preserving map into [0,1]^2: the longer axis spans [0,1].
// Requires at least two distinct sites.
SiteSet project_and_scale(std::span<const Point2> raw, ProjectionMode mode,
                          std::vector<std::string> ids = {});

// Site indices sorted by distance from (0,0) on the scaled coordinates,
// ties resolved by the lower original index.
std::vector<std::size_t> order_sites(const SiteSet& sites);

// Vecchia conditioning structure. All indices inside `neighbors` and
// `dependents` are positions in the ordering, not site indices.
struct NeighborGraph {
  std::vector<std::size_t> order;                     // order[pos] = site index
  std::vector<std::size_t> position;                  // position[site] = pos
  std::vector<std::vector<std::size_t>> neighbors;    // N_pos, nearest first
  std::vector<std::vector<std::size_t>> dependents;   // {j : pos in N_j}
  std::size_t max_neighbors = 0;

  std::size_t size() const { return order.size(); }
};

NeighborGraph build_neighbor_sets(const SiteSet& sites, std::span<const std::size_t> ordering,
                                  std::size_t max_neighbors);

}  // namespace pmm
