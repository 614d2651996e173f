#include "pmm/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <tuple>
#include <utility>

#include "pmm/error.hpp"

namespace pmm {
namespace {

constexpr double kEarthRadiusKm = 6371.0;

std::vector<std::string> default_ids(std::size_t n, std::vector<std::string> ids) {
  if (ids.empty()) {
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i + 1));
  }
  require(ids.size() == n, "site id count does not match coordinate count");
  std::set<std::string> seen(ids.begin(), ids.end());
  require(seen.size() == ids.size(), "site ids must be unique");
  return ids;
}

void check_distinct(std::span<const Point2> points) {
  std::vector<std::pair<double, double>> keys;
  keys.reserve(points.size());
  for (const auto& p : points) {
    require(std::isfinite(p.x) && std::isfinite(p.y), "non-finite site coordinate");
    keys.emplace_back(p.x, p.y);
  }
  std::sort(keys.begin(), keys.end());
  require(std::adjacent_find(keys.begin(), keys.end()) == keys.end(),
          "duplicate site coordinates");
}

}  // namespace

SiteSet SiteSet::unit_square(std::span<const Point2> points, std::vector<std::string> ids) {
  require(!points.empty(), "at least one site is required");
  check_distinct(points);
  for (const auto& p : points) {
    require(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0,
            "unit-square coordinates must lie in [0,1]^2");
  }
  SiteSet s;
  s.ids = default_ids(points.size(), std::move(ids));
  s.raw.assign(points.begin(), points.end());
  s.scaled = s.raw;
  s.scale = 1.0;
  return s;
}

SiteSet project_and_scale(std::span<const Point2> raw, ProjectionMode mode,
                          std::vector<std::string> ids) {
  require(raw.size() >= 2, "scaling needs at least two sites (degenerate extent)");
  check_distinct(raw);

  std::vector<Point2> plane(raw.begin(), raw.end());
  if (mode == ProjectionMode::equirectangular_km) {
    double lat0 = 0.0;
    double lon0 = 0.0;
    for (const auto& p : raw) {
      lon0 += p.x;
      lat0 += p.y;
    }
    lon0 /= static_cast<double>(raw.size());
    lat0 /= static_cast<double>(raw.size());
    const double rad = std::numbers::pi / 180.0;
    const double coslat = std::cos(lat0 * rad);
    for (auto& p : plane) {
      p = {kEarthRadiusKm * (p.x - lon0) * rad * coslat, kEarthRadiusKm * (p.y - lat0) * rad};
    }
  }

  double xmin = plane[0].x, xmax = plane[0].x, ymin = plane[0].y, ymax = plane[0].y;
  for (const auto& p : plane) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double extent = std::max(xmax - xmin, ymax - ymin);
  require(extent > 0.0, "degenerate site extent");

  SiteSet s;
  s.ids = default_ids(raw.size(), std::move(ids));
  s.raw.assign(raw.begin(), raw.end());
  s.scale = extent;
  s.scaled.reserve(plane.size());
  for (const auto& p : plane) {
    s.scaled.push_back({std::clamp((p.x - xmin) / extent, 0.0, 1.0),
                        std::clamp((p.y - ymin) / extent, 0.0, 1.0)});
  }
  return s;
}

std::vector<std::size_t> order_sites(const SiteSet& sites) {
  std::vector<double> d2(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto& p = sites.scaled[i];
    d2[i] = p.x * p.x + p.y * p.y;
  }
  std::vector<std::size_t> order(sites.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return d2[a] < d2[b]; });
  return order;
}

NeighborGraph build_neighbor_sets(const SiteSet& sites, std::span<const std::size_t> ordering,
                                  std::size_t max_neighbors) {
  require(max_neighbors >= 1, "neighbor count m must be at least 1");
  const std::size_t n = sites.size();
  require(ordering.size() == n, "ordering length does not match site count");

  NeighborGraph g;
  g.order.assign(ordering.begin(), ordering.end());
  g.position.assign(n, n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    require(g.order[pos] < n && g.position[g.order[pos]] == n, "ordering is not a permutation");
    g.position[g.order[pos]] = pos;
  }
  g.max_neighbors = max_neighbors;
  g.neighbors.resize(n);
  g.dependents.resize(n);

  std::vector<std::pair<double, std::size_t>> candidates;
  for (std::size_t pos = 1; pos < n; ++pos) {
    const Point2& here = sites.scaled[g.order[pos]];
    candidates.clear();
    for (std::size_t prev = 0; prev < pos; ++prev) {
      candidates.emplace_back(distance(here, sites.scaled[g.order[prev]]), prev);
    }
    const std::size_t k = std::min(pos, max_neighbors);
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end());
    for (std::size_t j = 0; j < k; ++j) {
      g.neighbors[pos].push_back(candidates[j].second);
      g.dependents[candidates[j].second].push_back(pos);
    }
  }
  return g;
}

}  // namespace pmm
