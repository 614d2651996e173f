#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "pmm/error.hpp"
#include "pmm/geo.hpp"
#include "pmm/rng.hpp"

using namespace pmm;

TEST_CASE("planar pair scales onto the unit segment") {
  std::vector<Point2> raw{{0, 0}, {10, 0}};
  auto s = project_and_scale(raw, ProjectionMode::planar);
  CHECK(s.scaled[0].x == doctest::Approx(0.0));
  CHECK(s.scaled[1].x == doctest::Approx(1.0));
  CHECK(s.scaled[1].y == doctest::Approx(0.0));
  CHECK(s.scale == doctest::Approx(10.0));
}

TEST_CASE("single site and duplicates are rejected") {
  std::vector<Point2> one{{3, 4}};
  CHECK_THROWS_AS(project_and_scale(one, ProjectionMode::planar), InvalidArgument);
  std::vector<Point2> dup{{1, 1}, {1, 1}, {2, 0}};
  CHECK_THROWS_AS(project_and_scale(dup, ProjectionMode::planar), InvalidArgument);
  std::vector<Point2> bad{{0, 0}, {NAN, 1}};
  CHECK_THROWS_AS(project_and_scale(bad, ProjectionMode::planar), InvalidArgument);
}

TEST_CASE("square corners map to unit square corners") {
  std::vector<Point2> raw{{5, 5}, {12, 5}, {5, 12}, {12, 12}};
  auto s = project_and_scale(raw, ProjectionMode::planar);
  CHECK(s.scale == doctest::Approx(7.0));
  CHECK(s.scaled[3].x == doctest::Approx(1.0));
  CHECK(s.scaled[3].y == doctest::Approx(1.0));
  CHECK(s.scaled[0].x == doctest::Approx(0.0));
}

TEST_CASE("aspect ratio is preserved") {
  std::vector<Point2> raw{{0, 0}, {20, 0}, {0, 5}};
  auto s = project_and_scale(raw, ProjectionMode::planar);
  CHECK(s.scaled[2].y == doctest::Approx(0.25));
  for (auto& p : s.scaled) {
    CHECK(p.x >= 0.0);
    CHECK(p.x <= 1.0);
    CHECK(p.y >= 0.0);
    CHECK(p.y <= 1.0);
  }
}

TEST_CASE("equirectangular projection reports km") {
  // one degree of latitude is about 111 km
  std::vector<Point2> raw{{-100, 40}, {-100, 41}};
  auto s = project_and_scale(raw, ProjectionMode::equirectangular_km);
  CHECK(s.scale == doctest::Approx(111.2).epsilon(0.01));
}

TEST_CASE("sites ordered by distance from the origin") {
  auto s = SiteSet::unit_square(std::vector<Point2>{{0.9, 0.9}, {0.1, 0.1}});
  CHECK(order_sites(s) == std::vector<std::size_t>{1, 0});
  auto tie = SiteSet::unit_square(std::vector<Point2>{{0.3, 0.4}, {0.4, 0.3}});
  CHECK(order_sites(tie) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("ordering matches a brute-force sort") {
  Rng rng(11);
  std::vector<Point2> pts(50);
  for (auto& p : pts) p = {rng.uniform(), rng.uniform()};
  auto s = SiteSet::unit_square(pts);
  auto ord = order_sites(s);
  std::vector<std::size_t> ref(50);
  std::iota(ref.begin(), ref.end(), 0);
  std::stable_sort(ref.begin(), ref.end(), [&](auto a, auto b) {
    return std::hypot(pts[a].x, pts[a].y) < std::hypot(pts[b].x, pts[b].y);
  });
  CHECK(ord == ref);
  CHECK(order_sites(s) == ord);
}

TEST_CASE("neighbour sets hold the nearest earlier sites") {
  Rng rng(5);
  std::vector<Point2> pts(50);
  for (auto& p : pts) p = {rng.uniform(), rng.uniform()};
  auto s = SiteSet::unit_square(pts);
  auto ord = order_sites(s);
  for (std::size_t m : {2u, 15u}) {
    auto g = build_neighbor_sets(s, ord, m);
    CHECK(g.neighbors[0].empty());
    REQUIRE(g.neighbors[1].size() == 1);
    CHECK(g.neighbors[1][0] == 0);
    for (std::size_t i = 1; i < 50; ++i) {
      CHECK(g.neighbors[i].size() == std::min(i, m));
      std::vector<std::size_t> prev(i);
      std::iota(prev.begin(), prev.end(), 0);
      auto d = [&](std::size_t j) { return distance(pts[ord[i]], pts[ord[j]]); };
      std::stable_sort(prev.begin(), prev.end(), [&](auto a, auto b) { return d(a) < d(b); });
      prev.resize(std::min(i, m));
      CHECK(g.neighbors[i] == prev);
    }
    CHECK(g.neighbors[49].size() == std::min<std::size_t>(49, m));
    for (std::size_t i = 0; i < 50; ++i) {
      CHECK(g.order[g.position[i]] == i);
      for (auto j : g.dependents[i]) {
        CHECK(std::find(g.neighbors[j].begin(), g.neighbors[j].end(), i) != g.neighbors[j].end());
      }
    }
  }
}
