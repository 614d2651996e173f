#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pmm/procsim.hpp"
#include "pmm/spqr_model.hpp"

namespace pmm {

inline constexpr int kSpqrFormatVersion = 1;

// Everything needed to rebuild the conditional densities of one site layout.
// Local bundles hold one model per ordered position (position 0 has no nets);
// global bundles hold a single model.
struct NetBundle {
  bool global = false;
  SpatialModel spatial;
  std::vector<std::string> site_order;  // site ids by ordered position
  std::size_t max_neighbors = 0;
  std::vector<SpqrModel> models;
  std::map<std::string, std::string> meta;
};

void write_bundle(std::ostream& out, const NetBundle& bundle);
NetBundle read_bundle(std::istream& in);
void save_bundle(const std::filesystem::path& path, const NetBundle& bundle);
NetBundle load_bundle(const std::filesystem::path& path);

}  // namespace pmm
