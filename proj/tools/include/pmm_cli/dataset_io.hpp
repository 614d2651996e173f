#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pmm/geo.hpp"
#include "pmm/surrogate.hpp"

namespace pmm::cli {

// One row of the station CSV: site_id,lon,lat,year,annual_max_cms
struct StationRecord {
  std::string site_id;
  double lon = 0.0;
  double lat = 0.0;
  int year = 0;
  double annual_max_cms = 0.0;  // NaN when the year is missing
};

enum class Coordinates {
  lonlat,  // degrees, projected about the centroid latitude
  planar,  // already planar (km or any common unit)
  unit,    // already on the unit square, used as is
};
Coordinates parse_coordinates(const std::string& name);
std::string to_string(Coordinates c);

// Box-Cox family: power 0 is log, otherwise (y^p - 1) / p.
struct PowerTransform {
  double power = 0.0;
  double forward(double flow) const;
  double inverse(double y) const;
};

struct IngestOptions {
  PowerTransform transform;
  Coordinates coordinates = Coordinates::lonlat;
  std::optional<double> censor_threshold;  // on the transformed scale
};

struct IngestReport {
  std::size_t rows = 0;
  std::size_t missing_cells = 0;
  std::vector<std::size_t> missing_per_site;
};

// Rows of the station CSV; throws InvalidArgument with the row number for
// malformed rows, duplicates and nonpositive flows.
std::vector<StationRecord> read_station_csv(std::istream& in);
void write_station_csv(std::ostream& out, const std::vector<StationRecord>& rows);

// Sites in first-seen order; years span the observed minimum to maximum.
Dataset build_dataset(const std::vector<StationRecord>& rows, const IngestOptions& options,
                      IngestReport* report = nullptr);
Dataset ingest_csv(const std::filesystem::path& path, const IngestOptions& options,
                   IngestReport* report = nullptr);

// Back to flows through the inverse transform; missing cells are skipped,
// censored cells are written at the threshold.
std::vector<StationRecord> to_records(const Dataset& data, const PowerTransform& transform);
void export_csv(const std::filesystem::path& path, const Dataset& data,
                const PowerTransform& transform);

}  // namespace pmm::cli
