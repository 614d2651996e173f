#include "pmm_cli/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "pmm/error.hpp"

namespace pmm::cli {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kHeader = "site_id,lon,lat,year,annual_max_cms";

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string row_error(std::size_t row, const std::string& what) {
  return "row " + std::to_string(row) + ": " + what;
}

double parse_double(const std::string& s, std::size_t row, const char* column) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw InvalidArgument(row_error(row, std::string("cannot parse ") + column + " '" + s + "'"));
  }
  return v;
}

bool is_missing_token(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan"; }

}  // namespace

Coordinates parse_coordinates(const std::string& name) {
  if (name == "lonlat") return Coordinates::lonlat;
  if (name == "planar") return Coordinates::planar;
  if (name == "unit") return Coordinates::unit;
  throw InvalidArgument("unknown coordinate mode '" + name + "' (lonlat, planar, unit)");
}

std::string to_string(Coordinates c) {
  switch (c) {
    case Coordinates::lonlat: return "lonlat";
    case Coordinates::planar: return "planar";
    case Coordinates::unit: return "unit";
  }
  return "lonlat";
}

double PowerTransform::forward(double flow) const {
  if (power == 0.0) return std::log(flow);
  return (std::pow(flow, power) - 1.0) / power;
}

double PowerTransform::inverse(double y) const {
  if (power == 0.0) return std::exp(y);
  return std::pow(power * y + 1.0, 1.0 / power);
}

std::vector<StationRecord> read_station_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("empty station file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (trim(line) != kHeader) {
    throw InvalidArgument(std::string("station file header must be '") + kHeader + "'");
  }
  std::vector<StationRecord> rows;
  std::set<std::pair<std::string, int>> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto f = split(line);
    if (f.size() != 5) throw InvalidArgument(row_error(row, "expected 5 fields"));
    for (auto& s : f) s = trim(s);
    StationRecord r;
    r.site_id = f[0];
    if (r.site_id.empty()) throw InvalidArgument(row_error(row, "empty site_id"));
    r.lon = parse_double(f[1], row, "lon");
    r.lat = parse_double(f[2], row, "lat");
    const double year = parse_double(f[3], row, "year");
    if (year != std::floor(year)) throw InvalidArgument(row_error(row, "year must be an integer"));
    r.year = static_cast<int>(year);
    if (is_missing_token(f[4])) {
      r.annual_max_cms = kNaN;
    } else {
      r.annual_max_cms = parse_double(f[4], row, "annual_max_cms");
      if (!(r.annual_max_cms > 0.0)) {
        throw InvalidArgument(row_error(row, "nonpositive flow " + f[4] + " at site " + r.site_id));
      }
    }
    if (!seen.insert({r.site_id, r.year}).second) {
      throw InvalidArgument(row_error(row, "duplicate (site, year) " + r.site_id + ", " + f[3]));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

// Shortest text that reads back to the same double.
std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

void write_station_csv(std::ostream& out, const std::vector<StationRecord>& rows) {
  out << kHeader << '\n';
  for (const auto& r : rows) {
    out << r.site_id << ',' << shortest(r.lon) << ',' << shortest(r.lat) << ',' << r.year << ',';
    if (std::isfinite(r.annual_max_cms)) out << shortest(r.annual_max_cms);
    out << '\n';
  }
}

Dataset build_dataset(const std::vector<StationRecord>& rows, const IngestOptions& options,
                      IngestReport* report) {
  require(!rows.empty(), "no station rows");
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> index;
  std::vector<Point2> coords;
  int y0 = rows.front().year, y1 = rows.front().year;
  for (const auto& r : rows) {
    auto [it, fresh] = index.emplace(r.site_id, ids.size());
    if (fresh) {
      ids.push_back(r.site_id);
      coords.push_back({r.lon, r.lat});
    } else if (coords[it->second].x != r.lon || coords[it->second].y != r.lat) {
      throw InvalidArgument("site " + r.site_id + " has inconsistent coordinates");
    }
    y0 = std::min(y0, r.year);
    y1 = std::max(y1, r.year);
  }

  SiteSet sites;
  switch (options.coordinates) {
    case Coordinates::lonlat:
      sites = project_and_scale(coords, ProjectionMode::equirectangular_km, ids);
      break;
    case Coordinates::planar:
      sites = project_and_scale(coords, ProjectionMode::planar, ids);
      break;
    case Coordinates::unit:
      for (const auto& p : coords) {
        require(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0,
                "unit coordinates must lie in [0,1]^2");
      }
      sites = SiteSet::unit_square(coords, ids);
      break;
  }

  std::vector<int> years;
  for (int y = y0; y <= y1; ++y) years.push_back(y);
  const auto n = ids.size();
  const auto T = years.size();
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(T), kNaN);
  for (const auto& r : rows) {
    if (std::isfinite(r.annual_max_cms)) {
      y(static_cast<Eigen::Index>(index[r.site_id]), r.year - y0) = options.transform.forward(r.annual_max_cms);
    }
  }

  Dataset d;
  d.sites = std::move(sites);
  d.years = std::move(years);
  d.y = y;
  d.status.assign(n * T, CellStatus::observed);
  IngestReport rep;
  rep.rows = rows.size();
  rep.missing_per_site.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      if (!std::isfinite(y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)))) {
        d.set_missing(i, t);
        ++rep.missing_cells;
        ++rep.missing_per_site[i];
      }
    }
  }
  if (options.censor_threshold) d.apply_censoring(*options.censor_threshold);
  d.validate();
  if (report) *report = std::move(rep);
  return d;
}

Dataset ingest_csv(const std::filesystem::path& path, const IngestOptions& options,
                   IngestReport* report) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  return build_dataset(read_station_csv(in), options, report);
}

std::vector<StationRecord> to_records(const Dataset& data, const PowerTransform& transform) {
  std::vector<StationRecord> rows;
  for (std::size_t i = 0; i < data.n_sites(); ++i) {
    for (std::size_t t = 0; t < data.n_years(); ++t) {
      if (data.cell(i, t) == CellStatus::missing) continue;
      rows.push_back({data.sites.ids[i], data.sites.raw[i].x, data.sites.raw[i].y, data.years[t],
                      transform.inverse(data.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)))});
    }
  }
  return rows;
}

void export_csv(const std::filesystem::path& path, const Dataset& data,
                const PowerTransform& transform) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  write_station_csv(out, to_records(data, transform));
}

}  // namespace pmm::cli
