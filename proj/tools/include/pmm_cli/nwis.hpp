#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pmm_cli/dataset_io.hpp"

namespace pmm::cli {

inline constexpr double kCubicFeetToCubicMetres = 0.0283168;
inline constexpr const char* kNwisCacheEnv = "PMM_NWIS_CACHE";

struct DailyValue {
  std::string date;  // YYYY-MM-DD
  double cfs = 0.0;
};

struct NwisSeries {
  std::string site_id;
  double lon = 0.0;
  double lat = 0.0;
  std::vector<DailyValue> values;  // no-data entries already dropped
};

// Daily-values JSON (format=json) -> one series per time series block.
std::vector<NwisSeries> parse_nwis_json(const std::string& body);

// Calendar-year maxima in m^3/s for first_year..last_year. A year with fewer
// than min_days valid values, or a nonpositive maximum, is written as missing.
std::vector<StationRecord> annual_maxima(const NwisSeries& series, int first_year, int last_year,
                                         std::size_t min_days = 300);

// GET url -> body; throws std::runtime_error on transport or HTTP failure.
using Transport = std::function<std::string(const std::string& url)>;
// HTTPS via cpp-httplib; throws if the build has no TLS support.
Transport https_transport();
bool https_available();

std::string nwis_url(const std::string& site, const std::string& start, const std::string& end);

struct FetchOptions {
  std::filesystem::path cache_dir;  // empty: default_cache_dir()
  bool offline = false;             // cache only
  std::size_t min_days = 300;
  Transport transport;              // empty: https_transport()
};

struct SiteError {
  std::string site_id;
  std::string message;
};

struct FetchResult {
  std::vector<StationRecord> records;
  std::vector<SiteError> errors;
  bool partial() const { return !errors.empty(); }
};

// $PMM_NWIS_CACHE, else ./nwis_cache
std::filesystem::path default_cache_dir();

// One request per site, dates as YYYY-MM-DD. Raw responses are cached under
// the SHA-256 of the request URL. Failing sites are listed in `errors`.
FetchResult fetch_nwis(const std::vector<std::string>& sites, const std::string& start,
                       const std::string& end, const FetchOptions& options);

}  // namespace pmm::cli
