#include "pmm_cli/nwis.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "pmm/error.hpp"
#include "pmm_cli/digest.hpp"

namespace pmm::cli {
namespace {

using nlohmann::json;

double value_of(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (end != s.c_str() && *end == '\0') return d;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& p, const std::string& body) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write cache file " + tmp.string());
    out << body;
  }
  std::filesystem::rename(tmp, p);
}

bool valid_date(const std::string& d) {
  return d.size() == 10 && d[4] == '-' && d[7] == '-';
}

}  // namespace

std::vector<NwisSeries> parse_nwis_json(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed NWIS response: ") + e.what());
  }
  std::vector<NwisSeries> out;
  const auto ts = doc.find("value");
  if (ts == doc.end() || !ts->contains("timeSeries")) {
    throw std::runtime_error("NWIS response has no value.timeSeries");
  }
  for (const auto& s : (*ts)["timeSeries"]) {
    NwisSeries series;
    const auto& info = s.at("sourceInfo");
    series.site_id = info.at("siteCode").at(0).at("value").get<std::string>();
    const auto& geo = info.at("geoLocation").at("geogLocation");
    series.lat = value_of(geo.at("latitude"));
    series.lon = value_of(geo.at("longitude"));
    double no_data = -999999.0;
    if (s.contains("variable") && s["variable"].contains("noDataValue") && !s["variable"]["noDataValue"].is_null()) {
      no_data = value_of(s["variable"]["noDataValue"]);
    }
    for (const auto& block : s.at("values")) {
      for (const auto& v : block.at("value")) {
        const double cfs = value_of(v.at("value"));
        if (!std::isfinite(cfs) || cfs == no_data || cfs < 0.0) continue;
        const auto stamp = v.at("dateTime").get<std::string>();
        series.values.push_back({stamp.substr(0, 10), cfs});
      }
    }
    out.push_back(std::move(series));
  }
  return out;
}

std::vector<StationRecord> annual_maxima(const NwisSeries& series, int first_year, int last_year,
                                         std::size_t min_days) {
  std::map<int, std::pair<std::size_t, double>> per_year;
  for (const auto& v : series.values) {
    const int year = std::stoi(v.date.substr(0, 4));
    auto& [count, peak] = per_year[year];
    if (count == 0 || v.cfs > peak) peak = v.cfs;
    ++count;
  }
  std::vector<StationRecord> out;
  for (int y = first_year; y <= last_year; ++y) {
    StationRecord r{series.site_id, series.lon, series.lat, y, std::numeric_limits<double>::quiet_NaN()};
    const auto it = per_year.find(y);
    if (it != per_year.end() && it->second.first >= min_days && it->second.second > 0.0) {
      r.annual_max_cms = it->second.second * kCubicFeetToCubicMetres;
    }
    out.push_back(r);
  }
  return out;
}

std::string nwis_url(const std::string& site, const std::string& start, const std::string& end) {
  return "https://waterservices.usgs.gov/nwis/dv/?format=json&sites=" + site +
         "&startDT=" + start + "&endDT=" + end + "&parameterCd=00060&statCd=00003&siteStatus=all";
}

std::filesystem::path default_cache_dir() {
  if (const char* env = std::getenv(kNwisCacheEnv); env && *env) return env;
  return "nwis_cache";
}

FetchResult fetch_nwis(const std::vector<std::string>& sites, const std::string& start,
                       const std::string& end, const FetchOptions& options) {
  require(valid_date(start) && valid_date(end), "dates must be YYYY-MM-DD");
  require(start <= end, "start date after end date");
  require(!sites.empty(), "no site ids given");
  const int first_year = std::stoi(start.substr(0, 4));
  const int last_year = std::stoi(end.substr(0, 4));
  const auto cache = options.cache_dir.empty() ? default_cache_dir() : options.cache_dir;
  std::filesystem::create_directories(cache);

  FetchResult result;
  for (const auto& site : sites) {
    const auto url = nwis_url(site, start, end);
    const auto path = cache / (sha256_hex(url) + ".json");
    try {
      std::string body;
      if (std::filesystem::exists(path)) {
        body = read_file(path);
      } else if (options.offline) {
        throw std::runtime_error("not in cache (offline mode)");
      } else {
        body = options.transport ? options.transport(url) : https_transport()(url);
        parse_nwis_json(body);  // only cache responses that parse
        write_file_atomic(path, body);
      }
      const auto series = parse_nwis_json(body);
      const NwisSeries* match = nullptr;
      for (const auto& s : series) {
        if (s.site_id == site) match = &s;
      }
      if (!match) throw std::runtime_error("no discharge series in response");
      if (match->values.empty()) throw std::runtime_error("series has no valid daily values");
      auto rows = annual_maxima(*match, first_year, last_year, options.min_days);
      result.records.insert(result.records.end(), rows.begin(), rows.end());
    } catch (const std::exception& e) {
      result.errors.push_back({site, e.what()});
    }
  }
  return result;
}

}  // namespace pmm::cli
