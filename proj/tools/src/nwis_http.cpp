#include <stdexcept>
#include <string>

#include "pmm_cli/nwis.hpp"

#ifdef PMM_WITH_NWIS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#endif

namespace pmm::cli {

bool https_available() {
#ifdef PMM_WITH_NWIS
  return true;
#else
  return false;
#endif
}

Transport https_transport() {
#ifdef PMM_WITH_NWIS
  return [](const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end + 3);
    if (scheme_end == std::string::npos || path_start == std::string::npos) {
      throw std::runtime_error("malformed url " + url);
    }
    const auto host = url.substr(0, path_start);
    httplib::Client client(host);
    client.set_connection_timeout(30);
    client.set_read_timeout(300);
    client.set_follow_location(true);
    auto res = client.Get(url.substr(path_start));
    if (!res) throw std::runtime_error("HTTP request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw std::runtime_error("HTTP status " + std::to_string(res->status));
    return res->body;
  };
#else
  return [](const std::string&) -> std::string {
    throw std::runtime_error("built without NWIS support (PMM_WITH_NWIS=OFF); use offline mode");
  };
#endif
}

}  // namespace pmm::cli
