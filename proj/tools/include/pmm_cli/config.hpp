#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace pmm::cli {

// key = value pairs by section; "" holds keys before the first section.
// '#' and ';' start comments. Dotted section names ([spqr.inspect]) are kept as is.
struct IniFile {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
};

IniFile parse_ini(std::istream& in, const std::string& source = "config");
IniFile read_ini(const std::filesystem::path& path);

}  // namespace pmm::cli
