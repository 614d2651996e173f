#include "pmm_cli/config.hpp"

#include <fstream>
#include <istream>

#include "pmm/error.hpp"

namespace pmm::cli {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (!quoted && (s[i] == '#' || s[i] == ';')) return s.substr(0, i);
  }
  return s;
}

}  // namespace

IniFile parse_ini(std::istream& in, const std::string& source) {
  IniFile ini;
  std::string section;
  ini.sections[section];
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto s = trim(strip_comment(raw));
    if (s.empty()) continue;
    const auto where = source + ":" + std::to_string(line) + ": ";
    if (s.front() == '[') {
      if (s.back() != ']') throw InvalidArgument(where + "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) throw InvalidArgument(where + "empty section name");
      ini.sections[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InvalidArgument(where + "expected key = value");
    auto key = trim(s.substr(0, eq));
    auto value = trim(s.substr(eq + 1));
    if (key.empty()) throw InvalidArgument(where + "empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    for (auto& c : key) {
      if (c == '_') c = '-';
    }
    auto& entries = ini.sections[section];
    for (const auto& [k, v] : entries) {
      if (k == key) throw InvalidArgument(where + "duplicate key '" + key + "'");
    }
    entries.emplace_back(key, value);
  }
  return ini;
}

IniFile read_ini(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file " + path.string());
  return parse_ini(in, path.string());
}

}  // namespace pmm::cli
