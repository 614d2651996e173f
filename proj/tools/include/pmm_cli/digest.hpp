#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace pmm::cli {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace pmm::cli
