#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace meetsync {

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
/// Writes `bytes` exactly; throws Error{io} naming the path on failure.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace meetsync
