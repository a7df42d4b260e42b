#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace passdoor {

/// Hex SHA-256 of a byte string; used for config hashes and
/// content-addressed stage directories.
std::string sha256_hex(std::string_view data);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace passdoor
