#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace bt {

/// Lowercase hex SHA-256 of a byte buffer.
std::string sha256_hex(std::span<const std::uint8_t> bytes);

/// Lowercase hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace bt
