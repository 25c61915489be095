#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace futuregan::fileio {

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
/// Creates missing parent directories.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a.
constexpr uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t value);

void put_u64(std::string& out, uint64_t value);
uint64_t get_u64(std::string_view in, size_t offset);

}  // namespace futuregan::fileio
