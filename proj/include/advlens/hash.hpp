#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace advlens {

/// 64-bit FNV-1a; used for content fingerprints, not security.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);
std::string hash_file(const std::filesystem::path& path);

}  // namespace advlens
