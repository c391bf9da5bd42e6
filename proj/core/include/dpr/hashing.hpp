#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace dpr {

/// 64-bit FNV-1a over raw bytes (offset basis 14695981039346656037,
/// prime 1099511628211). This is the tokenizer's term hash.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 of a byte range.
Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view bytes);

/// SHA-256 of a file's full contents.
Digest sha256_file(const std::string& path);

std::string to_hex(const Digest& digest);

}  // namespace dpr
