#pragma once

#include <cstdint>
#include <string>

namespace dpr {

enum class PassageId : std::uint64_t {};
enum class QuestionId : std::uint64_t {};
using TokenId = std::uint32_t;

constexpr std::uint64_t value(PassageId id) noexcept {
  return static_cast<std::uint64_t>(id);
}
constexpr std::uint64_t value(QuestionId id) noexcept {
  return static_cast<std::uint64_t>(id);
}

inline std::string to_string(PassageId id) { return std::to_string(value(id)); }
inline std::string to_string(QuestionId id) { return std::to_string(value(id)); }

}  // namespace dpr
