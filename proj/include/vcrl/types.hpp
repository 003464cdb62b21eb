#pragma once

#include <cstdint>
#include <string>
#include <type_traits>

namespace vcrl {

// Stable identifier of a training query.
enum class QueryId : std::uint32_t {};

constexpr std::uint32_t to_index(QueryId id) noexcept {
  return static_cast<std::underlying_type_t<QueryId>>(id);
}

inline std::string to_string(QueryId id) { return "q" + std::to_string(to_index(id)); }

}  // namespace vcrl
