//===- ids.hpp - Strongly typed identifiers ---------------------*- C++ -*-===//
#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>

namespace deckforge {

/// Small integer identifier tagged by the entity it names, so a loop id can
/// never be passed where a function id is expected.
template <class Tag>
struct Id {
  std::uint32_t value = 0;

  constexpr Id() = default;
  constexpr explicit Id(std::uint32_t v) : value(v) {}

  constexpr auto operator<=>(const Id&) const = default;
};

template <class Tag>
std::ostream& operator<<(std::ostream& os, Id<Tag> id) {
  return os << id.value;
}

using FunctionId = Id<struct FunctionTag>;
using SiteId = Id<struct SiteTag>;
using LoopId = Id<struct LoopTag>;

}  // namespace deckforge

template <class Tag>
struct std::hash<deckforge::Id<Tag>> {
  std::size_t operator()(deckforge::Id<Tag> id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
