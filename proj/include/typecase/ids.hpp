#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace typecase {

template <class Tag>
struct Id {
  std::int64_t value{};

  constexpr auto operator<=>(const Id&) const = default;
};

using SpreadId = Id<struct SpreadTag>;
using SegmentId = Id<struct SegmentTag>;
using BlockId = Id<struct BlockTag>;

inline std::string entity_ref(SpreadId id) { return "spread:" + std::to_string(id.value); }
inline std::string entity_ref(SegmentId id) { return "segment:" + std::to_string(id.value); }
inline std::string entity_ref(BlockId id) { return "block:" + std::to_string(id.value); }

}  // namespace typecase

template <class Tag>
struct std::hash<typecase::Id<Tag>> {
  std::size_t operator()(const typecase::Id<Tag>& id) const noexcept {
    return std::hash<std::int64_t>{}(id.value);
  }
};
