#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "price/catalog.hpp"

namespace price {

inline constexpr std::int64_t kNullKey = std::numeric_limits<std::int64_t>::min();

/// Maps the two sides of an equi-join into one comparable key space. Null rows
/// become kNullKey, which never matches anything. Categorical keys of the
/// right column are translated through the left column's dictionary.
std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> encode_join_keys(const ColumnData& left,
                                                                                 const ColumnData& right);

}  // namespace price
