#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace price {

enum class CompareOp : std::uint8_t { lt, le, gt, ge, eq };

std::string_view to_string(CompareOp op);
std::optional<CompareOp> parse_compare_op(std::string_view text);

}  // namespace price
