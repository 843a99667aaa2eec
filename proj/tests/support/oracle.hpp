#pragma once

#include <cstdint>

#include "price/catalog.hpp"
#include "price/eval.hpp"
#include "price/query.hpp"

namespace price::testing {

/// COUNT(*) by enumerating tuple combinations. Join keys are compared by
/// their rendered text and predicates are evaluated row by row, so this
/// shares nothing with the hash-join executor beyond the parsed query.
std::uint64_t nested_loop_cardinality(const QuerySpec& query, const Catalog& catalog);

/// Minimum plan cost over every binary join tree without cross products,
/// found by plain recursion over all splits (no memoization, no pruning).
double brute_force_min_cost(const QuerySpec& query, const Catalog& catalog, const CardMap& cards);

}  // namespace price::testing
