#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "price/catalog.hpp"
#include "price/predicate.hpp"

namespace price {

/// Raised for SQL outside the supported subset or names the catalog does not know.
class QueryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `column op value`. Categorical values carry the literal text and its
/// dictionary code (-1 when the literal never occurs in the column).
struct Predicate {
  ColumnId column;
  CompareOp op = CompareOp::eq;
  double value = 0.0;
  std::string literal;

  friend bool operator==(const Predicate&, const Predicate&) = default;
};

/// Canonical conjunctive query: SELECT COUNT(*) FROM tables WHERE joins AND filters.
struct QuerySpec {
  std::vector<std::size_t> tables;  // catalog indices, sorted by table name
  std::vector<std::size_t> joins;   // catalog join indices, canonical order
  std::vector<Predicate> filters;   // sorted by (column name, op, value)
  std::string source_text;

  bool contains_table(std::size_t table) const;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool lower_open = false;
  bool upper_open = false;

  bool empty() const { return lower > upper || (lower == upper && (lower_open || upper_open)); }
  bool contains(double v) const {
    return (lower_open ? v > lower : v >= lower) && (upper_open ? v < upper : v <= upper);
  }
};

/// Constraint region of one attribute after folding all predicates on it.
struct AttributeRegion {
  ColumnId column;
  AttributeKind kind = AttributeKind::continuous;
  bool constrained = false;  // at least one predicate touched it
  bool empty = false;
  Interval interval;               // continuous
  std::optional<std::int64_t> item;  // categorical: single admitted code, nullopt = whole domain
};

using RegionMap = std::map<ColumnId, AttributeRegion>;

QuerySpec parse_query(std::string_view sql, const Catalog& catalog);
/// Canonical SQL text; parse(print(q)) == q.
std::string print_query(const QuerySpec& query, const Catalog& catalog);

/// Region per attribute of every table in the query; unfiltered attributes map to the full domain.
RegionMap canonicalize(const QuerySpec& query, const Catalog& catalog);

/// One sub-query per connected subset of the query's join graph, ordered by
/// size then by table-name list.
std::vector<QuerySpec> sub_queries(const QuerySpec& query, const Catalog& catalog);

/// Sorted, comma-joined table names, e.g. "a,b".
std::string table_set_key(const std::vector<std::size_t>& tables, const Catalog& catalog);

/// Restricts `query` to `tables` (which must be a subset), keeping induced joins and filters.
QuerySpec restrict_query(const QuerySpec& query, const std::vector<std::size_t>& tables, const Catalog& catalog);

/// Sorts tables/joins/filters into canonical order and rebuilds `source_text`.
void normalize_query(QuerySpec& query, const Catalog& catalog);

/// Builds a query over a connected table set using every catalog join among them.
QuerySpec make_query(const Catalog& catalog, std::vector<std::size_t> tables, std::vector<Predicate> filters);

}  // namespace price
