#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "price/catalog.hpp"

namespace price {

enum class SchemaShape : std::uint8_t { chain, star, cycle, tree };

std::string_view to_string(SchemaShape shape);
SchemaShape parse_schema_shape(std::string_view text);

/// Knobs for a generated database. Every table carries a latent per-row score
/// that drives its attributes and its foreign-key choices, so attributes are
/// correlated within a table, across joins, and with join fanout.
struct SyntheticOptions {
  std::string name = "synthetic";
  SchemaShape shape = SchemaShape::chain;
  std::size_t tables = 3;
  std::size_t rows = 1000;        // mean rows per table
  double correlation = 0.8;       // 0 = independent attributes, 1 = deterministic
  double skew = 2.0;              // >= 1; fanout concentrates on low parent ids as it grows
  double null_fraction = 0.0;     // share of nulls in non-key attributes
  std::size_t continuous_attributes = 2;
  std::size_t categorical_attributes = 1;
  std::uint64_t seed = 42;
};

/// Builds the schema and loads generated rows. Tables are named t0..t{n-1};
/// each has `id` (only when referenced), continuous `x0, x1, ...`,
/// categorical `c0, c1, ...`, and one `<parent>_id` column per foreign key.
Catalog generate_synthetic(const SyntheticOptions& options);

/// Writes `schema.json` and one CSV per table into `dir`.
void write_database(const Catalog& catalog, const std::filesystem::path& dir);

}  // namespace price
