#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace price {

/// Raised for malformed schemas, CSV inputs and snapshot files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AttributeKind : std::uint8_t { categorical, continuous };
enum class JoinKind : std::uint8_t { pk_fk, fk_fk };

std::string_view to_string(AttributeKind kind);
std::string_view to_string(JoinKind kind);

struct AttributeMeta {
  std::string name;
  AttributeKind kind = AttributeKind::continuous;
  std::optional<double> min;
  std::optional<double> max;
};

struct TableMeta {
  std::string name;
  std::vector<AttributeMeta> attributes;
  std::uint64_t row_count = 0;

  std::optional<std::size_t> find_attribute(std::string_view attribute) const;
};

/// Resolved (table, attribute) position inside a catalog.
struct ColumnId {
  std::size_t table = 0;
  std::size_t attribute = 0;

  friend bool operator==(const ColumnId&, const ColumnId&) = default;
  friend auto operator<=>(const ColumnId&, const ColumnId&) = default;
};

struct JoinEdge {
  ColumnId left;
  ColumnId right;
  JoinKind kind = JoinKind::pk_fk;
};

/// Typed storage for one attribute. Continuous values live in `numbers`,
/// categorical values are dictionary codes (first appearance order) in `codes`.
class ColumnData {
 public:
  ColumnData() = default;
  ColumnData(std::string table, std::string attribute, AttributeKind kind);

  const std::string& table() const { return table_; }
  const std::string& attribute() const { return attribute_; }
  AttributeKind kind() const { return kind_; }

  std::size_t size() const { return nulls_.size(); }
  bool is_null(std::size_t row) const { return nulls_[row] != 0; }
  double number(std::size_t row) const { return numbers_[row]; }
  std::int32_t code(std::size_t row) const { return codes_[row]; }

  const std::vector<double>& numbers() const { return numbers_; }
  const std::vector<std::int32_t>& codes() const { return codes_; }
  const std::vector<std::uint8_t>& null_mask() const { return nulls_; }
  const std::vector<std::string>& dictionary() const { return dictionary_; }
  std::size_t distinct_count() const { return dictionary_.size(); }
  std::size_t null_count() const;
  /// Observed [min, max] over non-null continuous values; nullopt when there are none.
  std::optional<std::pair<double, double>> observed_range() const;

  /// Code of a categorical literal, or nullopt when it was never observed.
  std::optional<std::int32_t> lookup(std::string_view value) const;

  void append_null();
  void append_number(double value);
  /// Appends a categorical value, assigning the next dense code on first sight.
  std::int32_t append_category(std::string_view value);
  /// Raw append used when restoring snapshots; codes must already be dense.
  void restore(std::vector<double> numbers, std::vector<std::int32_t> codes, std::vector<std::uint8_t> nulls,
               std::vector<std::string> dictionary);

  /// Text form of a row as it would appear in CSV (empty for null).
  std::string render(std::size_t row) const;

 private:
  std::string table_;
  std::string attribute_;
  AttributeKind kind_ = AttributeKind::continuous;
  std::vector<double> numbers_;
  std::vector<std::int32_t> codes_;
  std::vector<std::uint8_t> nulls_;
  std::vector<std::string> dictionary_;
  std::unordered_map<std::string, std::int32_t> dictionary_index_;
  double min_ = 0.0;
  double max_ = 0.0;
  bool has_range_ = false;
};

/// Undirected multigraph over catalog tables. Edge i is catalog join i.
struct JoinGraph {
  std::size_t node_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::vector<std::size_t>> incident;  // node -> edge indices

  std::size_t degree(std::size_t node) const { return incident[node].size(); }
};

class Catalog {
 public:
  Catalog() = default;

  /// Builds and validates a catalog from its schema definition (no data).
  Catalog(std::string name, std::vector<TableMeta> tables, std::vector<JoinEdge> joins);

  const std::string& name() const { return name_; }
  const std::vector<TableMeta>& tables() const { return tables_; }
  const std::vector<JoinEdge>& joins() const { return joins_; }
  const TableMeta& table(std::size_t index) const { return tables_.at(index); }
  const AttributeMeta& attribute(ColumnId column) const;

  std::optional<std::size_t> find_table(std::string_view name) const;
  std::optional<ColumnId> find_column(std::string_view table, std::string_view attribute) const;
  /// "table.attribute"
  std::string qualified_name(ColumnId column) const;

  /// Parses CSV rows for `table` (header row first) into typed columns.
  void ingest_table(std::string_view table, std::istream& csv);
  void ingest_table(std::string_view table, std::vector<ColumnData> columns);
  /// Loads `<dir>/<table>.csv` for every table.
  void ingest_directory(const std::filesystem::path& dir);
  bool is_loaded(std::size_t table) const;

  const ColumnData& column(ColumnId column) const;
  const std::vector<ColumnData>& columns(std::size_t table) const { return columns_.at(table); }

  /// Declared domain, or observed [min, max] when undeclared. Only meaningful
  /// for continuous attributes.
  std::pair<double, double> domain(ColumnId column) const;

  JoinGraph join_graph() const;

  /// Writes the table back as CSV (header + rows).
  void write_table_csv(std::size_t table, std::ostream& out) const;

  /// Binary snapshot: schema plus every loaded column.
  void save_snapshot(const std::filesystem::path& path) const;
  static Catalog load_snapshot(const std::filesystem::path& path);

  /// Schema part of the JSON document accepted by load_schema.
  std::string schema_json() const;

 private:
  void validate() const;

  std::string name_;
  std::vector<TableMeta> tables_;
  std::vector<JoinEdge> joins_;
  std::vector<std::vector<ColumnData>> columns_;
  std::vector<std::uint8_t> loaded_;
};

Catalog parse_schema(std::string_view json_text);
Catalog load_schema(const std::filesystem::path& path);

}  // namespace price
