#include "price/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "text.hpp"

namespace price {

namespace {

constexpr std::string_view kSnapshotMagic = "PRICECAT";
constexpr std::uint32_t kSnapshotVersion = 1;

std::pair<std::string_view, std::string_view> split_qualified(std::string_view text) {
  const auto dot = text.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == text.size()) {
    throw DataError("malformed column reference '" + std::string(text) + "', expected table.attribute");
  }
  return {text.substr(0, dot), text.substr(dot + 1)};
}

// Splits one CSV record; handles quoted fields with doubled quotes. Returns
// false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line_number) {
  fields.clear();
  std::string line;
  if (!std::getline(in, line)) return false;
  ++line_number;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  while (true) {
    if (i == line.size()) {
      if (quoted) {
        // Quoted field spans a newline.
        std::string next;
        if (!std::getline(in, next)) throw DataError("unterminated quoted field at line " + std::to_string(line_number));
        ++line_number;
        field.push_back('\n');
        line = std::move(next);
        i = 0;
        continue;
      }
      break;
    }
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r' && i + 1 == line.size()) {
      // CRLF line ending
    } else {
      field.push_back(c);
    }
    ++i;
  }
  fields.push_back(std::move(field));
  return true;
}

std::string csv_escape(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
  std::string out = "\"";
  for (const char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string_view to_string(AttributeKind kind) {
  return kind == AttributeKind::categorical ? "categorical" : "continuous";
}

std::string_view to_string(JoinKind kind) { return kind == JoinKind::pk_fk ? "PK-FK" : "FK-FK"; }

std::optional<std::size_t> TableMeta::find_attribute(std::string_view attribute) const {
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (attributes[i].name == attribute) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// ColumnData

ColumnData::ColumnData(std::string table, std::string attribute, AttributeKind kind)
    : table_(std::move(table)), attribute_(std::move(attribute)), kind_(kind) {}

std::size_t ColumnData::null_count() const {
  return static_cast<std::size_t>(std::count(nulls_.begin(), nulls_.end(), std::uint8_t{1}));
}

std::optional<std::int32_t> ColumnData::lookup(std::string_view value) const {
  const auto it = dictionary_index_.find(std::string(value));
  if (it == dictionary_index_.end()) return std::nullopt;
  return it->second;
}

void ColumnData::append_null() {
  nulls_.push_back(1);
  if (kind_ == AttributeKind::continuous) {
    numbers_.push_back(0.0);
  } else {
    codes_.push_back(-1);
  }
}

void ColumnData::append_number(double value) {
  nulls_.push_back(0);
  numbers_.push_back(value);
  min_ = has_range_ ? std::min(min_, value) : value;
  max_ = has_range_ ? std::max(max_, value) : value;
  has_range_ = true;
}

std::optional<std::pair<double, double>> ColumnData::observed_range() const {
  if (!has_range_) return std::nullopt;
  return std::make_pair(min_, max_);
}

std::int32_t ColumnData::append_category(std::string_view value) {
  auto [it, inserted] = dictionary_index_.try_emplace(std::string(value), static_cast<std::int32_t>(dictionary_.size()));
  if (inserted) dictionary_.emplace_back(value);
  nulls_.push_back(0);
  codes_.push_back(it->second);
  return it->second;
}

void ColumnData::restore(std::vector<double> numbers, std::vector<std::int32_t> codes, std::vector<std::uint8_t> nulls,
                         std::vector<std::string> dictionary) {
  const auto expected = kind_ == AttributeKind::continuous ? numbers.size() : codes.size();
  if (expected != nulls.size()) throw DataError("column " + table_ + "." + attribute_ + ": inconsistent lengths");
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (!nulls[i] && (codes[i] < 0 || static_cast<std::size_t>(codes[i]) >= dictionary.size())) {
      throw DataError("column " + table_ + "." + attribute_ + ": code out of dictionary range");
    }
  }
  numbers_ = std::move(numbers);
  has_range_ = false;
  for (std::size_t i = 0; i < numbers_.size(); ++i) {
    if (nulls[i]) continue;
    min_ = has_range_ ? std::min(min_, numbers_[i]) : numbers_[i];
    max_ = has_range_ ? std::max(max_, numbers_[i]) : numbers_[i];
    has_range_ = true;
  }
  codes_ = std::move(codes);
  nulls_ = std::move(nulls);
  dictionary_ = std::move(dictionary);
  dictionary_index_.clear();
  for (std::size_t i = 0; i < dictionary_.size(); ++i) {
    dictionary_index_.emplace(dictionary_[i], static_cast<std::int32_t>(i));
  }
}

std::string ColumnData::render(std::size_t row) const {
  if (is_null(row)) return {};
  if (kind_ == AttributeKind::continuous) return format_number(numbers_[row]);
  return dictionary_[static_cast<std::size_t>(codes_[row])];
}

// ---------------------------------------------------------------------------
// Catalog

Catalog::Catalog(std::string name, std::vector<TableMeta> tables, std::vector<JoinEdge> joins)
    : name_(std::move(name)), tables_(std::move(tables)), joins_(std::move(joins)) {
  validate();
  columns_.resize(tables_.size());
  loaded_.assign(tables_.size(), 0);
  for (std::size_t t = 0; t < tables_.size(); ++t) {
    for (const auto& attribute : tables_[t].attributes) {
      columns_[t].emplace_back(tables_[t].name, attribute.name, attribute.kind);
    }
  }
}

void Catalog::validate() const {
  for (std::size_t t = 0; t < tables_.size(); ++t) {
    const auto& table = tables_[t];
    if (table.name.empty()) throw DataError("empty table name");
    for (std::size_t u = 0; u < t; ++u) {
      if (tables_[u].name == table.name) throw DataError("duplicate table '" + table.name + "'");
    }
    for (std::size_t a = 0; a < table.attributes.size(); ++a) {
      const auto& attribute = table.attributes[a];
      if (attribute.name.empty()) throw DataError("empty attribute name in table '" + table.name + "'");
      for (std::size_t b = 0; b < a; ++b) {
        if (table.attributes[b].name == attribute.name) {
          throw DataError("duplicate attribute '" + table.name + "." + attribute.name + "'");
        }
      }
      if (attribute.min && attribute.max && *attribute.min > *attribute.max) {
        throw DataError("attribute '" + table.name + "." + attribute.name + "' has min > max");
      }
    }
  }
  for (const auto& join : joins_) {
    for (const auto* side : {&join.left, &join.right}) {
      if (side->table >= tables_.size()) throw DataError("join references unknown table");
      if (side->attribute >= tables_[side->table].attributes.size()) throw DataError("join references unknown attribute");
    }
    if (join.left.table == join.right.table) {
      throw DataError("self-loop join on table '" + tables_[join.left.table].name + "'");
    }
    if (attribute(join.left).kind != attribute(join.right).kind) {
      throw DataError("join " + qualified_name(join.left) + " = " + qualified_name(join.right) +
                      " mixes categorical and continuous attributes");
    }
  }
}

const AttributeMeta& Catalog::attribute(ColumnId column) const {
  return tables_.at(column.table).attributes.at(column.attribute);
}

std::optional<std::size_t> Catalog::find_table(std::string_view name) const {
  for (std::size_t i = 0; i < tables_.size(); ++i) {
    if (tables_[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<ColumnId> Catalog::find_column(std::string_view table, std::string_view attribute) const {
  const auto t = find_table(table);
  if (!t) return std::nullopt;
  const auto a = tables_[*t].find_attribute(attribute);
  if (!a) return std::nullopt;
  return ColumnId{*t, *a};
}

std::string Catalog::qualified_name(ColumnId column) const {
  return tables_.at(column.table).name + "." + attribute(column).name;
}

void Catalog::ingest_table(std::string_view table_name, std::istream& csv) {
  const auto t = find_table(table_name);
  if (!t) throw DataError("unknown table '" + std::string(table_name) + "'");
  const auto& meta = tables_[*t];

  std::vector<std::string> fields;
  std::size_t line = 0;
  if (!read_record(csv, fields, line)) throw DataError("table '" + meta.name + "': missing CSV header");

  // Header may list the declared attributes in any order.
  if (fields.size() != meta.attributes.size()) {
    throw DataError("table '" + meta.name + "': header mismatch, expected " + std::to_string(meta.attributes.size()) +
                    " columns, got " + std::to_string(fields.size()));
  }
  std::vector<std::size_t> target(fields.size());
  std::vector<std::uint8_t> seen(fields.size(), 0);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto a = meta.find_attribute(trim(fields[i]));
    if (!a || seen[*a]) throw DataError("table '" + meta.name + "': header mismatch at column '" + fields[i] + "'");
    seen[*a] = 1;
    target[i] = *a;
  }

  std::vector<ColumnData> columns;
  for (const auto& attribute : meta.attributes) columns.emplace_back(meta.name, attribute.name, attribute.kind);

  while (read_record(csv, fields, line)) {
    if (fields.size() == 1 && fields[0].empty() && meta.attributes.size() > 1) continue;  // blank line
    if (fields.size() != meta.attributes.size()) {
      throw DataError("table '" + meta.name + "' line " + std::to_string(line) + ": row arity mismatch");
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      auto& column = columns[target[i]];
      const auto& field = fields[i];
      if (field.empty()) {
        column.append_null();
      } else if (column.kind() == AttributeKind::continuous) {
        const auto value = parse_number(trim(field));
        if (!value) {
          throw DataError("table '" + meta.name + "' line " + std::to_string(line) + ": unparsable continuous value '" +
                          field + "'");
        }
        column.append_number(*value);
      } else {
        column.append_category(field);
      }
    }
  }
  ingest_table(table_name, std::move(columns));
}

void Catalog::ingest_table(std::string_view table_name, std::vector<ColumnData> columns) {
  const auto t = find_table(table_name);
  if (!t) throw DataError("unknown table '" + std::string(table_name) + "'");
  auto& meta = tables_[*t];
  if (columns.size() != meta.attributes.size()) throw DataError("table '" + meta.name + "': column count mismatch");
  const auto rows = columns.empty() ? std::size_t{0} : columns.front().size();
  for (std::size_t a = 0; a < columns.size(); ++a) {
    if (columns[a].attribute() != meta.attributes[a].name || columns[a].kind() != meta.attributes[a].kind) {
      throw DataError("table '" + meta.name + "': column '" + columns[a].attribute() + "' does not match schema");
    }
    if (columns[a].size() != rows) throw DataError("table '" + meta.name + "': ragged columns");
  }
  columns_[*t] = std::move(columns);
  meta.row_count = rows;
  loaded_[*t] = 1;
}

void Catalog::ingest_directory(const std::filesystem::path& dir) {
  for (const auto& table : tables_) {
    const auto path = dir / (table.name + ".csv");
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    ingest_table(table.name, in);
  }
}

bool Catalog::is_loaded(std::size_t table) const { return loaded_.at(table) != 0; }

const ColumnData& Catalog::column(ColumnId column) const { return columns_.at(column.table).at(column.attribute); }

std::pair<double, double> Catalog::domain(ColumnId id) const {
  const auto& meta = attribute(id);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  if (const auto observed = column(id).observed_range()) std::tie(lo, hi) = *observed;
  if (meta.min) lo = *meta.min;
  if (meta.max) hi = *meta.max;
  if (lo > hi) return {0.0, 1.0};  // no data and nothing declared
  return {lo, hi};
}

JoinGraph Catalog::join_graph() const {
  JoinGraph graph;
  graph.node_count = tables_.size();
  graph.incident.resize(tables_.size());
  for (std::size_t e = 0; e < joins_.size(); ++e) {
    graph.edges.emplace_back(joins_[e].left.table, joins_[e].right.table);
    graph.incident[joins_[e].left.table].push_back(e);
    graph.incident[joins_[e].right.table].push_back(e);
  }
  return graph;
}

void Catalog::write_table_csv(std::size_t t, std::ostream& out) const {
  const auto& meta = tables_.at(t);
  for (std::size_t a = 0; a < meta.attributes.size(); ++a) {
    if (a) out << ',';
    out << csv_escape(meta.attributes[a].name);
  }
  out << '\n';
  const auto& cols = columns_[t];
  for (std::size_t row = 0; row < meta.row_count; ++row) {
    for (std::size_t a = 0; a < cols.size(); ++a) {
      if (a) out << ',';
      const auto text = cols[a].render(row);
      if (!cols[a].is_null(row) && text.empty()) {
        out << "\"\"";  // keep an empty category distinct from null
      } else {
        out << csv_escape(text);
      }
    }
    out << '\n';
  }
}

std::string Catalog::schema_json() const {
  nlohmann::ordered_json doc;
  doc["name"] = name_;
  doc["tables"] = nlohmann::ordered_json::array();
  for (const auto& table : tables_) {
    nlohmann::ordered_json t;
    t["name"] = table.name;
    t["columns"] = nlohmann::ordered_json::array();
    for (const auto& attribute : table.attributes) {
      nlohmann::ordered_json c;
      c["name"] = attribute.name;
      c["kind"] = std::string(to_string(attribute.kind));
      if (attribute.min) c["min"] = *attribute.min;
      if (attribute.max) c["max"] = *attribute.max;
      t["columns"].push_back(std::move(c));
    }
    doc["tables"].push_back(std::move(t));
  }
  doc["joins"] = nlohmann::ordered_json::array();
  for (const auto& join : joins_) {
    doc["joins"].push_back(
        {{"left", qualified_name(join.left)}, {"right", qualified_name(join.right)}, {"kind", std::string(to_string(join.kind))}});
  }
  return doc.dump(2);
}

void Catalog::save_snapshot(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  io::Writer w(out);
  w.bytes(kSnapshotMagic.data(), kSnapshotMagic.size());
  w.u32(kSnapshotVersion);
  w.string(schema_json());
  for (std::size_t t = 0; t < tables_.size(); ++t) {
    w.u8(loaded_[t]);
    if (!loaded_[t]) continue;
    w.u64(tables_[t].row_count);
    for (const auto& column : columns_[t]) {
      w.bytes(column.null_mask().data(), column.null_mask().size());
      if (column.kind() == AttributeKind::continuous) {
        for (const double v : column.numbers()) w.f64(v);
      } else {
        w.u64(column.dictionary().size());
        for (const auto& s : column.dictionary()) w.string(s);
        for (const auto c : column.codes()) w.i32(c);
      }
    }
  }
  if (!out) throw DataError("write failed for " + path.string());
}

Catalog Catalog::load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  io::Reader r(in, "catalog snapshot");
  r.expect_magic(kSnapshotMagic);
  if (const auto version = r.u32(); version != kSnapshotVersion) {
    throw DataError("catalog snapshot version mismatch: " + std::to_string(version));
  }
  auto catalog = parse_schema(r.string());
  constexpr std::uint64_t kMaxRows = std::uint64_t{1} << 34U;
  for (std::size_t t = 0; t < catalog.tables_.size(); ++t) {
    if (!r.u8()) continue;
    const auto rows = r.length(kMaxRows);
    std::vector<ColumnData> columns;
    for (const auto& attribute : catalog.tables_[t].attributes) {
      ColumnData column(catalog.tables_[t].name, attribute.name, attribute.kind);
      std::vector<std::uint8_t> nulls(rows);
      r.bytes(nulls.data(), nulls.size());
      if (attribute.kind == AttributeKind::continuous) {
        std::vector<double> numbers(rows);
        for (auto& v : numbers) v = r.f64();
        column.restore(std::move(numbers), {}, std::move(nulls), {});
      } else {
        std::vector<std::string> dictionary(r.length(kMaxRows));
        for (auto& s : dictionary) s = r.string();
        std::vector<std::int32_t> codes(rows);
        for (auto& c : codes) c = r.i32();
        column.restore({}, std::move(codes), std::move(nulls), std::move(dictionary));
      }
      columns.push_back(std::move(column));
    }
    catalog.ingest_table(catalog.tables_[t].name, std::move(columns));
  }
  return catalog;
}

// ---------------------------------------------------------------------------
// Schema loading

Catalog parse_schema(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed schema document: ") + e.what());
  }
  try {
    std::vector<TableMeta> tables;
    for (const auto& t : doc.at("tables")) {
      TableMeta table;
      table.name = t.at("name").get<std::string>();
      for (const auto& c : t.at("columns")) {
        AttributeMeta attribute;
        attribute.name = c.at("name").get<std::string>();
        const auto kind = c.at("kind").get<std::string>();
        if (kind == "categorical") {
          attribute.kind = AttributeKind::categorical;
        } else if (kind == "continuous") {
          attribute.kind = AttributeKind::continuous;
        } else {
          throw DataError("unknown attribute kind '" + kind + "'");
        }
        if (c.contains("min")) attribute.min = c.at("min").get<double>();
        if (c.contains("max")) attribute.max = c.at("max").get<double>();
        table.attributes.push_back(std::move(attribute));
      }
      tables.push_back(std::move(table));
    }
    for (std::size_t i = 0; i < tables.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (tables[i].name == tables[j].name) throw DataError("duplicate table '" + tables[i].name + "'");
      }
    }

    auto resolve = [&](std::string_view text) {
      const auto [table_name, attribute_name] = split_qualified(text);
      for (std::size_t t = 0; t < tables.size(); ++t) {
        if (tables[t].name != table_name) continue;
        const auto a = tables[t].find_attribute(attribute_name);
        if (!a) throw DataError("unknown attribute '" + std::string(text) + "'");
        return ColumnId{t, *a};
      }
      throw DataError("unknown table '" + std::string(table_name) + "'");
    };

    std::vector<JoinEdge> joins;
    if (doc.contains("joins")) {
      for (const auto& j : doc.at("joins")) {
        JoinEdge edge;
        edge.left = resolve(j.at("left").get<std::string>());
        edge.right = resolve(j.at("right").get<std::string>());
        const auto kind = j.value("kind", std::string("PK-FK"));
        if (kind == "PK-FK") {
          edge.kind = JoinKind::pk_fk;
        } else if (kind == "FK-FK") {
          edge.kind = JoinKind::fk_fk;
        } else {
          throw DataError("unknown join kind '" + kind + "'");
        }
        joins.push_back(edge);
      }
    }
    return Catalog(doc.at("name").get<std::string>(), std::move(tables), std::move(joins));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed schema document: ") + e.what());
  }
}

Catalog load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing schema file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_schema(buffer.str());
}

}  // namespace price
