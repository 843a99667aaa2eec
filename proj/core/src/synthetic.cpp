#include "price/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <utility>
#include <vector>

#include "price/random.hpp"

namespace price {

namespace {

struct ForeignKey {
  std::size_t child;
  std::size_t parent;
};

std::vector<ForeignKey> foreign_keys(SchemaShape shape, std::size_t n, Rng& rng) {
  std::vector<ForeignKey> out;
  switch (shape) {
    case SchemaShape::chain:
      for (std::size_t i = 1; i < n; ++i) out.push_back({i, i - 1});
      break;
    case SchemaShape::star:
      for (std::size_t i = 1; i < n; ++i) out.push_back({0, i});
      break;
    case SchemaShape::cycle:
      for (std::size_t i = 1; i < n; ++i) out.push_back({i, i - 1});
      if (n >= 3) out.push_back({n - 1, 0});
      break;
    case SchemaShape::tree:
      for (std::size_t i = 1; i < n; ++i) out.push_back({i, static_cast<std::size_t>(rng.index(i))});
      break;
  }
  return out;
}

std::string table_name(std::size_t i) { return "t" + std::to_string(i); }

}  // namespace

std::string_view to_string(SchemaShape shape) {
  switch (shape) {
    case SchemaShape::chain: return "chain";
    case SchemaShape::star: return "star";
    case SchemaShape::cycle: return "cycle";
    case SchemaShape::tree: return "tree";
  }
  return "chain";
}

SchemaShape parse_schema_shape(std::string_view text) {
  for (const auto s : {SchemaShape::chain, SchemaShape::star, SchemaShape::cycle, SchemaShape::tree}) {
    if (to_string(s) == text) return s;
  }
  throw DataError("unknown schema shape '" + std::string(text) + "'");
}

Catalog generate_synthetic(const SyntheticOptions& options) {
  if (options.tables == 0 || options.rows == 0) throw DataError("synthetic database needs tables and rows");
  if (options.shape == SchemaShape::cycle && options.tables < 3) throw DataError("a cycle needs at least 3 tables");
  const double rho = std::clamp(options.correlation, 0.0, 1.0);
  const double skew = std::max(1.0, options.skew);
  Rng rng(options.seed);

  const auto n = options.tables;
  const auto fks = foreign_keys(options.shape, n, rng);
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = std::max<std::size_t>(2, static_cast<std::size_t>(options.rows * rng.uniform(0.5, 1.5)));

  std::vector<bool> referenced(n, false);
  for (const auto& fk : fks) referenced[fk.parent] = true;

  std::vector<TableMeta> metas(n);
  for (std::size_t t = 0; t < n; ++t) {
    metas[t].name = table_name(t);
    if (referenced[t]) metas[t].attributes.push_back({"id", AttributeKind::continuous, {}, {}});
    for (std::size_t i = 0; i < options.continuous_attributes; ++i) {
      metas[t].attributes.push_back({"x" + std::to_string(i), AttributeKind::continuous, {}, {}});
    }
    for (std::size_t i = 0; i < options.categorical_attributes; ++i) {
      metas[t].attributes.push_back({"c" + std::to_string(i), AttributeKind::categorical, {}, {}});
    }
  }
  std::vector<JoinEdge> joins;
  std::vector<std::size_t> fk_column(fks.size());
  for (std::size_t k = 0; k < fks.size(); ++k) {
    auto& child = metas[fks[k].child];
    fk_column[k] = child.attributes.size();
    auto column = table_name(fks[k].parent) + "_id";
    // Parallel edges to the same parent get distinct column names.
    while (child.find_attribute(column)) column += "_";
    child.attributes.push_back({column, AttributeKind::continuous, {}, {}});
    joins.push_back({{fks[k].parent, 0}, {fks[k].child, fk_column[k]}, JoinKind::pk_fk});
  }
  Catalog catalog(options.name, metas, joins);

  // Latent score per row, increasing with id so low ids have low scores.
  std::vector<std::vector<double>> latent(n);
  for (std::size_t t = 0; t < n; ++t) {
    latent[t].resize(rows[t]);
    for (std::size_t r = 0; r < rows[t]; ++r) {
      latent[t][r] = (static_cast<double>(r) + rng.uniform()) / static_cast<double>(rows[t]);
    }
  }

  auto mix = [&](double z) { return rho * z + (1.0 - rho) * rng.uniform(); };
  for (std::size_t t = 0; t < n; ++t) {
    const auto& meta = catalog.table(t);
    std::vector<ColumnData> columns;
    for (const auto& attr : meta.attributes) columns.emplace_back(meta.name, attr.name, attr.kind);
    const std::size_t first = referenced[t] ? 1 : 0;

    if (referenced[t]) {
      for (std::size_t r = 0; r < rows[t]; ++r) columns[0].append_number(static_cast<double>(r));
    }
    for (std::size_t i = 0; i < options.continuous_attributes; ++i) {
      auto& column = columns[first + i];
      const double scale = 10.0 + static_cast<double>(rng.index(1000));
      const double power = 0.5 + 0.5 * static_cast<double>(i % 4);  // sqrt, linear, x^1.5, square
      for (std::size_t r = 0; r < rows[t]; ++r) {
        if (options.null_fraction > 0.0 && rng.uniform() < options.null_fraction) {
          column.append_null();
        } else {
          column.append_number(std::round(std::pow(mix(latent[t][r]), power) * scale));
        }
      }
    }
    for (std::size_t i = 0; i < options.categorical_attributes; ++i) {
      auto& column = columns[first + options.continuous_attributes + i];
      const double categories = 3.0 + static_cast<double>(rng.index(6));
      for (std::size_t r = 0; r < rows[t]; ++r) {
        if (options.null_fraction > 0.0 && rng.uniform() < options.null_fraction) {
          column.append_null();
        } else {
          const auto bucket = std::min(categories - 1.0, std::floor(mix(latent[t][r]) * categories));
          column.append_category("v" + std::to_string(static_cast<int>(bucket)));
        }
      }
    }
    // Foreign keys follow the child's score through a power law, so children
    // with low scores pile onto few low-id parents.
    for (std::size_t k = 0; k < fks.size(); ++k) {
      if (fks[k].child != t) continue;
      const auto parent_rows = static_cast<double>(rows[fks[k].parent]);
      auto& column = columns[fk_column[k]];
      for (std::size_t r = 0; r < rows[t]; ++r) {
        const double w = std::pow(mix(latent[t][r]), skew);
        column.append_number(std::min(parent_rows - 1.0, std::floor(w * parent_rows)));
      }
    }
    catalog.ingest_table(meta.name, std::move(columns));
  }
  return catalog;
}

void write_database(const Catalog& catalog, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "schema.json");
    if (!out) throw DataError("cannot write " + (dir / "schema.json").string());
    out << catalog.schema_json() << '\n';
  }
  for (std::size_t t = 0; t < catalog.tables().size(); ++t) {
    const auto path = dir / (catalog.table(t).name + ".csv");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    catalog.write_table_csv(t, out);
  }
}

}  // namespace price
