#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <vector>

#include <unistd.h>

#include "price/random.hpp"

namespace price::testing {

namespace {

constexpr const char* kChainSchema = R"({
  "name": "chain3",
  "tables": [
    {"name": "a", "columns": [{"name": "id", "kind": "continuous"}, {"name": "x", "kind": "continuous"},
                              {"name": "tag", "kind": "categorical"}]},
    {"name": "b", "columns": [{"name": "id", "kind": "continuous"}, {"name": "a_id", "kind": "continuous"},
                              {"name": "y", "kind": "continuous"}, {"name": "color", "kind": "categorical"}]},
    {"name": "c", "columns": [{"name": "b_id", "kind": "continuous"}, {"name": "z", "kind": "continuous"},
                              {"name": "color", "kind": "categorical"}]}
  ],
  "joins": [
    {"left": "a.id", "right": "b.a_id", "kind": "PK-FK"},
    {"left": "b.id", "right": "c.b_id", "kind": "PK-FK"}
  ]
})";

constexpr const char* kStarSchema = R"({
  "name": "star4",
  "tables": [
    {"name": "f", "columns": [{"name": "d1", "kind": "continuous"}, {"name": "d2", "kind": "categorical"},
                              {"name": "k3", "kind": "continuous"}, {"name": "v", "kind": "continuous"},
                              {"name": "kind", "kind": "categorical"}]},
    {"name": "g1", "columns": [{"name": "id", "kind": "continuous"}, {"name": "w", "kind": "continuous"}]},
    {"name": "g2", "columns": [{"name": "code", "kind": "categorical"}, {"name": "region", "kind": "categorical"}]},
    {"name": "g3", "columns": [{"name": "k3", "kind": "continuous"}, {"name": "u", "kind": "continuous", "min": 0, "max": 100}]}
  ],
  "joins": [
    {"left": "g1.id", "right": "f.d1", "kind": "PK-FK"},
    {"left": "g2.code", "right": "f.d2", "kind": "PK-FK"},
    {"left": "f.k3", "right": "g3.k3", "kind": "FK-FK"}
  ]
})";

constexpr const char* kCyclicSchema = R"({
  "name": "cyclic3",
  "tables": [
    {"name": "p", "columns": [{"name": "id", "kind": "continuous"}, {"name": "tag", "kind": "categorical"},
                              {"name": "x", "kind": "continuous"}]},
    {"name": "q", "columns": [{"name": "id", "kind": "continuous"}, {"name": "p_id", "kind": "continuous"},
                              {"name": "y", "kind": "continuous"}]},
    {"name": "r", "columns": [{"name": "q_id", "kind": "continuous"}, {"name": "tag", "kind": "categorical"},
                              {"name": "z", "kind": "continuous"}]}
  ],
  "joins": [
    {"left": "p.id", "right": "q.p_id", "kind": "PK-FK"},
    {"left": "q.id", "right": "r.q_id", "kind": "PK-FK"},
    {"left": "p.tag", "right": "r.tag", "kind": "FK-FK"}
  ]
})";

/// Fills every column of every table with random values: keys from a small
/// domain (duplicates on both sides), measures on a coarse grid, 5% nulls.
void fill(Catalog& catalog, std::size_t rows, std::uint64_t seed) {
  Rng rng(seed);
  const auto key_domain = std::max<std::size_t>(4, rows / 3);
  const auto joins = catalog.joins();
  for (std::size_t t = 0; t < catalog.tables().size(); ++t) {
    const auto& meta = catalog.table(t);
    const auto n = rows / 2 + static_cast<std::size_t>(rng.index(rows));
    std::vector<ColumnData> columns;
    for (std::size_t a = 0; a < meta.attributes.size(); ++a) {
      const auto& attr = meta.attributes[a];
      const ColumnId id{t, a};
      const bool key = std::any_of(joins.begin(), joins.end(), [&](const JoinEdge& j) { return j.left == id || j.right == id; });
      ColumnData column(meta.name, attr.name, attr.kind);
      for (std::size_t r = 0; r < n; ++r) {
        if (rng.uniform() < 0.05) {
          column.append_null();
        } else if (attr.kind == AttributeKind::categorical) {
          const auto domain = key ? key_domain : 6;
          // Skewed: low codes are far more common.
          const auto v = static_cast<std::size_t>(static_cast<double>(domain) * rng.uniform() * rng.uniform());
          column.append_category((key ? "k" : "v") + std::to_string(v));
        } else if (key) {
          column.append_number(static_cast<double>(rng.index(key_domain)));
        } else {
          column.append_number(static_cast<double>(rng.index(101)));
        }
      }
      columns.push_back(std::move(column));
    }
    catalog.ingest_table(meta.name, std::move(columns));
  }
}

}  // namespace

std::string fixture_name(FixtureShape shape) {
  switch (shape) {
    case FixtureShape::chain3: return "chain-3";
    case FixtureShape::star4: return "star-4";
    case FixtureShape::cyclic3: return "cyclic-3";
  }
  return "?";
}

Catalog make_fixture(FixtureShape shape, std::size_t rows, std::uint64_t seed) {
  const char* schema = shape == FixtureShape::chain3 ? kChainSchema : shape == FixtureShape::star4 ? kStarSchema : kCyclicSchema;
  auto catalog = parse_schema(schema);
  fill(catalog, rows, seed);
  return catalog;
}

Catalog make_pair_fixture() {
  auto catalog = parse_schema(R"({
    "name": "pair",
    "tables": [
      {"name": "t", "columns": [{"name": "a", "kind": "continuous"}]},
      {"name": "s", "columns": [{"name": "a", "kind": "continuous"}, {"name": "b", "kind": "continuous"}]}
    ],
    "joins": [{"left": "t.a", "right": "s.a"}]
  })");
  std::istringstream t("a\n1\n2\n3\n");
  std::istringstream s("a,b\n1,10\n1,20\n3,30\n");
  catalog.ingest_table("t", t);
  catalog.ingest_table("s", s);
  return catalog;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("price-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace price::testing
