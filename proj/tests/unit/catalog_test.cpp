#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "price/catalog.hpp"

namespace price {
namespace {

constexpr const char* kThreeTables = R"({
  "name": "shop",
  "tables": [
    {"name": "a", "columns": [{"name": "id", "kind": "continuous"}, {"name": "v", "kind": "continuous", "min": 0, "max": 10}]},
    {"name": "b", "columns": [{"name": "a_id", "kind": "continuous"}, {"name": "id", "kind": "continuous"}]},
    {"name": "c", "columns": [{"name": "b_id", "kind": "continuous"}, {"name": "tag", "kind": "categorical"}]}
  ],
  "joins": [
    {"left": "a.id", "right": "b.a_id", "kind": "PK-FK"},
    {"left": "b.id", "right": "c.b_id", "kind": "FK-FK"}
  ]
})";

std::string single_table_schema(const std::string& kind) {
  return R"({"name": "s", "tables": [{"name": "t", "columns": [{"name": "a", "kind": ")" + kind + R"("}]}], "joins": []})";
}

TEST(CatalogTest, LoadsTablesAndJoinsInFileOrder) {
  const auto catalog = parse_schema(kThreeTables);
  EXPECT_EQ(catalog.name(), "shop");
  ASSERT_EQ(catalog.tables().size(), 3U);
  EXPECT_EQ(catalog.table(2).name, "c");
  ASSERT_EQ(catalog.joins().size(), 2U);
  EXPECT_EQ(catalog.qualified_name(catalog.joins()[0].right), "b.a_id");
  EXPECT_EQ(catalog.joins()[1].kind, JoinKind::fk_fk);
  EXPECT_EQ(catalog.attribute({0, 1}).max, 10.0);
}

TEST(CatalogTest, RejectsUnknownAttributeInJoin) {
  const std::string schema = R"({"name": "s", "tables": [{"name": "t", "columns": [{"name": "a", "kind": "continuous"}]},
    {"name": "u", "columns": [{"name": "a", "kind": "continuous"}]}], "joins": [{"left": "t.a", "right": "u.missing"}]})";
  try {
    parse_schema(schema);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown attribute"), std::string::npos) << e.what();
  }
}

TEST(CatalogTest, RejectsDuplicateTable) {
  const std::string schema = R"({"name": "s", "tables": [{"name": "t", "columns": []}, {"name": "t", "columns": []}], "joins": []})";
  try {
    parse_schema(schema);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate table"), std::string::npos) << e.what();
  }
}

TEST(CatalogTest, RejectsMalformedAndMissingDocuments) {
  EXPECT_THROW(parse_schema("{not json"), DataError);
  EXPECT_THROW(parse_schema(R"({"name": "s", "tables": 3})"), DataError);
  EXPECT_THROW(load_schema("/nonexistent/schema.json"), DataError);
  const std::string self_loop = R"({"name": "s", "tables": [{"name": "t", "columns": [{"name": "a", "kind": "continuous"},
    {"name": "b", "kind": "continuous"}]}], "joins": [{"left": "t.a", "right": "t.b"}]})";
  EXPECT_THROW(parse_schema(self_loop), DataError);
}

TEST(CatalogTest, IngestsContinuousValues) {
  auto catalog = parse_schema(single_table_schema("continuous"));
  std::istringstream csv("a\n1\n2\n");
  catalog.ingest_table("t", csv);
  const auto& col = catalog.column({0, 0});
  EXPECT_EQ(catalog.table(0).row_count, 2U);
  EXPECT_EQ(col.numbers(), (std::vector<double>{1.0, 2.0}));
}

TEST(CatalogTest, DictionaryCodesFollowFirstAppearance) {
  auto catalog = parse_schema(single_table_schema("categorical"));
  std::istringstream csv("a\nx\ny\nx\n");
  catalog.ingest_table("t", csv);
  const auto& col = catalog.column({0, 0});
  EXPECT_EQ(col.codes(), (std::vector<std::int32_t>{0, 1, 0}));
  EXPECT_EQ(col.distinct_count(), 2U);
}

TEST(CatalogTest, EmptyFieldIsNull) {
  auto catalog = parse_schema(single_table_schema("continuous"));
  std::istringstream csv("a\n1\n\n3\n");
  catalog.ingest_table("t", csv);
  const auto& col = catalog.column({0, 0});
  ASSERT_EQ(col.size(), 3U);
  EXPECT_EQ(col.number(0), 1.0);
  EXPECT_TRUE(col.is_null(1));
  EXPECT_EQ(col.number(2), 3.0);
  EXPECT_EQ(col.null_count(), 1U);
}

TEST(CatalogTest, IngestErrors) {
  auto catalog = parse_schema(single_table_schema("continuous"));
  std::istringstream wrong_header("b\n1\n");
  EXPECT_THROW(catalog.ingest_table("t", wrong_header), DataError);
  std::istringstream bad_value("a\nabc\n");
  try {
    catalog.ingest_table("t", bad_value);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("unparsable continuous value"), std::string::npos);
  }
  std::istringstream arity("a\n1,2\n");
  try {
    catalog.ingest_table("t", arity);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row arity mismatch"), std::string::npos);
  }
}

TEST(CatalogTest, QuotedFieldsAndReorderedHeader) {
  auto catalog = parse_schema(R"({"name": "s", "tables": [{"name": "t", "columns": [{"name": "a", "kind": "continuous"},
    {"name": "s", "kind": "categorical"}]}], "joins": []})");
  std::istringstream csv("s,a\r\n\"x, y\",1\r\n\"multi\nline\",2\r\n\"q\"\"uote\",\r\n");
  catalog.ingest_table("t", csv);
  const auto& s = catalog.column({0, 1});
  EXPECT_EQ(s.dictionary(), (std::vector<std::string>{"x, y", "multi\nline", "q\"uote"}));
  EXPECT_TRUE(catalog.column({0, 0}).is_null(2));
}

TEST(CatalogTest, JoinGraphShapes) {
  const auto path = parse_schema(kThreeTables).join_graph();
  EXPECT_EQ(path.node_count, 3U);
  EXPECT_EQ(path.edges.size(), 2U);
  EXPECT_EQ(path.degree(1), 2U);
  EXPECT_EQ(path.degree(0), 1U);

  const auto edgeless = parse_schema(single_table_schema("continuous")).join_graph();
  EXPECT_EQ(edgeless.node_count, 1U);
  EXPECT_TRUE(edgeless.edges.empty());

  const auto parallel = parse_schema(R"({"name": "m", "tables": [
      {"name": "a", "columns": [{"name": "x", "kind": "continuous"}, {"name": "y", "kind": "continuous"}]},
      {"name": "b", "columns": [{"name": "x", "kind": "continuous"}, {"name": "y", "kind": "continuous"}]}],
    "joins": [{"left": "a.x", "right": "b.x"}, {"left": "a.y", "right": "b.y"}]})")
                            .join_graph();
  ASSERT_EQ(parallel.edges.size(), 2U);
  EXPECT_EQ(parallel.edges[0], parallel.edges[1]);
  EXPECT_EQ(parallel.degree(0), 2U);
}

TEST(CatalogTest, CsvRoundTripIsValueIdentical) {
  const auto catalog = testing::make_fixture(testing::FixtureShape::star4, 100, 3);
  for (std::size_t t = 0; t < catalog.tables().size(); ++t) {
    std::ostringstream out;
    catalog.write_table_csv(t, out);
    auto copy = parse_schema(catalog.schema_json());
    std::istringstream in(out.str());
    copy.ingest_table(catalog.table(t).name, in);
    for (std::size_t a = 0; a < catalog.table(t).attributes.size(); ++a) {
      const auto& original = catalog.column({t, a});
      const auto& reread = copy.column({t, a});
      ASSERT_EQ(original.size(), reread.size());
      for (std::size_t r = 0; r < original.size(); ++r) ASSERT_EQ(original.render(r), reread.render(r));
    }
  }
}

TEST(CatalogTest, SnapshotRoundTrip) {
  testing::TempDir dir;
  const auto catalog = testing::make_fixture(testing::FixtureShape::chain3, 50, 9);
  catalog.save_snapshot(dir / "cat.bin");
  const auto loaded = Catalog::load_snapshot(dir / "cat.bin");
  EXPECT_EQ(loaded.schema_json(), catalog.schema_json());
  for (std::size_t t = 0; t < catalog.tables().size(); ++t) {
    EXPECT_EQ(loaded.table(t).row_count, catalog.table(t).row_count);
    for (std::size_t a = 0; a < catalog.table(t).attributes.size(); ++a) {
      EXPECT_EQ(loaded.column({t, a}).null_mask(), catalog.column({t, a}).null_mask());
      EXPECT_EQ(loaded.column({t, a}).numbers(), catalog.column({t, a}).numbers());
      EXPECT_EQ(loaded.column({t, a}).codes(), catalog.column({t, a}).codes());
    }
  }
  {
    std::ofstream truncated(dir / "short.bin", std::ios::binary);
    const auto bytes = testing::read_file(dir / "cat.bin");
    truncated << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_THROW(Catalog::load_snapshot(dir / "short.bin"), DataError);
}

TEST(CatalogTest, DomainUsesDeclaredThenObserved) {
  auto catalog = parse_schema(kThreeTables);
  std::istringstream a("id,v\n1,3\n2,4\n");
  catalog.ingest_table("a", a);
  EXPECT_EQ(catalog.domain({0, 1}), (std::pair{0.0, 10.0}));
  EXPECT_EQ(catalog.domain({0, 0}), (std::pair{1.0, 2.0}));
}

}  // namespace
}  // namespace price
