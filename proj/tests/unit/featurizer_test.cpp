#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "price/featurizer.hpp"
#include "price/join_keys.hpp"
#include "price/workload.hpp"

namespace price {
namespace {

using testing::FixtureShape;

Catalog keyed_pair() {
  auto catalog = parse_schema(R"({"name": "kp", "tables": [
      {"name": "t1", "columns": [{"name": "k", "kind": "continuous"}, {"name": "v", "kind": "continuous"}]},
      {"name": "t2", "columns": [{"name": "k", "kind": "continuous"}, {"name": "w", "kind": "categorical"}]}],
    "joins": [{"left": "t1.k", "right": "t2.k"}]})");
  std::istringstream t1("k,v\n1,0\n2,1\n3,2\n");
  std::istringstream t2("k,w\n1,x\n2,y\n3,x\n3,x\n");
  catalog.ingest_table("t1", t1);
  catalog.ingest_table("t2", t2);
  return catalog;
}

TEST(BaselineTest, UnfilteredSingleTableIsRowCount) {
  const auto catalog = keyed_pair();
  const auto stats = StatsStore::build(catalog);
  EXPECT_EQ(baseline_estimate(parse_query("SELECT COUNT(*) FROM t2", catalog), catalog, stats), 4.0);
}

TEST(BaselineTest, HalfSelectivityHalvesRows) {
  auto catalog = parse_schema(R"({"name": "h", "tables": [{"name": "t", "columns": [{"name": "v", "kind": "continuous"}]}]})");
  std::istringstream csv("v\n0\n1\n2\n3\n");
  catalog.ingest_table("t", csv);
  const auto stats = StatsStore::build(catalog);
  EXPECT_DOUBLE_EQ(baseline_estimate(parse_query("SELECT COUNT(*) FROM t WHERE t.v <= 1.5", catalog), catalog, stats), 2.0);
}

TEST(BaselineTest, JoinDividesByLargerDistinctCount) {
  const auto catalog = keyed_pair();
  const auto stats = StatsStore::build(catalog);
  const auto q = parse_query("SELECT COUNT(*) FROM t1, t2 WHERE t1.k = t2.k", catalog);
  EXPECT_DOUBLE_EQ(baseline_estimate(q, catalog, stats), 3.0 * 4.0 / 3.0);
  EXPECT_EQ(true_cardinality(q, catalog), 4U);  // uniform keys: independence is exact here
}

TEST(FeaturizeTest, TokenCountsFollowQueryShape) {
  const auto catalog = keyed_pair();
  const auto stats = StatsStore::build(catalog);
  const auto b = featurize(parse_query("SELECT COUNT(*) FROM t1, t2 WHERE t1.k = t2.k AND t1.v > 0", catalog), catalog, stats);
  EXPECT_EQ(b.join_tokens.size(), 2U);
  EXPECT_EQ(b.filter_tokens.size(), 1U);
  EXPECT_EQ(b.table_tokens.size(), 2U);
  for (const auto& t : b.join_tokens) EXPECT_EQ(t.size(), kJoinTokenWidth);
  for (const auto& t : b.filter_tokens) EXPECT_EQ(t.size(), kFilterTokenWidth);
  for (const auto& t : b.table_tokens) EXPECT_EQ(t.size(), kTableTokenWidth);
}

TEST(FeaturizeTest, UnfilteredQueryHasNeutralHeuristics) {
  const auto catalog = keyed_pair();
  const auto stats = StatsStore::build(catalog);
  const auto b = featurize(parse_query("SELECT COUNT(*) FROM t1, t2 WHERE t1.k = t2.k", catalog), catalog, stats);
  EXPECT_TRUE(b.filter_tokens.empty());
  for (const auto& t : b.table_tokens) {
    EXPECT_EQ(t[0], 1.0);
    EXPECT_EQ(t[1], 1.0);
    EXPECT_EQ(t[2], 1.0);
  }
}

TEST(FeaturizeTest, JoinTokenCarriesScalingDistributionBitExactly) {
  const auto catalog = keyed_pair();
  const auto stats = StatsStore::build(catalog);
  const auto b = featurize(parse_query("SELECT COUNT(*) FROM t1, t2 WHERE t1.k = t2.k", catalog), catalog, stats);
  const auto [lk, rk] = encode_join_keys(catalog.column({0, 0}), catalog.column({1, 0}));
  const auto left = scaling_factor_distribution(lk, rk);
  const auto right = scaling_factor_distribution(rk, lk);
  EXPECT_EQ(std::vector<double>(b.join_tokens[0].begin() + kFeatureBins, b.join_tokens[0].end()), left.bins);
  EXPECT_EQ(std::vector<double>(b.join_tokens[1].begin() + kFeatureBins, b.join_tokens[1].end()), right.bins);
  EXPECT_EQ(std::vector<double>(b.join_tokens[0].begin(), b.join_tokens[0].begin() + kFeatureBins),
            stats.attribute({0, 0}).distribution.bins);
}

TEST(FeaturizeTest, FilterTokenCarriesRegionAndSelectivity) {
  const auto catalog = keyed_pair();
  const auto stats = StatsStore::build(catalog);
  const auto b = featurize(parse_query("SELECT COUNT(*) FROM t1 WHERE t1.v >= 0.5 AND t1.v <= 1.5", catalog), catalog, stats);
  ASSERT_EQ(b.filter_tokens.size(), 1U);
  const auto& t = b.filter_tokens[0];
  EXPECT_DOUBLE_EQ(t[kFeatureBins], 0.25);
  EXPECT_DOUBLE_EQ(t[kFeatureBins + 1], 0.75);
  const auto& hist = stats.attribute({0, 1}).distribution;
  EXPECT_DOUBLE_EQ(t[kFeatureBins + 2], range_selectivity(hist, 0.5, 1.5));
  EXPECT_DOUBLE_EQ(b.table_tokens[0][0], t[kFeatureBins + 2]);
}

TEST(FeaturizeTest, IdenticalFiltersGiveIdenticalTokens) {
  const auto catalog = testing::make_fixture(FixtureShape::chain3, 100, 3);
  const auto stats = StatsStore::build(catalog);
  const auto one = featurize(parse_query("SELECT COUNT(*) FROM a WHERE a.x <= 40", catalog), catalog, stats);
  const auto two = featurize(parse_query("SELECT COUNT(*) FROM c WHERE c.z <= 40", catalog), catalog, stats);
  const auto three = featurize(parse_query("SELECT COUNT(*) FROM a WHERE a.x <= 40", catalog), catalog, stats);
  EXPECT_EQ(one.filter_tokens, three.filter_tokens);
  EXPECT_EQ(one.to_json(), three.to_json());
  EXPECT_EQ(two.filter_tokens.size(), 1U);
}

TEST(FeaturizeTest, PureFunctionOfQueryAndStats) {
  const auto catalog = testing::make_fixture(FixtureShape::star4, 100, 5);
  const auto stats = StatsStore::build(catalog);
  const auto workload = generate_workload(catalog, stats, {.count = 20, .seed = 2});
  for (const auto& r : workload) {
    const auto q = parse_query(r.sql, catalog);
    EXPECT_EQ(featurize(q, catalog, stats).to_json(), featurize(q, catalog, stats).to_json());
  }
}

TEST(FeaturizeTest, RejectsStatsForAnotherCatalog) {
  const auto catalog = keyed_pair();
  const auto other = testing::make_fixture(FixtureShape::chain3, 20, 1);
  const auto stats = StatsStore::build(other);
  EXPECT_THROW(featurize(parse_query("SELECT COUNT(*) FROM t1", catalog), catalog, stats), DataError);
}

}  // namespace
}  // namespace price
