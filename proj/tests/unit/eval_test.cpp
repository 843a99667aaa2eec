#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "fixtures.hpp"
#include "oracle.hpp"
#include "price/eval.hpp"
#include "price/featurizer.hpp"
#include "price/random.hpp"
#include "price/synthetic.hpp"

namespace price {
namespace {

using testing::FixtureShape;

const Catalog& chain() {
  static const auto catalog = testing::make_fixture(FixtureShape::chain3, 30, 1);
  return catalog;
}

QuerySpec chain_query() {
  return parse_query("SELECT COUNT(*) FROM a, b, c WHERE a.id = b.a_id AND b.id = c.b_id", chain());
}

TEST(QErrorTest, Values) {
  EXPECT_EQ(q_error(7, 7), 1.0);
  EXPECT_EQ(q_error(4, 2), 2.0);
  EXPECT_EQ(q_error(2, 4), 2.0);
  EXPECT_THROW(q_error(0, 4), std::invalid_argument);
  EXPECT_THROW(q_error(3, -1), std::invalid_argument);
}

TEST(PlanCostTest, Values) {
  Plan leaf{{"a"}, nullptr, nullptr};
  EXPECT_EQ(plan_cost(leaf, {{"a", 10}}), 10.0);
  Plan join{{"a", "b"}, std::make_shared<Plan>(Plan{{"a"}, nullptr, nullptr}), std::make_shared<Plan>(Plan{{"b"}, nullptr, nullptr})};
  EXPECT_EQ(plan_cost(join, {{"a", 3}, {"b", 4}, {"a,b", 4}}), 18.0);
  EXPECT_EQ(join.to_string(), "(a b)");
  EXPECT_THROW(plan_cost(join, {{"a", 3}}), DataError);
}

TEST(OptimalPlanTest, TwoTablesPutLexicographicSideLeft) {
  const auto q = parse_query("SELECT COUNT(*) FROM b, a WHERE a.id = b.a_id", chain());
  const auto plan = optimal_plan(q, chain(), {{"a", 5}, {"b", 9}, {"a,b", 2}});
  EXPECT_EQ(plan.to_string(), "(a b)");
}

TEST(OptimalPlanTest, ChainPrefersSmallIntermediate) {
  const CardMap cards{{"a", 10}, {"b", 10}, {"c", 10}, {"a,b", 1000}, {"b,c", 10}, {"a,b,c", 100}};
  const auto plan = optimal_plan(chain_query(), chain(), cards);
  EXPECT_EQ(plan.to_string(), "(a (b c))");
  EXPECT_EQ(plan_cost(plan, cards), 180.0);
}

TEST(OptimalPlanTest, MatchesBruteForceOnRandomCards) {
  Rng rng(14);
  std::vector<Catalog> catalogs;
  for (const auto shape : {SchemaShape::chain, SchemaShape::star, SchemaShape::cycle, SchemaShape::tree}) {
    for (const std::size_t n : {4U, 5U, 6U}) {
      catalogs.push_back(generate_synthetic({.name = "g", .shape = shape, .tables = n, .rows = 4, .seed = n}));
    }
  }
  for (const auto& catalog : catalogs) {
    std::vector<std::size_t> all(catalog.tables().size());
    std::iota(all.begin(), all.end(), 0);
    const auto q = make_query(catalog, all, {});
    for (int trial = 0; trial < 5; ++trial) {
      CardMap cards;
      for (const auto& sub : sub_queries(q, catalog)) {
        // Trial 0 uses uniform cards so ties are everywhere.
        cards[table_set_key(sub.tables, catalog)] = trial == 0 ? 100.0 : std::round(std::exp(rng.uniform(0, 12)));
      }
      const auto plan = optimal_plan(q, catalog, cards);
      EXPECT_DOUBLE_EQ(plan_cost(plan, cards), testing::brute_force_min_cost(q, catalog, cards));
      EXPECT_EQ(optimal_plan(q, catalog, cards).to_string(), plan.to_string());
    }
  }
}

TEST(PErrorTest, HandComputedRatio) {
  const CardMap truth{{"a", 10}, {"b", 10}, {"c", 10}, {"a,b", 1000}, {"b,c", 10}, {"a,b,c", 100}};
  auto est = truth;
  EXPECT_EQ(p_error(chain_query(), chain(), est, truth), 1.0);
  est["a,b"] = 1;
  est["b,c"] = 1000;
  // Chosen ((a b) c) costs 30 + 1020 + 1110 under truth; optimal (a (b c)) costs 180.
  EXPECT_DOUBLE_EQ(p_error(chain_query(), chain(), est, truth), 2160.0 / 180.0);
}

TEST(PErrorTest, ClampsZeroCardinalities) {
  const CardMap truth{{"a", 0}, {"b", 10}, {"c", 10}, {"a,b", 0}, {"b,c", 10}, {"a,b,c", 0}};
  const CardMap est{{"a", 0.2}, {"b", 10}, {"c", 10}, {"a,b", 0.5}, {"b,c", 10}, {"a,b,c", 0.1}};
  EXPECT_EQ(p_error(chain_query(), chain(), est, truth), 1.0);
}

TEST(PErrorTest, NeverBelowOne) {
  Rng rng(2);
  const auto q = chain_query();
  for (int i = 0; i < 200; ++i) {
    CardMap truth;
    CardMap est;
    for (const auto& sub : sub_queries(q, chain())) {
      const auto key = table_set_key(sub.tables, chain());
      truth[key] = std::round(std::exp(rng.uniform(0, 10)));
      est[key] = std::exp(rng.uniform(0, 10));
    }
    EXPECT_GE(p_error(q, chain(), est, truth), 1.0);
  }
}

TEST(QuantileTest, NearestRank) {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  EXPECT_EQ(quantile(v, 90), 90.0);
  EXPECT_EQ(quantile(v, 50), 50.0);
  EXPECT_EQ(quantile(v, 100), 100.0);
  EXPECT_EQ(quantile({3.0, 1.0, 2.0}, 50), 2.0);
  EXPECT_EQ(quantile({5.0}, 99), 5.0);
  EXPECT_THROW(quantile({}, 50), std::invalid_argument);
}

struct EvalFixture {
  Catalog catalog = testing::make_fixture(FixtureShape::star4, 150, 9);
  StatsStore stats = StatsStore::build(catalog);
  std::vector<WorkloadRecord> records = generate_workload(catalog, stats, {.count = 40, .seed = 6});
};

const EvalFixture& eval_fixture() {
  static const EvalFixture f;
  return f;
}

TEST(EvaluateTest, OracleEstimatorIsPerfect) {
  const auto& f = eval_fixture();
  const auto report = evaluate(f.records, f.catalog, [&](const QuerySpec& q) { return double(true_cardinality(q, f.catalog)); });
  ASSERT_EQ(report.queries.size(), f.records.size());
  for (const auto& r : report.queries) {
    EXPECT_EQ(r.q_error, 1.0);
    EXPECT_EQ(r.p_error, 1.0);
  }
}

TEST(EvaluateTest, ConstantOneMedianIsMedianTrueCard) {
  const auto& f = eval_fixture();
  const auto report = evaluate(f.records, f.catalog, [](const QuerySpec&) { return 1.0; });
  std::vector<double> cards;
  for (const auto& r : f.records) cards.push_back(std::max<double>(1, r.card));
  EXPECT_EQ(report.q_error_quantiles[0], quantile(cards, 50));
}

TEST(EvaluateTest, SkipsFailingQueriesAndCountsThem) {
  const auto& f = eval_fixture();
  auto records = f.records;
  records.push_back({"SELECT COUNT(*) FROM nowhere", 1, {}});
  const auto report = evaluate(records, f.catalog, [](const QuerySpec&) { return 1.0; });
  EXPECT_EQ(report.skipped, 1U);
  EXPECT_EQ(report.queries.size(), f.records.size());
  ASSERT_EQ(report.skip_reasons.size(), 1U);
}

TEST(EvaluateTest, ReportsAreDeterministicAcrossThreadCounts) {
  const auto& f = eval_fixture();
  auto estimator = [&](const QuerySpec& q) { return baseline_estimate(q, f.catalog, f.stats); };
  const auto one = evaluate(f.records, f.catalog, estimator, {.threads = 1});
  const auto three = evaluate(f.records, f.catalog, estimator, {.threads = 3});
  EXPECT_EQ(one.to_json(false), three.to_json(false));
  std::ostringstream a;
  std::ostringstream b;
  one.write_csv(a);
  three.write_csv(b);
  EXPECT_EQ(a.str(), b.str());
  for (const auto& r : one.queries) EXPECT_GE(r.p_error, 1.0);
}

TEST(EvaluateTest, JsonAndCsvLayout) {
  const auto& f = eval_fixture();
  const auto report = evaluate(f.records, f.catalog, [](const QuerySpec&) { return 3.0; });
  const auto doc = nlohmann::json::parse(report.to_json());
  for (const auto* metric : {"q_error", "p_error"}) {
    for (const auto* p : {"p50", "p80", "p90", "p95", "p99"}) EXPECT_TRUE(doc[metric].contains(p)) << metric << p;
  }
  EXPECT_EQ(doc["n"], f.records.size());
  EXPECT_TRUE(doc.contains("wall_time_ms"));
  EXPECT_FALSE(nlohmann::json::parse(report.to_json(false)).contains("wall_time_ms"));
  std::ostringstream csv;
  report.write_csv(csv);
  const auto text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "sql,true,est,q_error,p_error");
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), f.records.size() + 1);
}

}  // namespace
}  // namespace price
