#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "price/catalog.hpp"
#include "price/query.hpp"
#include "price/workload.hpp"

namespace price {

/// max(est / truth, truth / est). Both must be positive.
double q_error(double estimate, double truth);

/// Cardinality per connected table subset, keyed by table_set_key ("a,b").
using CardMap = std::map<std::string, double>;

/// Binary join tree. Leaves are filtered scans, inner nodes hash joins.
struct Plan {
  std::vector<std::string> tables;  // sorted table names covered by this node
  std::shared_ptr<const Plan> left;
  std::shared_ptr<const Plan> right;

  bool is_leaf() const { return left == nullptr; }
  std::string key() const;
  /// Parenthesized form, e.g. "((a b) c)".
  std::string to_string() const;
};

/// Sum of leaf cardinalities plus, per join, card(left) + card(right) + card(output).
double plan_cost(const Plan& plan, const CardMap& cards);

inline constexpr std::size_t kMaxPlanTables = 12;

/// Minimum-cost bushy plan by dynamic programming over connected subsets.
/// Ties go to the split whose left side has the smallest table-name list.
Plan optimal_plan(const QuerySpec& query, const Catalog& catalog, const CardMap& cards);

/// plan_cost(P_est, truth) / plan_cost(P_truth, truth), with both maps clamped to >= 1.
double p_error(const QuerySpec& query, const Catalog& catalog, const CardMap& estimates, const CardMap& truth);

/// Nearest-rank percentile (p in (0, 100]) of a non-empty sample.
double quantile(std::vector<double> values, double percentile);

inline constexpr std::array<double, 5> kReportPercentiles{50, 80, 90, 95, 99};

struct QueryResult {
  std::string sql;
  double truth = 0.0;
  double estimate = 0.0;
  double q_error = 1.0;
  double p_error = 1.0;
};

struct ErrorReport {
  std::vector<QueryResult> queries;
  std::array<double, 5> q_error_quantiles{};
  std::array<double, 5> p_error_quantiles{};
  std::size_t skipped = 0;
  std::vector<std::string> skip_reasons;
  double wall_time_ms = 0.0;

  /// {"q_error": {p50..p99}, "p_error": {...}, "n", "skipped", "wall_time_ms"}
  std::string to_json(bool include_timing = true) const;
  /// Header plus one row per query: sql,true,est,q_error,p_error.
  void write_csv(std::ostream& out) const;
};

/// Cardinality estimate for a parsed query; must be safe to call concurrently.
using Estimator = std::function<double(const QuerySpec&)>;

struct EvaluateOptions {
  unsigned threads = 1;
};

/// Estimates every connected sub-query of every record, then computes the
/// full query's Q-ERROR and the P-ERROR of the plan the estimates induce.
/// Records whose estimation fails are skipped and counted.
ErrorReport evaluate(const std::vector<WorkloadRecord>& records, const Catalog& catalog, const Estimator& estimator,
                     EvaluateOptions options = {});

void write_report(const ErrorReport& report, const std::filesystem::path& json_path, const std::filesystem::path& csv_path);

}  // namespace price
