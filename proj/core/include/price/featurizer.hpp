#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "price/catalog.hpp"
#include "price/query.hpp"
#include "price/stats.hpp"

namespace price {

inline constexpr std::size_t kJoinTokenWidth = 2 * kFeatureBins;       // value dist | scaling dist
inline constexpr std::size_t kFilterTokenWidth = kFeatureBins + 3;      // value dist | lower | upper | selectivity
inline constexpr std::size_t kTableTokenWidth = 4;                      // AVI | MinSel | EBO | log10(rows)/10
inline constexpr std::size_t kQueryFeatureWidth = 3;                    // tables/16 | joins/16 | log10(baseline)/10

/// Model inputs for one query. Token order follows the canonical query order.
struct FeatureBundle {
  std::vector<std::vector<double>> join_tokens;
  std::vector<std::vector<double>> filter_tokens;
  std::vector<std::vector<double>> table_tokens;
  std::array<double, kQueryFeatureWidth> query_features{};

  std::string to_json() const;
};

/// Independence-assumption estimate from 1-D statistics:
/// prod |T_i| * prod_joins 1 / max(ndv_l, ndv_r) * prod selectivities, at least 1.
double baseline_estimate(const QuerySpec& query, const Catalog& catalog, const StatsStore& stats);

/// Selectivity of every filtered attribute's region, in canonical attribute order.
struct FilterSummary {
  ColumnId column;
  double lower = 0.0;
  double upper = 0.0;
  double selectivity = 1.0;
};
std::vector<FilterSummary> summarize_filters(const QuerySpec& query, const Catalog& catalog, const StatsStore& stats);

FeatureBundle featurize(const QuerySpec& query, const Catalog& catalog, const StatsStore& stats);

}  // namespace price
