#include "price/featurizer.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace price {

namespace {

double unit(double x, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
}

const std::vector<double>& bins_of(const Distribution& dist) {
  if (dist.bins.size() != kFeatureBins) throw DataError("distribution does not have the token width");
  return dist.bins;
}

}  // namespace

std::vector<FilterSummary> summarize_filters(const QuerySpec& query, const Catalog& catalog, const StatsStore& stats) {
  const auto regions = canonicalize(query, catalog);
  std::vector<FilterSummary> out;
  for (const auto& p : query.filters) {
    if (!out.empty() && out.back().column == p.column) continue;
    const auto& region = regions.at(p.column);
    const auto& dist = stats.attribute(p.column).distribution;
    FilterSummary summary;
    summary.column = p.column;
    if (region.kind == AttributeKind::categorical) {
      const auto rank = region.item ? dist.rank_of(*region.item) : std::nullopt;
      const double position = rank ? static_cast<double>(*rank) / static_cast<double>(kFeatureBins) : 1.0;
      summary.lower = summary.upper = position;
      summary.selectivity = region.empty ? 0.0 : equality_selectivity(dist, static_cast<double>(*region.item));
    } else {
      const auto& iv = region.interval;
      summary.lower = unit(iv.lower, dist.lo, dist.hi);
      summary.upper = std::max(summary.lower, unit(iv.upper, dist.lo, dist.hi));
      if (region.empty) {
        summary.selectivity = 0.0;
      } else if (iv.lower == iv.upper) {
        summary.selectivity = equality_selectivity(dist, iv.lower);
      } else {
        summary.selectivity = range_selectivity(dist, iv.lower, iv.upper);
      }
    }
    out.push_back(summary);
  }
  return out;
}

double baseline_estimate(const QuerySpec& query, const Catalog& catalog, const StatsStore& stats) {
  double estimate = 1.0;
  for (const auto t : query.tables) estimate *= static_cast<double>(stats.row_count(t));
  for (const auto e : query.joins) {
    const auto& j = catalog.joins()[e];
    const auto distinct = std::max({stats.attribute(j.left).distinct, stats.attribute(j.right).distinct, std::uint64_t{1}});
    estimate /= static_cast<double>(distinct);
  }
  for (const auto& f : summarize_filters(query, catalog, stats)) estimate *= f.selectivity;
  return std::max(1.0, estimate);
}

FeatureBundle featurize(const QuerySpec& query, const Catalog& catalog, const StatsStore& stats) {
  stats.check_compatible(catalog);
  FeatureBundle bundle;

  for (const auto e : query.joins) {
    const auto& j = catalog.joins()[e];
    for (const auto side : {JoinSide::left, JoinSide::right}) {
      const auto column = side == JoinSide::left ? j.left : j.right;
      const auto& value = bins_of(stats.attribute(column).distribution);
      const auto& scaling = bins_of(stats.scaling(e, side));
      std::vector<double> token;
      token.reserve(kJoinTokenWidth);
      token.insert(token.end(), value.begin(), value.end());
      token.insert(token.end(), scaling.begin(), scaling.end());
      bundle.join_tokens.push_back(std::move(token));
    }
  }

  const auto filters = summarize_filters(query, catalog, stats);
  for (const auto& f : filters) {
    const auto& value = bins_of(stats.attribute(f.column).distribution);
    std::vector<double> token(value.begin(), value.end());
    token.push_back(f.lower);
    token.push_back(f.upper);
    token.push_back(f.selectivity);
    bundle.filter_tokens.push_back(std::move(token));
  }

  for (const auto t : query.tables) {
    std::vector<double> selectivities;
    for (const auto& f : filters) {
      if (f.column.table == t) selectivities.push_back(f.selectivity);
    }
    const auto h = heuristic_estimates(selectivities);
    const auto rows = static_cast<double>(std::max<std::uint64_t>(1, stats.row_count(t)));
    bundle.table_tokens.push_back({h.avi, h.min_sel, h.ebo, std::log10(rows) / 10.0});
  }

  bundle.query_features = {static_cast<double>(query.tables.size()) / 16.0, static_cast<double>(query.joins.size()) / 16.0,
                           std::log10(baseline_estimate(query, catalog, stats)) / 10.0};
  return bundle;
}

std::string FeatureBundle::to_json() const {
  nlohmann::ordered_json doc;
  doc["join_tokens"] = join_tokens;
  doc["filter_tokens"] = filter_tokens;
  doc["table_tokens"] = table_tokens;
  doc["query_features"] = query_features;
  return doc.dump();
}

}  // namespace price
