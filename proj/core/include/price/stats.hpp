#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "price/catalog.hpp"
#include "price/predicate.hpp"

namespace price {

/// Length of every distribution token fed to the model.
inline constexpr std::size_t kFeatureBins = 40;

enum class DistributionKind : std::uint8_t { histogram, category_summary, scaling_factor };

/// Frequent-items summary with `capacity` counters (Metwally et al. replace-min rule).
class SpaceSavingSummary {
 public:
  struct Counter {
    std::int64_t item = 0;
    std::uint64_t count = 0;
    std::uint64_t overestimation = 0;
  };

  explicit SpaceSavingSummary(std::size_t capacity = kFeatureBins);

  void offer(std::int64_t item);

  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_seen() const { return total_seen_; }
  /// Upper bound on count - true_count for any tracked item.
  std::uint64_t error_bound() const { return total_seen_ / capacity_; }
  std::optional<Counter> find(std::int64_t item) const;
  const std::vector<Counter>& counters() const { return counters_; }
  /// Descending count, ascending item id.
  std::vector<Counter> ranked() const;

  /// Reinstates counters read back from disk.
  static SpaceSavingSummary restore(std::size_t capacity, std::uint64_t total_seen, std::vector<Counter> counters);

 private:
  std::size_t capacity_;
  std::uint64_t total_seen_ = 0;
  std::vector<Counter> counters_;
  std::unordered_map<std::int64_t, std::size_t> index_;
};

/// A fixed-length normalized frequency vector plus whatever metadata its kind
/// needs to be queried and updated.
struct Distribution {
  DistributionKind kind = DistributionKind::histogram;
  std::vector<double> bins;
  bool empty = true;
  /// Non-null values folded in (histogram, category summary) or rows on the side (scaling factor).
  std::uint64_t total = 0;
  std::uint64_t distinct = 0;

  // histogram
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::uint64_t> counts;

  // category summary
  std::optional<SpaceSavingSummary> summary;

  // scaling factor: bucket 0 holds unmatched tuples, bucket b >= 1 holds match
  // counts c with 1 + floor(log2 c) == b (saturating at the last bucket).
  std::uint32_t bucketing = 1;
  std::uint64_t match_total = 0;

  double mass() const;
  /// Bin position of a categorical item in the ranked summary, or nullopt when untracked.
  std::optional<std::size_t> rank_of(std::int64_t item) const;
};

Distribution build_histogram(std::span<const double> values, double lo, double hi, std::size_t bin_count = kFeatureBins);
/// Builds from a column, skipping nulls.
Distribution build_histogram(const ColumnData& column, double lo, double hi, std::size_t bin_count = kFeatureBins);

Distribution build_category_summary(std::span<const std::int64_t> ids, std::size_t bin_count = kFeatureBins);
Distribution build_category_summary(const ColumnData& column, std::size_t bin_count = kFeatureBins);

/// Distribution over `keys` of how many rows of `other_keys` each tuple matches.
Distribution scaling_factor_distribution(std::span<const std::int64_t> keys, std::span<const std::int64_t> other_keys,
                                         std::size_t bin_count = kFeatureBins);

/// Bucket index for a match count.
std::size_t scaling_bucket(std::uint64_t matches, std::size_t bin_count = kFeatureBins);

/// Fraction of the histogram mass inside [lower, upper] under a piecewise-uniform model.
double range_selectivity(const Distribution& histogram, double lower, double upper);
/// Fraction of rows equal to `value` (histogram) or to item `value` (category summary).
double equality_selectivity(const Distribution& dist, double value);
/// Selectivity of `A op value`. Range operators are rejected on category summaries.
double predicate_selectivity(const Distribution& dist, CompareOp op, double value);

struct HeuristicEstimates {
  double avi = 1.0;
  double min_sel = 1.0;
  double ebo = 1.0;
};

/// AVI = product, MinSel = minimum, EBO = s1 * s2^(1/2) * s3^(1/4) * s4^(1/8)
/// over the ascending selectivities.
HeuristicEstimates heuristic_estimates(std::span<const double> selectivities);

/// Folds new values into a histogram (clamped to the edge bins) and renormalizes.
Distribution update_distribution(Distribution dist, std::span<const double> inserted);
/// Folds new item ids into a category summary.
Distribution update_distribution(Distribution dist, std::span<const std::int64_t> inserted);

enum class JoinSide : std::uint8_t { left, right };

struct AttributeStats {
  Distribution distribution;
  std::uint64_t rows = 0;
  std::uint64_t non_null = 0;
  std::uint64_t distinct = 0;
};

struct EdgeStats {
  Distribution left;
  Distribution right;
};

/// All per-column and per-join statistics for one catalog.
class StatsStore {
 public:
  struct BuildOptions {
    unsigned threads = 1;
  };

  static StatsStore build(const Catalog& catalog, BuildOptions options);
  static StatsStore build(const Catalog& catalog) { return build(catalog, BuildOptions{}); }

  const AttributeStats& attribute(ColumnId column) const;
  AttributeStats& attribute(ColumnId column);
  const Distribution& scaling(std::size_t edge, JoinSide side) const;
  std::uint64_t row_count(std::size_t table) const { return row_counts_.at(table); }
  std::size_t table_count() const { return row_counts_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  /// Row visits performed by the last build.
  std::uint64_t operations() const { return operations_; }

  /// Appends rows to one continuous or categorical attribute's distribution.
  void insert_values(ColumnId column, std::span<const double> values);
  void insert_items(ColumnId column, std::span<const std::int64_t> items);

  /// Fails unless table/attribute/edge shapes line up with `catalog`.
  void check_compatible(const Catalog& catalog) const;

  void save(const std::filesystem::path& path) const;
  static StatsStore load(const std::filesystem::path& path);

 private:
  std::vector<std::vector<AttributeStats>> attributes_;
  std::vector<EdgeStats> edges_;
  std::vector<std::uint64_t> row_counts_;
  std::vector<std::string> table_names_;
  std::uint64_t operations_ = 0;
};

}  // namespace price
