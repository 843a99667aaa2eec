#include "price/stats.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>

#include "binary_io.hpp"
#include "price/join_keys.hpp"

namespace price {

// ---------------------------------------------------------------------------
// SpaceSaving

SpaceSavingSummary::SpaceSavingSummary(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("SpaceSaving capacity must be positive");
  counters_.reserve(capacity_);
}

void SpaceSavingSummary::offer(std::int64_t item) {
  ++total_seen_;
  if (const auto it = index_.find(item); it != index_.end()) {
    ++counters_[it->second].count;
    return;
  }
  if (counters_.size() < capacity_) {
    index_.emplace(item, counters_.size());
    counters_.push_back({item, 1, 0});
    return;
  }
  std::size_t victim = 0;
  for (std::size_t i = 1; i < counters_.size(); ++i) {
    if (counters_[i].count < counters_[victim].count) victim = i;
  }
  auto& slot = counters_[victim];
  index_.erase(slot.item);
  const auto floor = slot.count;
  slot = {item, floor + 1, floor};
  index_.emplace(item, victim);
}

std::optional<SpaceSavingSummary::Counter> SpaceSavingSummary::find(std::int64_t item) const {
  const auto it = index_.find(item);
  if (it == index_.end()) return std::nullopt;
  return counters_[it->second];
}

std::vector<SpaceSavingSummary::Counter> SpaceSavingSummary::ranked() const {
  auto out = counters_;
  std::sort(out.begin(), out.end(), [](const Counter& a, const Counter& b) {
    return a.count != b.count ? a.count > b.count : a.item < b.item;
  });
  return out;
}

SpaceSavingSummary SpaceSavingSummary::restore(std::size_t capacity, std::uint64_t total_seen,
                                               std::vector<Counter> counters) {
  SpaceSavingSummary summary(capacity);
  if (counters.size() > capacity) throw DataError("SpaceSaving summary holds more counters than its capacity");
  summary.total_seen_ = total_seen;
  for (const auto& c : counters) {
    summary.index_.emplace(c.item, summary.counters_.size());
    summary.counters_.push_back(c);
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Distribution

double Distribution::mass() const {
  double sum = 0.0;
  for (const double b : bins) sum += b;
  return sum;
}

std::optional<std::size_t> Distribution::rank_of(std::int64_t item) const {
  if (!summary) return std::nullopt;
  const auto ranked = summary->ranked();
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].item == item) return i;
  }
  return std::nullopt;
}

namespace {

std::size_t histogram_bin(double value, double lo, double hi, std::size_t bin_count) {
  const double position = (value - lo) / (hi - lo) * static_cast<double>(bin_count);
  if (!(position > 0.0)) return 0;
  return std::min(bin_count - 1, static_cast<std::size_t>(position));
}

void normalize_counts(Distribution& dist) {
  dist.empty = dist.total == 0;
  for (std::size_t i = 0; i < dist.bins.size(); ++i) {
    dist.bins[i] = dist.empty ? 0.0 : static_cast<double>(dist.counts[i]) / static_cast<double>(dist.total);
  }
}

void refresh_category_bins(Distribution& dist) {
  std::fill(dist.bins.begin(), dist.bins.end(), 0.0);
  const auto ranked = dist.summary->ranked();
  std::uint64_t retained = 0;
  for (const auto& c : ranked) retained += c.count;
  dist.total = dist.summary->total_seen();
  dist.empty = retained == 0;
  if (dist.empty) return;
  for (std::size_t i = 0; i < ranked.size() && i < dist.bins.size(); ++i) {
    dist.bins[i] = static_cast<double>(ranked[i].count) / static_cast<double>(retained);
  }
}

Distribution empty_histogram(double lo, double hi, std::size_t bin_count) {
  Distribution dist;
  dist.kind = DistributionKind::histogram;
  if (!(lo < hi)) hi = lo + 1.0;
  dist.lo = lo;
  dist.hi = hi;
  dist.bins.assign(bin_count, 0.0);
  dist.counts.assign(bin_count, 0);
  return dist;
}

}  // namespace

Distribution build_histogram(std::span<const double> values, double lo, double hi, std::size_t bin_count) {
  auto dist = empty_histogram(lo, hi, bin_count);
  absl::flat_hash_set<double> distinct;
  distinct.reserve(values.size());
  for (const double v : values) {
    ++dist.counts[histogram_bin(v, dist.lo, dist.hi, bin_count)];
    distinct.insert(v == 0.0 ? 0.0 : v);
  }
  dist.total = values.size();
  dist.distinct = distinct.size();
  normalize_counts(dist);
  return dist;
}

Distribution build_histogram(const ColumnData& column, double lo, double hi, std::size_t bin_count) {
  auto dist = empty_histogram(lo, hi, bin_count);
  const auto& numbers = column.numbers();
  absl::flat_hash_set<double> distinct;
  distinct.reserve(numbers.size());
  const auto& nulls = column.null_mask();
  for (std::size_t i = 0; i < numbers.size(); ++i) {
    if (nulls[i]) continue;
    ++dist.counts[histogram_bin(numbers[i], dist.lo, dist.hi, bin_count)];
    ++dist.total;
    distinct.insert(numbers[i] == 0.0 ? 0.0 : numbers[i]);
  }
  dist.distinct = distinct.size();
  normalize_counts(dist);
  return dist;
}

Distribution build_category_summary(std::span<const std::int64_t> ids, std::size_t bin_count) {
  Distribution dist;
  dist.kind = DistributionKind::category_summary;
  dist.bins.assign(bin_count, 0.0);
  dist.summary.emplace(bin_count);
  absl::flat_hash_set<std::int64_t> distinct;
  distinct.reserve(ids.size());
  for (const auto id : ids) {
    dist.summary->offer(id);
    distinct.insert(id);
  }
  dist.distinct = distinct.size();
  refresh_category_bins(dist);
  return dist;
}

Distribution build_category_summary(const ColumnData& column, std::size_t bin_count) {
  Distribution dist;
  dist.kind = DistributionKind::category_summary;
  dist.bins.assign(bin_count, 0.0);
  dist.summary.emplace(bin_count);
  const auto& codes = column.codes();
  const auto& nulls = column.null_mask();
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (!nulls[i]) dist.summary->offer(codes[i]);
  }
  // Codes are dense over the non-null values seen at ingestion.
  dist.distinct = column.distinct_count();
  refresh_category_bins(dist);
  return dist;
}

std::size_t scaling_bucket(std::uint64_t matches, std::size_t bin_count) {
  if (matches == 0) return 0;
  return std::min<std::size_t>(bin_count - 1, static_cast<std::size_t>(std::bit_width(matches)));
}

Distribution scaling_factor_distribution(std::span<const std::int64_t> keys, std::span<const std::int64_t> other_keys,
                                         std::size_t bin_count) {
  Distribution dist;
  dist.kind = DistributionKind::scaling_factor;
  dist.bins.assign(bin_count, 0.0);
  dist.counts.assign(bin_count, 0);

  absl::flat_hash_map<std::int64_t, std::uint64_t> multiplicity;
  multiplicity.reserve(other_keys.size());
  for (const auto key : other_keys) {
    if (key != kNullKey) ++multiplicity[key];
  }
  for (const auto key : keys) {
    std::uint64_t matches = 0;
    if (key != kNullKey) {
      if (const auto it = multiplicity.find(key); it != multiplicity.end()) matches = it->second;
    }
    ++dist.counts[scaling_bucket(matches, bin_count)];
    dist.match_total += matches;
  }
  dist.total = keys.size();
  dist.distinct = multiplicity.size();
  normalize_counts(dist);
  return dist;
}

double range_selectivity(const Distribution& histogram, double lower, double upper) {
  if (histogram.kind != DistributionKind::histogram) {
    throw std::invalid_argument("range selectivity needs a histogram");
  }
  if (histogram.empty || lower > upper) return 0.0;
  const auto n = histogram.bins.size();
  const double width = (histogram.hi - histogram.lo) / static_cast<double>(n);
  double selected = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = histogram.lo + width * static_cast<double>(i);
    const double b = i + 1 == n ? histogram.hi : a + width;
    if (lower <= a && upper >= b) {
      selected += histogram.bins[i];
      continue;
    }
    const double overlap = std::min(b, upper) - std::max(a, lower);
    if (overlap > 0.0) selected += histogram.bins[i] * overlap / (b - a);
  }
  return std::clamp(selected, 0.0, 1.0);
}

double equality_selectivity(const Distribution& dist, double value) {
  if (dist.empty) return 0.0;
  if (dist.kind == DistributionKind::category_summary) {
    const auto counter = dist.summary->find(static_cast<std::int64_t>(value));
    if (!counter || dist.total == 0) return 0.0;
    return std::min(1.0, static_cast<double>(counter->count) / static_cast<double>(dist.total));
  }
  if (dist.kind != DistributionKind::histogram) throw std::invalid_argument("equality selectivity needs a value distribution");
  if (value < dist.lo || value > dist.hi) return 0.0;
  const auto n = dist.bins.size();
  const auto occupied = static_cast<double>(std::count_if(dist.bins.begin(), dist.bins.end(), [](double b) { return b > 0.0; }));
  const double per_bin_distinct = std::max(1.0, static_cast<double>(dist.distinct) / std::max(1.0, occupied));
  return dist.bins[histogram_bin(value, dist.lo, dist.hi, n)] / per_bin_distinct;
}

double predicate_selectivity(const Distribution& dist, CompareOp op, double value) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (op == CompareOp::eq) return equality_selectivity(dist, value);
  if (dist.kind != DistributionKind::histogram) {
    throw std::invalid_argument("operator " + std::string(to_string(op)) + " is incompatible with a categorical attribute");
  }
  switch (op) {
    case CompareOp::lt:
    case CompareOp::le:
      return range_selectivity(dist, -inf, value);
    case CompareOp::gt:
    case CompareOp::ge:
      return range_selectivity(dist, value, inf);
    case CompareOp::eq:
      break;
  }
  return 0.0;
}

HeuristicEstimates heuristic_estimates(std::span<const double> selectivities) {
  std::vector<double> sorted(selectivities.begin(), selectivities.end());
  for (const double s : sorted) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("selectivity outside [0,1]: " + std::to_string(s));
  }
  std::sort(sorted.begin(), sorted.end());
  HeuristicEstimates out;
  double exponent = 1.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    out.avi *= sorted[i];
    if (i < 4) {
      out.ebo *= std::pow(sorted[i], exponent);
      exponent *= 0.5;
    }
  }
  if (!sorted.empty()) out.min_sel = sorted.front();
  return out;
}

Distribution update_distribution(Distribution dist, std::span<const double> inserted) {
  if (dist.kind != DistributionKind::histogram) throw std::invalid_argument("value update needs a histogram");
  for (const double v : inserted) ++dist.counts[histogram_bin(v, dist.lo, dist.hi, dist.bins.size())];
  dist.total += inserted.size();
  normalize_counts(dist);
  return dist;
}

Distribution update_distribution(Distribution dist, std::span<const std::int64_t> inserted) {
  if (dist.kind != DistributionKind::category_summary) throw std::invalid_argument("item update needs a category summary");
  for (const auto id : inserted) dist.summary->offer(id);
  dist.distinct = std::max<std::uint64_t>(dist.distinct, dist.summary->counters().size());
  refresh_category_bins(dist);
  return dist;
}

// ---------------------------------------------------------------------------
// join keys

std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> encode_join_keys(const ColumnData& left,
                                                                                 const ColumnData& right) {
  if (left.kind() != right.kind()) throw DataError("join keys of different kinds");
  std::vector<std::int64_t> a(left.size());
  std::vector<std::int64_t> b(right.size());
  if (left.kind() == AttributeKind::continuous) {
    auto encode = [](const ColumnData& column, std::vector<std::int64_t>& out) {
      for (std::size_t i = 0; i < column.size(); ++i) {
        const double v = column.number(i);
        out[i] = column.is_null(i) ? kNullKey : std::bit_cast<std::int64_t>(v == 0.0 ? 0.0 : v);
      }
    };
    encode(left, a);
    encode(right, b);
    return {std::move(a), std::move(b)};
  }
  // Categorical: keys live in the left dictionary's code space; right-only
  // values get fresh codes past it so they only match each other.
  std::vector<std::int64_t> translate(right.dictionary().size());
  auto next = static_cast<std::int64_t>(left.dictionary().size());
  for (std::size_t code = 0; code < translate.size(); ++code) {
    const auto hit = left.lookup(right.dictionary()[code]);
    translate[code] = hit ? *hit : next++;
  }
  for (std::size_t i = 0; i < left.size(); ++i) a[i] = left.is_null(i) ? kNullKey : left.code(i);
  for (std::size_t i = 0; i < right.size(); ++i) {
    b[i] = right.is_null(i) ? kNullKey : translate[static_cast<std::size_t>(right.code(i))];
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// StatsStore

StatsStore StatsStore::build(const Catalog& catalog, BuildOptions options) {
  StatsStore store;
  const auto& tables = catalog.tables();
  store.attributes_.resize(tables.size());
  for (std::size_t t = 0; t < tables.size(); ++t) {
    if (!catalog.is_loaded(t)) throw DataError("table '" + tables[t].name + "' has no data loaded");
    store.attributes_[t].resize(tables[t].attributes.size());
    store.row_counts_.push_back(tables[t].row_count);
    store.table_names_.push_back(tables[t].name);
  }
  store.edges_.resize(catalog.joins().size());

  // One task per attribute, then one per join edge.
  std::vector<ColumnId> columns;
  for (std::size_t t = 0; t < tables.size(); ++t) {
    for (std::size_t a = 0; a < tables[t].attributes.size(); ++a) columns.push_back({t, a});
  }
  const std::size_t task_count = columns.size() + store.edges_.size();
  std::atomic<std::size_t> next{0};
  std::atomic<std::uint64_t> operations{0};

  auto run_task = [&](std::size_t task) {
    if (task < columns.size()) {
      const auto id = columns[task];
      const auto& column = catalog.column(id);
      AttributeStats stats;
      stats.rows = column.size();
      if (column.kind() == AttributeKind::continuous) {
        const auto [lo, hi] = catalog.domain(id);
        stats.distribution = build_histogram(column, lo, hi);
      } else {
        stats.distribution = build_category_summary(column);
      }
      stats.non_null = stats.distribution.total;
      stats.distinct = stats.distribution.distinct;
      store.attributes_[id.table][id.attribute] = std::move(stats);
      operations += column.size();
      return;
    }
    const auto e = task - columns.size();
    const auto& edge = catalog.joins()[e];
    const auto& left = catalog.column(edge.left);
    const auto& right = catalog.column(edge.right);
    const auto [left_keys, right_keys] = encode_join_keys(left, right);
    store.edges_[e].left = scaling_factor_distribution(left_keys, right_keys);
    store.edges_[e].right = scaling_factor_distribution(right_keys, left_keys);
    operations += 2 * (left.size() + right.size());
  };

  auto worker = [&] {
    for (auto task = next++; task < task_count; task = next++) run_task(task);
  };
  const unsigned threads = std::max(1U, std::min<unsigned>(options.threads, static_cast<unsigned>(task_count)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  store.operations_ = operations.load();
  return store;
}

const AttributeStats& StatsStore::attribute(ColumnId column) const {
  return attributes_.at(column.table).at(column.attribute);
}

AttributeStats& StatsStore::attribute(ColumnId column) { return attributes_.at(column.table).at(column.attribute); }

const Distribution& StatsStore::scaling(std::size_t edge, JoinSide side) const {
  const auto& stats = edges_.at(edge);
  return side == JoinSide::left ? stats.left : stats.right;
}

void StatsStore::insert_values(ColumnId column, std::span<const double> values) {
  auto& stats = attribute(column);
  stats.distribution = update_distribution(std::move(stats.distribution), values);
  stats.rows += values.size();
  stats.non_null = stats.distribution.total;
  row_counts_.at(column.table) = std::max(row_counts_.at(column.table), stats.rows);
}

void StatsStore::insert_items(ColumnId column, std::span<const std::int64_t> items) {
  auto& stats = attribute(column);
  stats.distribution = update_distribution(std::move(stats.distribution), items);
  stats.rows += items.size();
  stats.non_null = stats.distribution.total;
  stats.distinct = stats.distribution.distinct;
  row_counts_.at(column.table) = std::max(row_counts_.at(column.table), stats.rows);
}

void StatsStore::check_compatible(const Catalog& catalog) const {
  if (catalog.tables().size() != attributes_.size() || catalog.joins().size() != edges_.size()) {
    throw DataError("statistics do not match catalog '" + catalog.name() + "'");
  }
  for (std::size_t t = 0; t < attributes_.size(); ++t) {
    if (catalog.table(t).name != table_names_[t] || catalog.table(t).attributes.size() != attributes_[t].size()) {
      throw DataError("statistics do not match catalog table '" + catalog.table(t).name + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Serialization: header, then every bin array, then a metadata block.

namespace {

constexpr std::string_view kStatsMagic = "PRICESTS";
constexpr std::uint32_t kStatsVersion = 1;

void write_metadata(io::Writer& w, const Distribution& d) {
  w.u8(static_cast<std::uint8_t>(d.kind));
  w.u8(d.empty ? 1 : 0);
  w.u64(d.total);
  w.u64(d.distinct);
  w.f64(d.lo);
  w.f64(d.hi);
  w.u64(d.counts.size());
  for (const auto c : d.counts) w.u64(c);
  w.u8(d.summary ? 1 : 0);
  if (d.summary) {
    w.u64(d.summary->capacity());
    w.u64(d.summary->total_seen());
    w.u64(d.summary->counters().size());
    for (const auto& c : d.summary->counters()) {
      w.u64(static_cast<std::uint64_t>(c.item));
      w.u64(c.count);
      w.u64(c.overestimation);
    }
  }
  w.u32(d.bucketing);
  w.u64(d.match_total);
}

void read_metadata(io::Reader& r, Distribution& d) {
  const auto kind = r.u8();
  if (kind > static_cast<std::uint8_t>(DistributionKind::scaling_factor)) throw DataError("corrupt statistics: bad kind");
  d.kind = static_cast<DistributionKind>(kind);
  d.empty = r.u8() != 0;
  d.total = r.u64();
  d.distinct = r.u64();
  d.lo = r.f64();
  d.hi = r.f64();
  d.counts.resize(r.length(1U << 20U));
  for (auto& c : d.counts) c = r.u64();
  if (r.u8()) {
    const auto capacity = r.length(1U << 20U);
    const auto total_seen = r.u64();
    std::vector<SpaceSavingSummary::Counter> counters(r.length(capacity));
    for (auto& c : counters) {
      c.item = static_cast<std::int64_t>(r.u64());
      c.count = r.u64();
      c.overestimation = r.u64();
    }
    if (capacity == 0) throw DataError("corrupt statistics: zero capacity");
    d.summary = SpaceSavingSummary::restore(capacity, total_seen, std::move(counters));
  }
  d.bucketing = r.u32();
  d.match_total = r.u64();
}

}  // namespace

void StatsStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  io::Writer w(out);

  std::vector<const Distribution*> all;
  for (const auto& table : attributes_) {
    for (const auto& a : table) all.push_back(&a.distribution);
  }
  for (const auto& e : edges_) {
    all.push_back(&e.left);
    all.push_back(&e.right);
  }

  w.bytes(kStatsMagic.data(), kStatsMagic.size());
  w.u32(kStatsVersion);
  w.u32(static_cast<std::uint32_t>(kFeatureBins));
  w.u64(attributes_.size());
  w.u64(all.size() - 2 * edges_.size());
  w.u64(edges_.size());

  for (const auto* d : all) {
    for (std::size_t i = 0; i < kFeatureBins; ++i) w.f64(i < d->bins.size() ? d->bins[i] : 0.0);
  }

  w.u64(operations_);
  for (std::size_t t = 0; t < attributes_.size(); ++t) {
    w.string(table_names_[t]);
    w.u64(row_counts_[t]);
    w.u64(attributes_[t].size());
    for (const auto& a : attributes_[t]) {
      w.u64(a.rows);
      w.u64(a.non_null);
      w.u64(a.distinct);
    }
  }
  for (const auto* d : all) write_metadata(w, *d);
  if (!out) throw DataError("write failed for " + path.string());
}

StatsStore StatsStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  io::Reader r(in, "statistics file");
  r.expect_magic(kStatsMagic);
  if (const auto version = r.u32(); version != kStatsVersion) {
    throw DataError("statistics version mismatch: " + std::to_string(version));
  }
  if (r.u32() != kFeatureBins) throw DataError("statistics bin count mismatch");
  constexpr std::uint64_t kLimit = 1U << 24U;
  const auto table_count = r.length(kLimit);
  const auto attribute_count = r.length(kLimit);
  const auto edge_count = r.length(kLimit);

  std::vector<Distribution> all(attribute_count + 2 * edge_count);
  for (auto& d : all) {
    d.bins.resize(kFeatureBins);
    for (auto& b : d.bins) b = r.f64();
  }

  StatsStore store;
  store.operations_ = r.u64();
  std::size_t cursor = 0;
  store.attributes_.resize(table_count);
  for (std::size_t t = 0; t < table_count; ++t) {
    store.table_names_.push_back(r.string());
    store.row_counts_.push_back(r.u64());
    store.attributes_[t].resize(r.length(kLimit));
    for (auto& a : store.attributes_[t]) {
      a.rows = r.u64();
      a.non_null = r.u64();
      a.distinct = r.u64();
      if (cursor >= attribute_count) throw DataError("corrupt statistics file: attribute count mismatch");
      ++cursor;
    }
  }
  if (cursor != attribute_count) throw DataError("corrupt statistics file: attribute count mismatch");
  for (auto& d : all) read_metadata(r, d);

  cursor = 0;
  for (auto& table : store.attributes_) {
    for (auto& a : table) a.distribution = std::move(all[cursor++]);
  }
  store.edges_.resize(edge_count);
  for (auto& e : store.edges_) {
    e.left = std::move(all[cursor++]);
    e.right = std::move(all[cursor++]);
  }
  return store;
}

}  // namespace price
