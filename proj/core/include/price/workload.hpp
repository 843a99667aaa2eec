#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "price/catalog.hpp"
#include "price/query.hpp"
#include "price/random.hpp"
#include "price/stats.hpp"

namespace price {

/// Connected node subset of a join graph with its induced edges.
struct Subgraph {
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> edges;

  friend bool operator==(const Subgraph&, const Subgraph&) = default;
};

inline constexpr std::size_t kDefaultSubgraphCap = 12;

/// All connected induced subgraphs with at least two nodes, ordered by size
/// then by node list.
std::vector<Subgraph> enumerate_connected_subgraphs(const JoinGraph& graph, std::size_t cap = kDefaultSubgraphCap);

/// Exact COUNT(*) of a conjunctive equi-join query, via filtered scans and
/// left-deep hash joins that project away tables once all their joins are done.
std::uint64_t true_cardinality(const QuerySpec& query, const Catalog& catalog);

/// Attributes eligible for generated filters: everything not used as a join key.
std::vector<ColumnId> filterable_attributes(const Subgraph& subgraph, const Catalog& catalog);

/// Random filters over a subgraph: n ~ U{1..m} attributes, ranges for
/// continuous, one dictionary value for categorical.
QuerySpec generate_query(const Subgraph& subgraph, const Catalog& catalog, const StatsStore& stats, Rng& rng);

struct WorkloadRecord {
  std::string sql;
  std::uint64_t card = 0;
  /// Table-set key ("a,b") -> exact cardinality, in sub-query order.
  std::vector<std::pair<std::string, std::uint64_t>> subs;

  friend bool operator==(const WorkloadRecord&, const WorkloadRecord&) = default;
};

struct WorkloadOptions {
  std::size_t count = 1;
  std::uint64_t seed = 42;
  unsigned threads = 1;
  std::size_t subgraph_cap = kDefaultSubgraphCap;
  // Queries with fewer result rows are redrawn; 0 keeps empty results.
  std::uint64_t min_card = 1;
  std::size_t max_attempts = 1000;
};

std::vector<WorkloadRecord> generate_workload(const Catalog& catalog, const StatsStore& stats, WorkloadOptions options);

/// Cardinalities of `query` and all of its connected sub-queries.
WorkloadRecord label_query(const QuerySpec& query, const Catalog& catalog);

void write_workload(std::ostream& out, const std::vector<WorkloadRecord>& records);
void write_workload(const std::filesystem::path& path, const std::vector<WorkloadRecord>& records);
std::vector<WorkloadRecord> read_workload(std::istream& in);
std::vector<WorkloadRecord> read_workload(const std::filesystem::path& path);

}  // namespace price
