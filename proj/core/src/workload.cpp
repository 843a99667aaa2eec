#include "price/workload.hpp"

#include <algorithm>
#include <bit>
#include <exception>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

namespace price {

namespace {

using Mask = std::uint64_t;

Mask bit(std::size_t i) { return Mask{1} << i; }

std::vector<std::size_t> nodes_of(Mask mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; mask; ++i, mask >>= 1U) {
    if (mask & 1U) out.push_back(i);
  }
  return out;
}

}  // namespace

std::vector<Subgraph> enumerate_connected_subgraphs(const JoinGraph& graph, std::size_t cap) {
  const auto n = graph.node_count;
  if (n > cap) {
    throw std::invalid_argument("join graph has " + std::to_string(n) + " nodes, above the cap of " + std::to_string(cap));
  }
  if (n > 63) throw std::invalid_argument("join graph too large");

  std::vector<Mask> adjacency(n, 0);
  for (const auto& [a, b] : graph.edges) {
    adjacency[a] |= bit(b);
    adjacency[b] |= bit(a);
  }
  auto neighborhood = [&](Mask set) {
    Mask out = 0;
    for (const auto v : nodes_of(set)) out |= adjacency[v];
    return out & ~set;
  };

  // Connected-subgraph enumeration seeded from each node, excluding lower
  // seeds so each set is produced once.
  std::vector<Mask> found;
  std::function<void(Mask, Mask)> grow = [&](Mask set, Mask excluded) {
    const Mask frontier = neighborhood(set) & ~excluded;
    if (!frontier) return;
    for (Mask sub = frontier; sub; sub = (sub - 1) & frontier) found.push_back(set | sub);
    for (Mask sub = frontier; sub; sub = (sub - 1) & frontier) grow(set | sub, excluded | frontier);
  };
  for (std::size_t i = n; i-- > 0;) {
    found.push_back(bit(i));
    grow(bit(i), bit(i + 1) - 1);
  }

  std::vector<Subgraph> out;
  for (const auto mask : found) {
    if (std::popcount(mask) < 2) continue;
    Subgraph s;
    s.nodes = nodes_of(mask);
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      if ((mask & bit(graph.edges[e].first)) && (mask & bit(graph.edges[e].second))) s.edges.push_back(e);
    }
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const Subgraph& a, const Subgraph& b) {
    return a.nodes.size() != b.nodes.size() ? a.nodes.size() < b.nodes.size() : a.nodes < b.nodes;
  });
  return out;
}

std::vector<ColumnId> filterable_attributes(const Subgraph& subgraph, const Catalog& catalog) {
  std::vector<ColumnId> out;
  for (const auto t : subgraph.nodes) {
    const auto& meta = catalog.table(t);
    for (std::size_t a = 0; a < meta.attributes.size(); ++a) {
      const ColumnId id{t, a};
      const bool key = std::any_of(catalog.joins().begin(), catalog.joins().end(),
                                   [&](const JoinEdge& j) { return j.left == id || j.right == id; });
      if (key) continue;
      if (meta.attributes[a].kind == AttributeKind::categorical && catalog.column(id).distinct_count() == 0) continue;
      out.push_back(id);
    }
  }
  return out;
}

QuerySpec generate_query(const Subgraph& subgraph, const Catalog& catalog, const StatsStore& stats, Rng& rng) {
  auto candidates = filterable_attributes(subgraph, catalog);
  std::vector<Predicate> filters;
  if (!candidates.empty()) {
    const auto m = candidates.size();
    const auto n = 1 + static_cast<std::size_t>(rng.index(m));
    // Partial Fisher-Yates: the first n slots become a uniform sample without replacement.
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.index(m - i));
      std::swap(candidates[i], candidates[j]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto id = candidates[i];
      if (catalog.attribute(id).kind == AttributeKind::continuous) {
        const auto& hist = stats.attribute(id).distribution;
        const auto [dom_lo, dom_hi] = hist.kind == DistributionKind::histogram && hist.lo < hist.hi
                                          ? std::pair{hist.lo, hist.hi}
                                          : catalog.domain(id);
        double lower = rng.uniform(dom_lo, dom_hi);
        double upper = rng.uniform(dom_lo, dom_hi);
        if (lower > upper) std::swap(lower, upper);
        filters.push_back({id, CompareOp::ge, lower, {}});
        filters.push_back({id, CompareOp::le, upper, {}});
      } else {
        const auto& column = catalog.column(id);
        const auto code = static_cast<std::size_t>(rng.index(column.distinct_count()));
        filters.push_back({id, CompareOp::eq, static_cast<double>(code), column.dictionary()[code]});
      }
    }
  }
  return make_query(catalog, subgraph.nodes, std::move(filters));
}

WorkloadRecord label_query(const QuerySpec& query, const Catalog& catalog) {
  WorkloadRecord record;
  record.sql = query.source_text;
  for (const auto& sub : sub_queries(query, catalog)) {
    record.subs.emplace_back(table_set_key(sub.tables, catalog), true_cardinality(sub, catalog));
  }
  record.card = record.subs.back().second;  // the full table set sorts last
  return record;
}

std::vector<WorkloadRecord> generate_workload(const Catalog& catalog, const StatsStore& stats, WorkloadOptions options) {
  if (options.count == 0) throw std::invalid_argument("workload size must be at least 1");
  auto subgraphs = enumerate_connected_subgraphs(catalog.join_graph(), options.subgraph_cap);
  if (subgraphs.empty()) {
    for (std::size_t t = 0; t < catalog.tables().size(); ++t) subgraphs.push_back({{t}, {}});
  }
  if (subgraphs.empty()) throw DataError("catalog has no tables");

  std::vector<WorkloadRecord> records(options.count);
  auto make = [&](std::size_t i) {
    Rng rng(mix_seed(options.seed, i));
    for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
      const auto& subgraph = subgraphs[static_cast<std::size_t>(rng.index(subgraphs.size()))];
      auto query = generate_query(subgraph, catalog, stats, rng);
      if (options.min_card == 0 || true_cardinality(query, catalog) >= options.min_card) {
        records[i] = label_query(query, catalog);
        return;
      }
    }
    throw DataError("no query with at least " + std::to_string(options.min_card) + " rows after " +
                    std::to_string(options.max_attempts) + " attempts");
  };
  const unsigned threads = std::max(1U, std::min<unsigned>(options.threads, static_cast<unsigned>(options.count)));
  if (threads == 1) {
    for (std::size_t i = 0; i < options.count; ++i) make(i);
    return records;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < options.count; i += threads) make(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return records;
}

void write_workload(std::ostream& out, const std::vector<WorkloadRecord>& records) {
  for (const auto& r : records) {
    nlohmann::ordered_json line;
    line["sql"] = r.sql;
    line["card"] = r.card;
    line["subs"] = nlohmann::ordered_json::object();
    for (const auto& [key, card] : r.subs) line["subs"][key] = card;
    out << line.dump() << '\n';
  }
}

void write_workload(const std::filesystem::path& path, const std::vector<WorkloadRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_workload(out, records);
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<WorkloadRecord> read_workload(std::istream& in) {
  std::vector<WorkloadRecord> records;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = nlohmann::ordered_json::parse(line);
      WorkloadRecord r;
      r.sql = doc.at("sql").get<std::string>();
      r.card = doc.at("card").get<std::uint64_t>();
      if (doc.contains("subs")) {
        for (const auto& [key, value] : doc.at("subs").items()) r.subs.emplace_back(key, value.get<std::uint64_t>());
      }
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("workload line " + std::to_string(number) + ": " + e.what());
    }
  }
  return records;
}

std::vector<WorkloadRecord> read_workload(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_workload(in);
}

}  // namespace price
