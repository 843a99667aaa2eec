#include <algorithm>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "price/join_keys.hpp"
#include "price/workload.hpp"

namespace price {

namespace {

bool satisfies(const ColumnData& column, std::size_t row, const Predicate& p) {
  if (column.is_null(row)) return false;
  if (column.kind() == AttributeKind::categorical) return p.value >= 0.0 && column.code(row) == static_cast<std::int32_t>(p.value);
  const double v = column.number(row);
  switch (p.op) {
    case CompareOp::lt:
      return v < p.value;
    case CompareOp::le:
      return v <= p.value;
    case CompareOp::gt:
      return v > p.value;
    case CompareOp::ge:
      return v >= p.value;
    case CompareOp::eq:
      return v == p.value;
  }
  return false;
}

std::vector<std::uint32_t> filter_rows(std::size_t table, const QuerySpec& query, const Catalog& catalog) {
  std::vector<const Predicate*> predicates;
  for (const auto& p : query.filters) {
    if (p.column.table == table) predicates.push_back(&p);
  }
  const auto rows = catalog.table(table).row_count;
  std::vector<std::uint32_t> out;
  out.reserve(rows);
  for (std::size_t row = 0; row < rows; ++row) {
    bool keep = true;
    for (const auto* p : predicates) {
      if (!satisfies(catalog.column(p->column), row, *p)) {
        keep = false;
        break;
      }
    }
    if (keep) out.push_back(static_cast<std::uint32_t>(row));
  }
  return out;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw std::overflow_error("cardinality exceeds 64-bit range");
  return out;
}

struct EdgeKeys {
  std::size_t left_table = 0;
  std::size_t right_table = 0;
  std::vector<std::int64_t> left;
  std::vector<std::int64_t> right;

  const std::vector<std::int64_t>& keys_of(std::size_t table) const { return table == left_table ? left : right; }
  std::size_t other(std::size_t table) const { return table == left_table ? right_table : left_table; }
};

// Intermediate result: one row-id tuple per live table, with a multiplicity
// that stands in for tables already projected away.
struct Partial {
  std::vector<std::size_t> live;
  std::vector<std::uint32_t> rows;  // row-major, width = live.size()
  std::vector<std::uint64_t> weights;

  std::size_t width() const { return live.size(); }
  std::size_t size() const { return weights.size(); }
  std::size_t slot(std::size_t table) const {
    return static_cast<std::size_t>(std::find(live.begin(), live.end(), table) - live.begin());
  }
};

}  // namespace

std::uint64_t true_cardinality(const QuerySpec& query, const Catalog& catalog) {
  if (query.tables.empty()) return 0;
  std::unordered_map<std::size_t, std::vector<std::uint32_t>> filtered;
  for (const auto t : query.tables) {
    if (!catalog.is_loaded(t)) throw DataError("table '" + catalog.table(t).name + "' has no data loaded");
    filtered[t] = filter_rows(t, query, catalog);
    if (filtered[t].empty()) return 0;
  }
  if (query.tables.size() == 1) return filtered[query.tables.front()].size();

  std::vector<EdgeKeys> edges;
  for (const auto e : query.joins) {
    const auto& j = catalog.joins()[e];
    auto [l, r] = encode_join_keys(catalog.column(j.left), catalog.column(j.right));
    edges.push_back({j.left.table, j.right.table, std::move(l), std::move(r)});
  }

  std::vector<std::size_t> joined{query.tables.front()};
  auto is_joined = [&](std::size_t t) { return std::find(joined.begin(), joined.end(), t) != joined.end(); };

  Partial partial;
  partial.live = joined;
  partial.rows = filtered[joined.front()];
  partial.weights.assign(partial.rows.size(), 1);

  while (joined.size() < query.tables.size()) {
    // Next table: first in canonical order that joins the current result.
    std::size_t next = 0;
    bool found = false;
    for (const auto t : query.tables) {
      if (is_joined(t)) continue;
      for (const auto& edge : edges) {
        if ((edge.left_table == t && is_joined(edge.right_table)) || (edge.right_table == t && is_joined(edge.left_table))) {
          next = t;
          found = true;
          break;
        }
      }
      if (found) break;
    }
    if (!found) throw std::logic_error("query join graph is disconnected");

    std::vector<const EdgeKeys*> connecting;
    for (const auto& edge : edges) {
      if ((edge.left_table == next && is_joined(edge.right_table)) || (edge.right_table == next && is_joined(edge.left_table))) {
        connecting.push_back(&edge);
      }
    }

    // Build on the incoming table's filtered rows, keyed by the first connecting edge.
    const auto* primary = connecting.front();
    const auto& build_keys = primary->keys_of(next);
    std::unordered_map<std::int64_t, std::vector<std::uint32_t>> hash_table;
    for (const auto row : filtered[next]) {
      if (build_keys[row] != kNullKey) hash_table[build_keys[row]].push_back(row);
    }

    Partial out;
    out.live = partial.live;
    out.live.push_back(next);
    const auto width = partial.width();
    const auto probe_slot = partial.slot(primary->other(next));
    const auto& probe_keys = primary->keys_of(primary->other(next));
    for (std::size_t i = 0; i < partial.size(); ++i) {
      const auto* tuple = &partial.rows[i * width];
      const auto key = probe_keys[tuple[probe_slot]];
      if (key == kNullKey) continue;
      const auto hit = hash_table.find(key);
      if (hit == hash_table.end()) continue;
      for (const auto row : hit->second) {
        bool match = true;
        for (std::size_t c = 1; c < connecting.size() && match; ++c) {
          const auto* edge = connecting[c];
          const auto k = edge->keys_of(next)[row];
          const auto partner = edge->other(next);
          match = k != kNullKey && k == edge->keys_of(partner)[tuple[partial.slot(partner)]];
        }
        if (!match) continue;
        out.rows.insert(out.rows.end(), tuple, tuple + width);
        out.rows.push_back(row);
        out.weights.push_back(partial.weights[i]);
      }
    }
    joined.push_back(next);
    if (out.size() == 0) return 0;

    // Drop tables whose joins are all applied, folding their multiplicity into the weight.
    std::vector<std::size_t> keep;
    for (std::size_t s = 0; s < out.live.size(); ++s) {
      const auto t = out.live[s];
      const bool pending = std::any_of(edges.begin(), edges.end(), [&](const EdgeKeys& edge) {
        return (edge.left_table == t && !is_joined(edge.right_table)) || (edge.right_table == t && !is_joined(edge.left_table));
      });
      if (pending) keep.push_back(s);
    }
    if (keep.size() == out.live.size()) {
      partial = std::move(out);
      continue;
    }
    Partial folded;
    for (const auto s : keep) folded.live.push_back(out.live[s]);
    std::unordered_map<std::u32string, std::size_t> groups;
    std::u32string key(keep.size(), U'\0');
    const auto out_width = out.width();
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t k = 0; k < keep.size(); ++k) key[k] = static_cast<char32_t>(out.rows[i * out_width + keep[k]]);
      const auto [it, inserted] = groups.try_emplace(key, folded.weights.size());
      if (inserted) {
        for (std::size_t k = 0; k < keep.size(); ++k) folded.rows.push_back(out.rows[i * out_width + keep[k]]);
        folded.weights.push_back(out.weights[i]);
      } else {
        folded.weights[it->second] = checked_add(folded.weights[it->second], out.weights[i]);
      }
    }
    partial = std::move(folded);
  }

  std::uint64_t total = 0;
  for (const auto w : partial.weights) total = checked_add(total, w);
  return total;
}

}  // namespace price
