#include "oracle.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace price::testing {

namespace {

bool satisfies(const Predicate& p, const ColumnData& column, std::size_t row) {
  if (column.is_null(row)) return false;
  if (column.kind() == AttributeKind::categorical) return column.render(row) == p.literal;
  const double v = column.number(row);
  switch (p.op) {
    case CompareOp::lt: return v < p.value;
    case CompareOp::le: return v <= p.value;
    case CompareOp::gt: return v > p.value;
    case CompareOp::ge: return v >= p.value;
    case CompareOp::eq: return v == p.value;
  }
  return false;
}

}  // namespace

std::uint64_t nested_loop_cardinality(const QuerySpec& query, const Catalog& catalog) {
  const auto k = query.tables.size();
  // Qualifying rows per table after its own filters.
  std::vector<std::vector<std::size_t>> candidates(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto t = query.tables[i];
    for (std::size_t r = 0; r < catalog.table(t).row_count; ++r) {
      bool ok = true;
      for (const auto& p : query.filters) {
        if (p.column.table == t && !satisfies(p, catalog.column(p.column), r)) ok = false;
      }
      if (ok) candidates[i].push_back(r);
    }
  }
  auto slot = [&](std::size_t table) {
    for (std::size_t i = 0; i < k; ++i) {
      if (query.tables[i] == table) return i;
    }
    return k;
  };

  // Rendered join-key text per join column, computed once per query.
  std::map<ColumnId, std::vector<std::string>> rendered;
  for (const auto e : query.joins) {
    for (const auto id : {catalog.joins()[e].left, catalog.joins()[e].right}) {
      if (rendered.count(id)) continue;
      const auto& column = catalog.column(id);
      auto& text = rendered[id];
      for (std::size_t r = 0; r < column.size(); ++r) text.push_back(column.render(r));
    }
  }

  std::vector<std::size_t> chosen(k);
  std::uint64_t count = 0;
  std::function<void(std::size_t)> descend = [&](std::size_t depth) {
    if (depth == k) {
      ++count;
      return;
    }
    for (const auto row : candidates[depth]) {
      chosen[depth] = row;
      bool ok = true;
      for (const auto e : query.joins) {
        const auto& j = catalog.joins()[e];
        const auto ls = slot(j.left.table);
        const auto rs = slot(j.right.table);
        if (std::max(ls, rs) != depth) continue;  // checked once both sides are bound
        const auto& lc = catalog.column(j.left);
        const auto& rc = catalog.column(j.right);
        if (lc.is_null(chosen[ls]) || rc.is_null(chosen[rs]) ||
            rendered.at(j.left)[chosen[ls]] != rendered.at(j.right)[chosen[rs]]) {
          ok = false;
          break;
        }
      }
      if (ok) descend(depth + 1);
    }
  };
  descend(0);
  return count;
}

namespace {

bool linked(const std::vector<std::size_t>& part, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::size_t> reached{part.front()};
  for (std::size_t round = 0; round < part.size(); ++round) {
    for (const auto& [a, b] : edges) {
      const bool has_a = std::count(part.begin(), part.end(), a) > 0;
      const bool has_b = std::count(part.begin(), part.end(), b) > 0;
      if (!has_a || !has_b) continue;
      const bool ra = std::count(reached.begin(), reached.end(), a) > 0;
      const bool rb = std::count(reached.begin(), reached.end(), b) > 0;
      if (ra && !rb) reached.push_back(b);
      if (rb && !ra) reached.push_back(a);
    }
  }
  return reached.size() == part.size();
}

double best_cost(const std::vector<std::size_t>& set, const std::vector<std::string>& names,
                 const std::vector<std::pair<std::size_t, std::size_t>>& edges, const CardMap& cards) {
  auto card = [&](const std::vector<std::size_t>& part) {
    std::vector<std::string> sorted;
    for (const auto i : part) sorted.push_back(names[i]);
    std::sort(sorted.begin(), sorted.end());
    std::string key;
    for (const auto& n : sorted) key += (key.empty() ? "" : ",") + n;
    return cards.at(key);
  };
  if (set.size() == 1) return card(set);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << set.size()); ++mask) {
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t i = 0; i < set.size(); ++i) (mask >> i & 1U ? left : right).push_back(set[i]);
    if (!linked(left, edges) || !linked(right, edges)) continue;
    const double cost = best_cost(left, names, edges, cards) + best_cost(right, names, edges, cards) + card(left) +
                        card(right) + card(set);
    best = std::min(best, cost);
  }
  return best;
}

}  // namespace

double brute_force_min_cost(const QuerySpec& query, const Catalog& catalog, const CardMap& cards) {
  std::vector<std::string> names;
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < query.tables.size(); ++i) {
    names.push_back(catalog.table(query.tables[i]).name);
    all.push_back(i);
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto e : query.joins) {
    const auto& j = catalog.joins()[e];
    const auto pos = [&](std::size_t t) {
      return static_cast<std::size_t>(std::find(query.tables.begin(), query.tables.end(), t) - query.tables.begin());
    };
    edges.emplace_back(pos(j.left.table), pos(j.right.table));
  }
  return best_cost(all, names, edges, cards);
}

}  // namespace price::testing
