#include "price/eval.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "text.hpp"

namespace price {

namespace {

using Mask = std::uint32_t;

double lookup(const CardMap& cards, const std::string& key) {
  const auto it = cards.find(key);
  if (it == cards.end()) throw DataError("missing cardinality for sub-plan '" + key + "'");
  return it->second;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ',';
    out += n;
  }
  return out;
}

std::vector<std::size_t> positions(Mask mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; mask; ++i, mask >>= 1U) {
    if (mask & 1U) out.push_back(i);
  }
  return out;
}

CardMap clamped(const CardMap& cards) {
  CardMap out = cards;
  for (auto& [key, value] : out) value = std::max(1.0, value);
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (const auto c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

double q_error(double estimate, double truth) {
  if (!(estimate > 0.0) || !(truth > 0.0)) {
    throw std::invalid_argument("q_error needs positive inputs, got " + format_number(estimate) + " and " +
                                format_number(truth));
  }
  return std::max(estimate / truth, truth / estimate);
}

std::string Plan::key() const { return join_names(tables); }

std::string Plan::to_string() const {
  if (is_leaf()) return tables.front();
  return "(" + left->to_string() + " " + right->to_string() + ")";
}

double plan_cost(const Plan& plan, const CardMap& cards) {
  if (plan.is_leaf()) return lookup(cards, plan.key());
  return plan_cost(*plan.left, cards) + plan_cost(*plan.right, cards) + lookup(cards, plan.left->key()) +
         lookup(cards, plan.right->key()) + lookup(cards, plan.key());
}

Plan optimal_plan(const QuerySpec& query, const Catalog& catalog, const CardMap& cards) {
  const auto n = query.tables.size();
  if (n == 0) throw QueryError("query has no tables");
  if (n > kMaxPlanTables) {
    throw QueryError("plan search supports at most " + std::to_string(kMaxPlanTables) + " tables, query has " +
                     std::to_string(n));
  }
  std::vector<std::string> names;
  for (const auto t : query.tables) names.push_back(catalog.table(t).name);

  std::vector<Mask> adjacency(n, 0);
  for (const auto e : query.joins) {
    const auto& j = catalog.joins()[e];
    const auto a = static_cast<std::size_t>(std::find(query.tables.begin(), query.tables.end(), j.left.table) - query.tables.begin());
    const auto b = static_cast<std::size_t>(std::find(query.tables.begin(), query.tables.end(), j.right.table) - query.tables.begin());
    if (a == n || b == n) throw QueryError("join references a table outside the query");
    adjacency[a] |= Mask{1} << b;
    adjacency[b] |= Mask{1} << a;
  }
  auto connected = [&](Mask set) {
    Mask reached = set & (~set + 1);  // lowest bit
    for (;;) {
      Mask next = reached;
      for (const auto v : positions(reached)) next |= adjacency[v] & set;
      if (next == reached) break;
      reached = next;
    }
    return reached == set;
  };
  auto key_of = [&](Mask set) {
    std::vector<std::string> subset;
    for (const auto v : positions(set)) subset.push_back(names[v]);
    return join_names(subset);
  };

  const Mask full = (Mask{1} << n) - 1;
  constexpr double kUnset = std::numeric_limits<double>::infinity();
  std::vector<double> best(std::size_t{full} + 1, kUnset);
  std::vector<double> card(std::size_t{full} + 1, 0.0);
  std::vector<Mask> split(std::size_t{full} + 1, 0);

  for (Mask set = 1; set <= full; ++set) {
    if (!connected(set)) continue;
    card[set] = lookup(cards, key_of(set));
    if (std::popcount(set) == 1) {
      best[set] = card[set];
      continue;
    }
    for (Mask left = (set - 1) & set; left; left = (left - 1) & set) {
      const Mask right = set ^ left;
      if (best[left] == kUnset || best[right] == kUnset) continue;  // either side disconnected
      const auto left_positions = positions(left);
      if (!(left_positions < positions(right))) continue;  // each unordered split once, smaller side left
      const double cost = best[left] + best[right] + card[left] + card[right] + card[set];
      if (cost < best[set] || (cost == best[set] && left_positions < positions(split[set]))) {
        best[set] = cost;
        split[set] = left;
      }
    }
  }
  if (best[full] == kUnset) throw QueryError("disconnected join graph");

  std::function<Plan(Mask)> build = [&](Mask set) {
    Plan plan;
    for (const auto v : positions(set)) plan.tables.push_back(names[v]);
    if (std::popcount(set) > 1) {
      plan.left = std::make_shared<const Plan>(build(split[set]));
      plan.right = std::make_shared<const Plan>(build(set ^ split[set]));
    }
    return plan;
  };
  return build(full);
}

double p_error(const QuerySpec& query, const Catalog& catalog, const CardMap& estimates, const CardMap& truth) {
  const auto est = clamped(estimates);
  const auto tru = clamped(truth);
  const auto chosen = optimal_plan(query, catalog, est);
  const auto ideal = optimal_plan(query, catalog, tru);
  return plan_cost(chosen, tru) / plan_cost(ideal, tru);
}

double quantile(std::vector<double> values, double percentile) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(percentile > 0.0 && percentile <= 100.0)) throw std::invalid_argument("percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(percentile / 100.0 * n - 1e-9)));
  return values[std::min(rank, values.size()) - 1];
}

std::string ErrorReport::to_json(bool include_timing) const {
  nlohmann::ordered_json doc;
  auto quantiles = [](const std::array<double, 5>& q) {
    nlohmann::ordered_json out;
    for (std::size_t i = 0; i < kReportPercentiles.size(); ++i) {
      out["p" + std::to_string(static_cast<int>(kReportPercentiles[i]))] = q[i];
    }
    return out;
  };
  doc["q_error"] = quantiles(q_error_quantiles);
  doc["p_error"] = quantiles(p_error_quantiles);
  doc["n"] = queries.size();
  doc["skipped"] = skipped;
  if (include_timing) doc["wall_time_ms"] = wall_time_ms;
  return doc.dump(2);
}

void ErrorReport::write_csv(std::ostream& out) const {
  out << "sql,true,est,q_error,p_error\n";
  for (const auto& q : queries) {
    out << csv_field(q.sql) << ',' << format_number(q.truth) << ',' << format_number(q.estimate) << ','
        << format_number(q.q_error) << ',' << format_number(q.p_error) << '\n';
  }
}

ErrorReport evaluate(const std::vector<WorkloadRecord>& records, const Catalog& catalog, const Estimator& estimator,
                     EvaluateOptions options) {
  const auto started = std::chrono::steady_clock::now();
  std::vector<std::optional<QueryResult>> results(records.size());
  std::vector<std::string> errors(records.size());

  auto run = [&](std::size_t i) {
    const auto& record = records[i];
    try {
      const auto query = parse_query(record.sql, catalog);
      CardMap truth(record.subs.begin(), record.subs.end());
      if (truth.empty()) truth[table_set_key(query.tables, catalog)] = static_cast<double>(record.card);
      CardMap estimates;
      for (const auto& sub : sub_queries(query, catalog)) estimates[table_set_key(sub.tables, catalog)] = estimator(sub);

      const auto key = table_set_key(query.tables, catalog);
      QueryResult r;
      r.sql = record.sql;
      r.truth = static_cast<double>(record.card);
      r.estimate = std::max(1.0, lookup(estimates, key));
      r.q_error = q_error(r.estimate, std::max(1.0, r.truth));
      r.p_error = p_error(query, catalog, estimates, truth);
      results[i] = std::move(r);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };

  const auto threads = std::max(1U, std::min<unsigned>(options.threads, static_cast<unsigned>(records.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < records.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < records.size(); i += threads) run(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  ErrorReport report;
  std::vector<double> qs;
  std::vector<double> ps;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!results[i]) {
      ++report.skipped;
      report.skip_reasons.push_back("record " + std::to_string(i + 1) + ": " + errors[i]);
      continue;
    }
    qs.push_back(results[i]->q_error);
    ps.push_back(results[i]->p_error);
    report.queries.push_back(std::move(*results[i]));
  }
  if (!qs.empty()) {
    for (std::size_t k = 0; k < kReportPercentiles.size(); ++k) {
      report.q_error_quantiles[k] = quantile(qs, kReportPercentiles[k]);
      report.p_error_quantiles[k] = quantile(ps, kReportPercentiles[k]);
    }
  }
  report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return report;
}

void write_report(const ErrorReport& report, const std::filesystem::path& json_path, const std::filesystem::path& csv_path) {
  std::ofstream json(json_path);
  if (!json) throw DataError("cannot write " + json_path.string());
  json << report.to_json() << '\n';
  std::ofstream csv(csv_path);
  if (!csv) throw DataError("cannot write " + csv_path.string());
  report.write_csv(csv);
  if (!json || !csv) throw DataError("report write failed");
}

}  // namespace price
