#include "price/query.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <numeric>
#include <tuple>

#include "text.hpp"

namespace price {

std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::lt:
      return "<";
    case CompareOp::le:
      return "<=";
    case CompareOp::gt:
      return ">";
    case CompareOp::ge:
      return ">=";
    case CompareOp::eq:
      return "=";
  }
  return "?";
}

std::optional<CompareOp> parse_compare_op(std::string_view text) {
  if (text == "<") return CompareOp::lt;
  if (text == "<=") return CompareOp::le;
  if (text == ">") return CompareOp::gt;
  if (text == ">=") return CompareOp::ge;
  if (text == "=") return CompareOp::eq;
  return std::nullopt;
}

bool QuerySpec::contains_table(std::size_t table) const {
  return std::find(tables.begin(), tables.end(), table) != tables.end();
}

namespace {

// ---------------------------------------------------------------------------
// Lexer

enum class TokenKind { identifier, number, string, symbol, end };

struct Token {
  TokenKind kind = TokenKind::end;
  std::string text;
  std::size_t offset = 0;
};

std::vector<Token> tokenize(std::string_view sql) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  auto is_ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto is_ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  while (i < sql.size()) {
    const char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const auto start = i;
    if (is_ident_start(c)) {
      while (i < sql.size() && is_ident(sql[i])) ++i;
      tokens.push_back({TokenKind::identifier, std::string(sql.substr(start, i - start)), start});
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' ||
               (c == '.' && i + 1 < sql.size() && std::isdigit(static_cast<unsigned char>(sql[i + 1])))) {
      ++i;
      while (i < sql.size()) {
        const char d = sql[i];
        const bool exponent_sign = (d == '-' || d == '+') && (sql[i - 1] == 'e' || sql[i - 1] == 'E');
        if (!(std::isdigit(static_cast<unsigned char>(d)) || d == '.' || d == 'e' || d == 'E' || exponent_sign)) break;
        ++i;
      }
      tokens.push_back({TokenKind::number, std::string(sql.substr(start, i - start)), start});
    } else if (c == '\'') {
      std::string value;
      ++i;
      bool closed = false;
      while (i < sql.size()) {
        if (sql[i] == '\'') {
          if (i + 1 < sql.size() && sql[i + 1] == '\'') {
            value.push_back('\'');
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        value.push_back(sql[i++]);
      }
      if (!closed) throw QueryError("syntax error: unterminated string literal at offset " + std::to_string(start));
      tokens.push_back({TokenKind::string, std::move(value), start});
    } else {
      static constexpr std::string_view two_char[] = {"<=", ">=", "<>", "!="};
      bool matched = false;
      for (const auto op : two_char) {
        if (sql.substr(i, 2) == op) {
          tokens.push_back({TokenKind::symbol, std::string(op), start});
          i += 2;
          matched = true;
          break;
        }
      }
      if (matched) continue;
      if (std::string_view("(),.*=<>;").find(c) == std::string_view::npos) {
        throw QueryError(std::string("syntax error: unexpected character '") + c + "' at offset " + std::to_string(start));
      }
      tokens.push_back({TokenKind::symbol, std::string(1, c), start});
      ++i;
    }
  }
  tokens.push_back({TokenKind::end, "", sql.size()});
  return tokens;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

CompareOp flip(CompareOp op) {
  switch (op) {
    case CompareOp::lt:
      return CompareOp::gt;
    case CompareOp::le:
      return CompareOp::ge;
    case CompareOp::gt:
      return CompareOp::lt;
    case CompareOp::ge:
      return CompareOp::le;
    case CompareOp::eq:
      return CompareOp::eq;
  }
  return op;
}

// ---------------------------------------------------------------------------
// Parser

struct Operand {
  std::optional<ColumnId> column;
  Token literal;
};

class Parser {
 public:
  Parser(std::string_view sql, const Catalog& catalog) : tokens_(tokenize(sql)), catalog_(catalog) {}

  QuerySpec parse() {
    QuerySpec query;
    keyword("SELECT");
    keyword("COUNT");
    symbol("(");
    symbol("*");
    symbol(")");
    keyword("FROM");
    do {
      const auto name = identifier("table name");
      const auto table = catalog_.find_table(name.text);
      if (!table) throw QueryError("unknown table '" + name.text + "'");
      if (query.contains_table(*table)) throw QueryError("duplicate table '" + name.text + "' in FROM");
      query.tables.push_back(*table);
    } while (accept_symbol(","));
    from_ = query.tables;

    if (accept_keyword("WHERE")) {
      do {
        condition(query);
      } while (accept_keyword("AND"));
    }
    accept_symbol(";");
    if (peek().kind != TokenKind::end) fail("unexpected '" + peek().text + "'");
    return query;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& advance() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void fail(const std::string& message) const {
    throw QueryError("syntax error: " + message + " at offset " + std::to_string(peek().offset));
  }

  void keyword(std::string_view word) {
    if (!accept_keyword(word)) fail("expected " + std::string(word));
  }
  bool accept_keyword(std::string_view word) {
    if (peek().kind == TokenKind::identifier && iequals(peek().text, word)) {
      advance();
      return true;
    }
    return false;
  }
  void symbol(std::string_view s) {
    if (!accept_symbol(s)) fail("expected '" + std::string(s) + "'");
  }
  bool accept_symbol(std::string_view s) {
    if (peek().kind == TokenKind::symbol && peek().text == s) {
      advance();
      return true;
    }
    return false;
  }
  Token identifier(std::string_view what) {
    if (peek().kind != TokenKind::identifier) fail("expected " + std::string(what));
    return advance();
  }

  ColumnId resolve(const std::string& table_name, const std::string& attribute) const {
    if (table_name.empty()) {
      std::optional<ColumnId> found;
      for (const auto t : from_) {
        if (const auto a = catalog_.table(t).find_attribute(attribute)) {
          if (found) throw QueryError("ambiguous attribute '" + attribute + "'");
          found = ColumnId{t, *a};
        }
      }
      if (!found) throw QueryError("unknown attribute '" + attribute + "'");
      return *found;
    }
    const auto t = catalog_.find_table(table_name);
    if (!t) throw QueryError("unknown table '" + table_name + "'");
    if (std::find(from_.begin(), from_.end(), *t) == from_.end()) {
      throw QueryError("table '" + table_name + "' is not in FROM");
    }
    const auto a = catalog_.table(*t).find_attribute(attribute);
    if (!a) throw QueryError("unknown attribute '" + table_name + "." + attribute + "'");
    return {*t, *a};
  }

  Operand operand() {
    Operand out;
    if (peek().kind == TokenKind::identifier) {
      auto first = advance().text;
      if (accept_symbol(".")) {
        out.column = resolve(first, identifier("attribute name").text);
      } else {
        out.column = resolve("", first);
      }
    } else if (peek().kind == TokenKind::number || peek().kind == TokenKind::string) {
      out.literal = advance();
    } else {
      fail("expected column or literal");
    }
    return out;
  }

  void condition(QuerySpec& query) {
    auto lhs = operand();
    const auto& op_token = peek();
    if (op_token.kind != TokenKind::symbol) fail("expected comparison operator");
    const auto op = parse_compare_op(op_token.text);
    if (!op) throw QueryError("unsupported operator '" + op_token.text + "'");
    advance();
    auto rhs = operand();

    if (lhs.column && rhs.column) {
      if (*op != CompareOp::eq) throw QueryError("unsupported operator: only equi-joins are supported");
      query.joins.push_back(match_join(*lhs.column, *rhs.column));
      return;
    }
    if (!lhs.column && !rhs.column) throw QueryError("unsupported condition between two literals");
    if (!lhs.column) {
      std::swap(lhs, rhs);
      query.filters.push_back(make_filter(*lhs.column, flip(*op), rhs.literal));
    } else {
      query.filters.push_back(make_filter(*lhs.column, *op, rhs.literal));
    }
  }

  std::size_t match_join(ColumnId a, ColumnId b) const {
    const auto& joins = catalog_.joins();
    for (std::size_t e = 0; e < joins.size(); ++e) {
      if ((joins[e].left == a && joins[e].right == b) || (joins[e].left == b && joins[e].right == a)) return e;
    }
    throw QueryError("join not in schema: " + catalog_.qualified_name(a) + " = " + catalog_.qualified_name(b));
  }

  Predicate make_filter(ColumnId column, CompareOp op, const Token& literal) const {
    Predicate p;
    p.column = column;
    p.op = op;
    const auto& meta = catalog_.attribute(column);
    if (meta.kind == AttributeKind::categorical) {
      if (op != CompareOp::eq) {
        throw QueryError("unsupported operator '" + std::string(to_string(op)) + "' on categorical attribute " +
                         catalog_.qualified_name(column));
      }
      p.literal = literal.text;
      const auto code = catalog_.column(column).lookup(literal.text);
      p.value = code ? static_cast<double>(*code) : -1.0;
    } else {
      if (literal.kind != TokenKind::number) {
        throw QueryError("continuous attribute " + catalog_.qualified_name(column) + " compared with a string");
      }
      const auto value = parse_number(literal.text);
      if (!value) throw QueryError("syntax error: bad number '" + literal.text + "'");
      p.value = *value;
    }
    return p;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  const Catalog& catalog_;
  std::vector<std::size_t> from_;
};

std::string quote(const std::string& s) {
  std::string out = "'";
  for (const char c : s) {
    if (c == '\'') out.push_back('\'');
    out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

bool connected(const std::vector<std::size_t>& tables, const std::vector<std::size_t>& joins, const Catalog& catalog) {
  if (tables.empty()) return false;
  std::vector<std::size_t> parent(tables.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto position = [&](std::size_t table) {
    return static_cast<std::size_t>(std::find(tables.begin(), tables.end(), table) - tables.begin());
  };
  std::size_t components = tables.size();
  for (const auto e : joins) {
    const auto a = find(position(catalog.joins()[e].left.table));
    const auto b = find(position(catalog.joins()[e].right.table));
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components == 1;
}

}  // namespace

void normalize_query(QuerySpec& query, const Catalog& catalog) {
  auto& tables = query.tables;
  std::sort(tables.begin(), tables.end(),
            [&](std::size_t a, std::size_t b) { return catalog.table(a).name < catalog.table(b).name; });
  tables.erase(std::unique(tables.begin(), tables.end()), tables.end());

  auto join_key = [&](std::size_t e) {
    const auto& j = catalog.joins()[e];
    return std::make_tuple(catalog.qualified_name(j.left), catalog.qualified_name(j.right), e);
  };
  std::sort(query.joins.begin(), query.joins.end(), [&](std::size_t a, std::size_t b) { return join_key(a) < join_key(b); });
  query.joins.erase(std::unique(query.joins.begin(), query.joins.end()), query.joins.end());

  std::sort(query.filters.begin(), query.filters.end(), [&](const Predicate& a, const Predicate& b) {
    return std::make_tuple(catalog.qualified_name(a.column), static_cast<int>(a.op), a.value, a.literal) <
           std::make_tuple(catalog.qualified_name(b.column), static_cast<int>(b.op), b.value, b.literal);
  });
  query.filters.erase(std::unique(query.filters.begin(), query.filters.end()), query.filters.end());
  query.source_text = print_query(query, catalog);
}

QuerySpec parse_query(std::string_view sql, const Catalog& catalog) {
  auto query = Parser(sql, catalog).parse();
  if (!connected(query.tables, query.joins, catalog)) throw QueryError("disconnected join graph");
  normalize_query(query, catalog);
  return query;
}

std::string print_query(const QuerySpec& query, const Catalog& catalog) {
  std::string sql = "SELECT COUNT(*) FROM ";
  for (std::size_t i = 0; i < query.tables.size(); ++i) {
    if (i) sql += ", ";
    sql += catalog.table(query.tables[i]).name;
  }
  bool first = true;
  auto conjunct = [&](const std::string& text) {
    sql += first ? " WHERE " : " AND ";
    sql += text;
    first = false;
  };
  for (const auto e : query.joins) {
    const auto& j = catalog.joins()[e];
    conjunct(catalog.qualified_name(j.left) + " = " + catalog.qualified_name(j.right));
  }
  for (const auto& p : query.filters) {
    const bool categorical = catalog.attribute(p.column).kind == AttributeKind::categorical;
    conjunct(catalog.qualified_name(p.column) + " " + std::string(to_string(p.op)) + " " +
             (categorical ? quote(p.literal) : format_number(p.value)));
  }
  return sql;
}

RegionMap canonicalize(const QuerySpec& query, const Catalog& catalog) {
  RegionMap regions;
  for (const auto t : query.tables) {
    const auto& meta = catalog.table(t);
    for (std::size_t a = 0; a < meta.attributes.size(); ++a) {
      AttributeRegion region;
      region.column = {t, a};
      region.kind = meta.attributes[a].kind;
      if (region.kind == AttributeKind::continuous) {
        const auto [lo, hi] = catalog.domain(region.column);
        region.interval = {lo, hi, false, false};
      }
      regions.emplace(region.column, region);
    }
  }
  for (const auto& p : query.filters) {
    auto& region = regions.at(p.column);
    region.constrained = true;
    if (region.kind == AttributeKind::categorical) {
      const auto item = static_cast<std::int64_t>(p.value);
      if (p.value < 0.0 || (region.item && *region.item != item)) region.empty = true;
      region.item = item;
      continue;
    }
    auto& iv = region.interval;
    const double v = p.value;
    auto tighten_lower = [&](bool open) {
      if (v > iv.lower || (v == iv.lower && open)) {
        iv.lower = v;
        iv.lower_open = open;
      }
    };
    auto tighten_upper = [&](bool open) {
      if (v < iv.upper || (v == iv.upper && open)) {
        iv.upper = v;
        iv.upper_open = open;
      }
    };
    switch (p.op) {
      case CompareOp::lt:
        tighten_upper(true);
        break;
      case CompareOp::le:
        tighten_upper(false);
        break;
      case CompareOp::gt:
        tighten_lower(true);
        break;
      case CompareOp::ge:
        tighten_lower(false);
        break;
      case CompareOp::eq:
        tighten_lower(false);
        tighten_upper(false);
        break;
    }
  }
  for (auto& [column, region] : regions) {
    if (region.kind == AttributeKind::continuous && region.interval.empty()) region.empty = true;
  }
  return regions;
}

std::string table_set_key(const std::vector<std::size_t>& tables, const Catalog& catalog) {
  std::vector<std::string> names;
  for (const auto t : tables) names.push_back(catalog.table(t).name);
  std::sort(names.begin(), names.end());
  std::string key;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) key += ',';
    key += names[i];
  }
  return key;
}

QuerySpec restrict_query(const QuerySpec& query, const std::vector<std::size_t>& tables, const Catalog& catalog) {
  QuerySpec sub;
  sub.tables = tables;
  auto inside = [&](std::size_t t) { return std::find(tables.begin(), tables.end(), t) != tables.end(); };
  for (const auto e : query.joins) {
    const auto& j = catalog.joins()[e];
    if (inside(j.left.table) && inside(j.right.table)) sub.joins.push_back(e);
  }
  for (const auto& p : query.filters) {
    if (inside(p.column.table)) sub.filters.push_back(p);
  }
  normalize_query(sub, catalog);
  return sub;
}

std::vector<QuerySpec> sub_queries(const QuerySpec& query, const Catalog& catalog) {
  const auto n = query.tables.size();
  if (n > 20) throw QueryError("too many tables for sub-query enumeration");
  std::vector<std::vector<std::size_t>> subsets;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << n); ++mask) {
    std::vector<std::size_t> tables;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::uint64_t{1} << i)) tables.push_back(query.tables[i]);
    }
    std::vector<std::size_t> joins;
    for (const auto e : query.joins) {
      const auto& j = catalog.joins()[e];
      const auto in = [&](std::size_t t) { return std::find(tables.begin(), tables.end(), t) != tables.end(); };
      if (in(j.left.table) && in(j.right.table)) joins.push_back(e);
    }
    if (connected(tables, joins, catalog)) subsets.push_back(std::move(tables));
  }
  // query.tables is sorted by name, so each subset is already name-ordered.
  auto names = [&](const std::vector<std::size_t>& s) {
    std::vector<std::string> out;
    for (const auto t : s) out.push_back(catalog.table(t).name);
    return out;
  };
  std::stable_sort(subsets.begin(), subsets.end(), [&](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return names(a) < names(b);
  });
  std::vector<QuerySpec> out;
  out.reserve(subsets.size());
  for (const auto& s : subsets) out.push_back(restrict_query(query, s, catalog));
  return out;
}

QuerySpec make_query(const Catalog& catalog, std::vector<std::size_t> tables, std::vector<Predicate> filters) {
  QuerySpec query;
  query.tables = std::move(tables);
  for (std::size_t e = 0; e < catalog.joins().size(); ++e) {
    if (query.contains_table(catalog.joins()[e].left.table) && query.contains_table(catalog.joins()[e].right.table)) {
      query.joins.push_back(e);
    }
  }
  query.filters = std::move(filters);
  if (!connected(query.tables, query.joins, catalog)) throw QueryError("disconnected join graph");
  normalize_query(query, catalog);
  return query;
}

}  // namespace price
