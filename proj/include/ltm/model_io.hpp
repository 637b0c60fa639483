#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ltm/error.hpp"
#include "ltm/model.hpp"

namespace ltm {

// Model document layout:
//
//   # free-form metadata lines (ignored on load)
//   ltm-model 1
//   variables <n>
//   <name> <cardinality> <observed|latent>      (n lines)
//   edges <m>
//   <name> <name>                               (m lines)
//   root <name>
//   tables <n>
//   table <child> <parent|->                    (one block per node)
//   <p_0> ... <p_{|child|-1}>                   (|parent| rows, or 1 for root)
//   end
//
// Probabilities are written with 17 significant digits, which round-trips
// IEEE doubles exactly.
inline std::string serialize(const LatentTreeModel& m,
                             const std::vector<std::string>& metadata = {}) {
  for (const auto& v : m.structure.nodes) {
    if (v.name.empty() || v.name.find_first_of(" \t\r\n") != std::string::npos ||
        v.name[0] == '#')
      throw ModelError("variable name '" + v.name + "' cannot be serialized");
  }
  std::ostringstream out;
  for (const auto& line : metadata) out << "# " << line << '\n';
  out << "ltm-model 1\n";
  out << "variables " << m.size() << '\n';
  for (const auto& v : m.structure.nodes)
    out << v.name << ' ' << v.cardinality << ' ' << to_string(v.kind) << '\n';
  out << "edges " << m.structure.edges.size() << '\n';
  for (auto [a, b] : m.structure.edges)
    out << m.variable(a).name << ' ' << m.variable(b).name << '\n';
  out << "root " << m.variable(m.root).name << '\n';
  out << "tables " << m.size() << '\n';
  char buf[32];
  for (int v : m.preorder()) {
    const int p = m.parent[v];
    out << "table " << m.variable(v).name << ' ' << (p < 0 ? std::string("-") : m.variable(p).name)
        << '\n';
    const int c = m.cardinality(v);
    const int rows = p < 0 ? 1 : m.cardinality(p);
    for (int j = 0; j < rows; ++j) {
      for (int i = 0; i < c; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", m.tables[v][j * c + i]);
        out << (i ? " " : "") << buf;
      }
      out << '\n';
    }
  }
  out << "end\n";
  return out.str();
}

namespace detail {

class DocumentReader {
 public:
  explicit DocumentReader(std::string_view text) : text_(text) {}

  // Next non-empty, non-comment line split on whitespace.
  std::vector<std::string> next_line() {
    while (pos_ < text_.size()) {
      auto end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_no_;
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> tokens;
      std::istringstream ss{std::string(line)};
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (!tokens.empty()) return tokens;
    }
    throw error("unexpected end of document");
  }

  std::vector<std::string> expect(std::string_view keyword, std::size_t arity) {
    auto tokens = next_line();
    if (tokens[0] != keyword || tokens.size() != arity + 1)
      throw error("expected '" + std::string(keyword) + "' line");
    return tokens;
  }

  ModelError error(const std::string& what) const {
    return ModelError("model document line " + std::to_string(line_no_) + ": " + what);
  }

  static long parse_int(const std::string& s, const DocumentReader& r) {
    long value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw r.error("bad integer '" + s + "'");
    return value;
  }

  static double parse_double(const std::string& s, const DocumentReader& r) {
    double value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw r.error("bad number '" + s + "'");
    return value;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline LatentTreeModel deserialize(std::string_view document) {
  detail::DocumentReader in(document);
  using R = detail::DocumentReader;
  auto header = in.expect("ltm-model", 1);
  if (header[1] != "1") throw in.error("unsupported format version " + header[1]);

  TreeStructure s;
  const long n = R::parse_int(in.expect("variables", 1)[1], in);
  if (n < 1) throw in.error("model needs at least one variable");
  for (long i = 0; i < n; ++i) {
    auto t = in.next_line();
    if (t.size() != 3) throw in.error("expected '<name> <cardinality> <kind>'");
    if (s.index_of(t[0]) >= 0) throw in.error("duplicate variable '" + t[0] + "'");
    s.add_node({t[0], static_cast<int>(R::parse_int(t[1], in)), parse_kind(t[2])});
  }
  const long m_edges = R::parse_int(in.expect("edges", 1)[1], in);
  for (long i = 0; i < m_edges; ++i) {
    auto t = in.next_line();
    if (t.size() != 2) throw in.error("expected '<name> <name>'");
    const int a = s.index_of(t[0]), b = s.index_of(t[1]);
    if (a < 0 || b < 0) throw in.error("edge references unknown variable");
    s.add_edge(a, b);
  }
  const auto root_name = in.expect("root", 1)[1];
  const int root = s.index_of(root_name);
  if (root < 0) throw in.error("unknown root '" + root_name + "'");
  if (auto problems = validate(s); !problems.empty())
    throw ModelError("invalid model structure: " + problems.front());

  LatentTreeModel m = make_model(std::move(s), root);
  const long n_tables = R::parse_int(in.expect("tables", 1)[1], in);
  std::vector<bool> seen(m.size(), false);
  for (long k = 0; k < n_tables; ++k) {
    auto t = in.expect("table", 2);
    const int v = m.index_of(t[1]);
    if (v < 0) throw in.error("table for unknown variable '" + t[1] + "'");
    if (seen[v]) throw in.error("duplicate table for '" + t[1] + "'");
    const int p = m.parent[v];
    const std::string expected_parent = p < 0 ? "-" : m.variable(p).name;
    if (t[2] != expected_parent)
      throw in.error("table for '" + t[1] + "' names parent '" + t[2] + "', expected '" +
                     expected_parent + "'");
    const int c = m.cardinality(v);
    const int rows = p < 0 ? 1 : m.cardinality(p);
    for (int j = 0; j < rows; ++j) {
      auto row = in.next_line();
      if (static_cast<int>(row.size()) != c)
        throw in.error("table row for '" + t[1] + "' has wrong width");
      for (int i = 0; i < c; ++i) m.tables[v][j * c + i] = R::parse_double(row[i], in);
    }
    seen[v] = true;
  }
  for (std::size_t v = 0; v < m.size(); ++v)
    if (!seen[v]) throw ModelError("missing conditional table for '" + m.variable(static_cast<int>(v)).name + "'");
  if (in.next_line()[0] != "end") throw in.error("expected 'end'");
  if (auto problems = validate(m, 1e-9); !problems.empty())
    throw ModelError("invalid model: " + problems.front());
  return m;
}

inline void save_model(const std::string& path, const LatentTreeModel& m,
                       const std::vector<std::string>& metadata = {}) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << serialize(m, metadata);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline LatentTreeModel load_model(const std::string& path) {
  return deserialize(read_text_file(path));
}

}  // namespace ltm
