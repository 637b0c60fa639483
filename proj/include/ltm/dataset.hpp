#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ltm/error.hpp"
#include "ltm/random.hpp"
#include "ltm/variable.hpp"

namespace ltm {

// Distinct categorical rows with integer multiplicities. Rows are kept in
// lexicographic order of their value vectors, so two datasets holding the same
// records compare equal regardless of how they were assembled.
class WeightedDataset {
 public:
  WeightedDataset() = default;

  const std::vector<Variable>& variables() const { return variables_; }
  std::size_t num_variables() const { return variables_.size(); }
  std::size_t num_rows() const { return weights_.size(); }
  std::int64_t total_weight() const { return total_weight_; }

  std::span<const int> row(std::size_t r) const {
    return {values_.data() + r * variables_.size(), variables_.size()};
  }
  std::int64_t weight(std::size_t r) const { return weights_[r]; }
  std::span<const std::int64_t> weights() const { return weights_; }

  int index_of(std::string_view name) const {
    for (std::size_t i = 0; i < variables_.size(); ++i)
      if (variables_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  int require_index(std::string_view name) const {
    const int i = index_of(name);
    if (i < 0) throw DataError("unknown variable '" + std::string(name) + "'");
    return i;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(variables_.size());
    for (const auto& v : variables_) out.push_back(v.name);
    return out;
  }

  friend bool operator==(const WeightedDataset&, const WeightedDataset&) = default;

 private:
  friend class DatasetBuilder;

  std::vector<Variable> variables_;
  std::vector<int> values_;  // row-major, num_rows x num_variables
  std::vector<std::int64_t> weights_;
  std::int64_t total_weight_ = 0;
};

// Accumulates records (possibly repeated) and compresses them into a
// WeightedDataset.
class DatasetBuilder {
 public:
  explicit DatasetBuilder(std::vector<Variable> variables)
      : variables_(std::move(variables)) {
    std::set<std::string_view> seen;
    for (auto& v : variables_) {
      if (v.cardinality < 1)
        throw DataError("variable '" + v.name + "' has cardinality < 1");
      if (!seen.insert(v.name).second)
        throw DataError("duplicate variable name '" + v.name + "'");
      v.kind = VariableKind::observed;
    }
  }

  void add(std::span<const int> values, std::int64_t weight = 1) {
    if (values.size() != variables_.size())
      throw DataError("record has " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(variables_.size()));
    if (weight <= 0) throw DataError("record weight must be positive");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] < 0 || values[i] >= variables_[i].cardinality)
        throw DataError("value " + std::to_string(values[i]) + " of variable '" +
                        variables_[i].name + "' outside [0, " +
                        std::to_string(variables_[i].cardinality) + ")");
    }
    counts_[std::vector<int>(values.begin(), values.end())] += weight;
  }

  bool empty() const { return counts_.empty(); }

  WeightedDataset build() const {
    if (counts_.empty()) throw DataError("empty dataset");
    WeightedDataset d;
    d.variables_ = variables_;
    d.values_.reserve(counts_.size() * variables_.size());
    d.weights_.reserve(counts_.size());
    for (const auto& [values, w] : counts_) {
      d.values_.insert(d.values_.end(), values.begin(), values.end());
      d.weights_.push_back(w);
      d.total_weight_ += w;
    }
    return d;
  }

 private:
  std::vector<Variable> variables_;
  std::map<std::vector<int>, std::int64_t> counts_;
};

// Restricts a dataset to the named columns (in the given order) and
// re-deduplicates.
inline WeightedDataset project(const WeightedDataset& data,
                               std::span<const std::string> subset) {
  std::vector<int> cols;
  std::vector<Variable> vars;
  for (const auto& name : subset) {
    const int c = data.require_index(name);
    cols.push_back(c);
    vars.push_back(data.variables()[c]);
  }
  DatasetBuilder b(std::move(vars));
  std::vector<int> buf(cols.size());
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    const auto row = data.row(r);
    for (std::size_t i = 0; i < cols.size(); ++i) buf[i] = row[cols[i]];
    b.add(buf, data.weight(r));
  }
  return b.build();
}

inline WeightedDataset project(const WeightedDataset& data,
                               std::initializer_list<std::string> subset) {
  std::vector<std::string> names(subset);
  return project(data, std::span<const std::string>(names));
}

// Record-level random split. Records of one distinct row may land on both
// sides. Returns (train, test).
inline std::pair<WeightedDataset, WeightedDataset> split(
    const WeightedDataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw DataError("test fraction must lie in (0, 1)");
  const std::int64_t n = data.total_weight();
  if (n < 2) throw DataError("split needs at least two records");
  auto n_test = static_cast<std::int64_t>(std::llround(test_fraction * n));
  n_test = std::clamp<std::int64_t>(n_test, 1, n - 1);

  std::vector<std::uint32_t> record_row;
  record_row.reserve(n);
  for (std::size_t r = 0; r < data.num_rows(); ++r)
    record_row.insert(record_row.end(), data.weight(r), static_cast<std::uint32_t>(r));
  Rng rng(seed);
  for (std::int64_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(record_row[i], record_row[j]);
  }
  DatasetBuilder train(data.variables()), test(data.variables());
  for (std::int64_t i = 0; i < n; ++i) {
    auto& target = i < n_test ? test : train;
    target.add(data.row(record_row[i]));
  }
  return {train.build(), test.build()};
}

namespace detail {

inline std::vector<std::string> split_fields(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    auto field = line.substr(start, pos == std::string_view::npos ? pos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t'))
      field.remove_prefix(1);
    while (!field.empty() &&
           (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.emplace_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline int parse_state(std::string_view text, std::size_t line_no) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value < 0)
    throw DataError("line " + std::to_string(line_no) + ": '" + std::string(text) +
                    "' is not a non-negative integer");
  return value;
}

}  // namespace detail

// Reads a CSV with a header row of variable names and non-negative integer
// cells. Lines starting with '#' are metadata and skipped. Cardinality is
// max observed value + 1 unless `cardinalities` supplies an override.
inline WeightedDataset read_categorical_csv(
    std::istream& in, const std::map<std::string, int>& cardinalities = {}) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = detail::split_fields(line, ',');
    break;
  }
  if (header.empty()) throw DataError("empty dataset: no header row");

  std::vector<std::vector<int>> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line == "\r") continue;
    const auto fields = detail::split_fields(line, ',');
    if (fields.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    std::vector<int> rec(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i)
      rec[i] = detail::parse_state(fields[i], line_no);
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw DataError("empty dataset: no records");

  std::vector<Variable> vars;
  for (std::size_t c = 0; c < header.size(); ++c) {
    int max_value = 0;
    for (const auto& rec : records) max_value = std::max(max_value, rec[c]);
    int card = max_value + 1;
    if (auto it = cardinalities.find(header[c]); it != cardinalities.end())
      card = it->second;
    vars.push_back(observed_variable(header[c], card));
  }
  for (const auto& [name, card] : cardinalities) {
    if (std::find(header.begin(), header.end(), name) == header.end())
      throw DataError("cardinality override for unknown column '" + name + "'");
  }
  DatasetBuilder b(std::move(vars));
  for (const auto& rec : records) b.add(rec);
  return b.build();
}

inline WeightedDataset load_categorical_csv(
    const std::string& path, const std::map<std::string, int>& cardinalities = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path + "'");
  return read_categorical_csv(in, cardinalities);
}

// Schema sidecar: one "name cardinality" pair per line.
inline std::map<std::string, int> load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read schema '" + path + "'");
  std::map<std::string, int> out;
  std::string name;
  int card = 0;
  while (in >> name >> card) {
    if (card < 1) throw DataError("schema cardinality for '" + name + "' must be >= 1");
    out[name] = card;
  }
  return out;
}

// Writes one line per record (rows expanded by weight).
inline void write_categorical_csv(std::ostream& out, const WeightedDataset& data) {
  for (std::size_t i = 0; i < data.num_variables(); ++i)
    out << (i ? "," : "") << data.variables()[i].name;
  out << '\n';
  std::string line;
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    line.clear();
    const auto row = data.row(r);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) line += ',';
      line += std::to_string(row[i]);
    }
    line += '\n';
    for (std::int64_t k = 0; k < data.weight(r); ++k) out << line;
  }
}

using Document = std::vector<std::string>;

// Binary presence/absence dataset over an explicit vocabulary.
inline WeightedDataset ingest_bag_of_words(std::span<const Document> corpus,
                                           std::span<const std::string> vocabulary) {
  if (corpus.empty()) throw DataError("empty corpus");
  if (vocabulary.empty()) throw DataError("empty vocabulary");
  std::vector<Variable> vars;
  std::unordered_map<std::string, int> column;
  for (const auto& word : vocabulary) {
    column.emplace(word, static_cast<int>(vars.size()));
    vars.push_back(observed_variable(word, 2));
  }
  DatasetBuilder b(std::move(vars));
  std::vector<int> rec(vocabulary.size());
  for (const auto& doc : corpus) {
    std::fill(rec.begin(), rec.end(), 0);
    for (const auto& tok : doc)
      if (auto it = column.find(tok); it != column.end()) rec[it->second] = 1;
    b.add(rec);
  }
  return b.build();
}

// Selects the `vocab_size` tokens with highest document frequency (ties broken
// lexicographically) and builds a presence/absence dataset over them.
inline WeightedDataset ingest_bag_of_words(std::span<const Document> corpus,
                                           int vocab_size) {
  if (corpus.empty()) throw DataError("empty corpus");
  if (vocab_size < 1) throw DataError("vocabulary size must be >= 1");
  std::map<std::string, std::int64_t> df;
  for (const auto& doc : corpus) {
    std::set<std::string_view> distinct(doc.begin(), doc.end());
    for (auto tok : distinct) ++df[std::string(tok)];
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(df.begin(), df.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > static_cast<std::size_t>(vocab_size)) ranked.resize(vocab_size);
  std::vector<std::string> vocab;
  for (auto& [tok, count] : ranked) vocab.push_back(tok);
  return ingest_bag_of_words(corpus, std::span<const std::string>(vocab));
}

// One document per line, whitespace-separated tokens.
inline std::vector<Document> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::vector<Document> corpus;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    Document doc;
    std::string tok;
    while (ss >> tok) doc.push_back(tok);
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

inline std::vector<std::string> read_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read vocabulary '" + path + "'");
  std::vector<std::string> vocab;
  std::string tok;
  while (in >> tok) vocab.push_back(tok);
  return vocab;
}

}  // namespace ltm
