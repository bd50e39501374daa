#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "film/error.hpp"
#include "film/rng.hpp"

namespace film {

enum class Label : std::uint8_t { negative = 0, positive = 1 };

// Raw column of the source table. Empty `levels` means numeric; otherwise the
// column was one-hot encoded with the listed levels (lexicographic order).
struct ColumnSchema {
  std::string name;
  std::vector<std::string> levels;
  bool is_numeric() const { return levels.empty(); }
};

// Contiguous block of encoded columns produced from one categorical column.
struct OneHotGroup {
  std::size_t first_column = 0;
  std::size_t width = 0;
  std::string source_column;
};

// Read-only row-major view over a feature matrix.
struct MatrixView {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<const double> row(std::size_t r) const { return {data + r * cols, cols}; }
};

struct ClassStats {
  std::size_t n_min = 0;
  std::size_t n_maj = 0;
  double p_min = 0.0;
  double ir = 0.0;
};

inline double p_min_from_ir(double ir) { return 1.0 / (ir + 1.0); }
inline double ir_from_p_min(double p_min) { return (1.0 - p_min) / p_min; }

// Encoded binary-classification dataset. Immutable after construction and
// safe to share read-only across threads.
class Dataset {
 public:
  Dataset(std::vector<double> values, std::size_t n_cols, std::vector<Label> labels,
          std::vector<std::string> feature_names, std::string positive_label,
          std::string provenance, std::vector<ColumnSchema> schema = {},
          std::vector<OneHotGroup> one_hot_groups = {}, std::size_t rows_dropped = 0)
      : values_(std::move(values)),
        n_cols_(n_cols),
        labels_(std::move(labels)),
        feature_names_(std::move(feature_names)),
        positive_label_(std::move(positive_label)),
        provenance_(std::move(provenance)),
        schema_(std::move(schema)),
        one_hot_groups_(std::move(one_hot_groups)),
        rows_dropped_(rows_dropped) {
    if (schema_.empty()) {
      for (const auto& name : feature_names_) schema_.push_back({name, {}});
    }
    validate();
  }

  std::size_t n_rows() const { return labels_.size(); }
  std::size_t n_cols() const { return n_cols_; }
  const std::string& negative_label() const { return negative_label_; }
  Dataset& with_negative_label(std::string name) {
    negative_label_ = std::move(name);
    return *this;
  }
  const std::string& label_name(Label l) const {
    return l == Label::positive ? positive_label_ : negative_label_;
  }
  double at(std::size_t r, std::size_t c) const { return values_[r * n_cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * n_cols_, n_cols_}; }
  MatrixView matrix() const { return {values_.data(), n_rows(), n_cols_}; }

  Label label(std::size_t r) const { return labels_[r]; }
  const std::vector<Label>& labels() const { return labels_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::string& positive_label() const { return positive_label_; }
  const std::string& provenance() const { return provenance_; }
  const std::vector<ColumnSchema>& schema() const { return schema_; }
  const std::vector<OneHotGroup>& one_hot_groups() const { return one_hot_groups_; }
  std::size_t rows_dropped() const { return rows_dropped_; }

  std::size_t count(Label l) const {
    std::size_t c = 0;
    for (Label x : labels_) c += (x == l) ? 1 : 0;
    return c;
  }

  // New dataset holding the given rows (duplicates allowed), metadata kept.
  Dataset subset(std::span<const std::size_t> rows, std::string provenance) const {
    std::vector<double> v;
    v.reserve(rows.size() * n_cols_);
    std::vector<Label> l;
    l.reserve(rows.size());
    for (std::size_t r : rows) {
      auto rv = row(r);
      v.insert(v.end(), rv.begin(), rv.end());
      l.push_back(labels_[r]);
    }
    Dataset out(std::move(v), n_cols_, std::move(l), feature_names_, positive_label_,
                std::move(provenance), schema_, one_hot_groups_, 0);
    out.negative_label_ = negative_label_;
    return out;
  }

 private:
  void validate() const {
    if (labels_.size() < 2)
      throw Error(Errc::bad_counts, "dataset needs at least 2 rows, got " +
                                        std::to_string(labels_.size()));
    if (n_cols_ == 0 || values_.size() != labels_.size() * n_cols_)
      throw Error(Errc::bad_counts, "feature matrix shape does not match label count");
    if (feature_names_.size() != n_cols_)
      throw Error(Errc::bad_counts, "feature name count does not match column count");
    for (double v : values_)
      if (!std::isfinite(v))
        throw Error(Errc::bad_counts, "feature matrix contains non-finite values");
  }

  std::vector<double> values_;
  std::size_t n_cols_;
  std::vector<Label> labels_;
  std::vector<std::string> feature_names_;
  std::string positive_label_;
  std::string negative_label_ = "negative";
  std::string provenance_;
  std::vector<ColumnSchema> schema_;
  std::vector<OneHotGroup> one_hot_groups_;
  std::size_t rows_dropped_;
};

struct ClassIndex {
  std::vector<std::size_t> minority;
  std::vector<std::size_t> majority;
  Label minority_label = Label::positive;
};

// Row indices per class; on a tie the positive class counts as minority.
inline ClassIndex split_by_class(const Dataset& d) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t r = 0; r < d.n_rows(); ++r)
    (d.label(r) == Label::positive ? pos : neg).push_back(r);
  ClassIndex ci;
  if (pos.size() <= neg.size()) {
    ci.minority = std::move(pos);
    ci.majority = std::move(neg);
    ci.minority_label = Label::positive;
  } else {
    ci.minority = std::move(neg);
    ci.majority = std::move(pos);
    ci.minority_label = Label::negative;
  }
  return ci;
}

inline ClassStats class_stats(std::size_t n_min, std::size_t n_maj) {
  ClassStats s;
  s.n_min = n_min;
  s.n_maj = n_maj;
  s.ir = static_cast<double>(n_maj) / static_cast<double>(n_min);
  s.p_min = p_min_from_ir(s.ir);
  return s;
}

inline ClassStats class_stats(const Dataset& d) {
  std::size_t pos = d.count(Label::positive);
  std::size_t neg = d.n_rows() - pos;
  if (pos == 0 || neg == 0)
    throw Error(Errc::one_class_only, "class statistics need both classes present");
  return class_stats(std::min(pos, neg), std::max(pos, neg));
}

struct SplitPair {
  Dataset train;
  Dataset test;
  double p_holdout = 0.0;
};

namespace detail {

inline std::size_t round_count(double x) {
  return static_cast<std::size_t>(std::llround(x));
}

// Partition one class's rows into a train prefix of round(p*|rows|) after a
// seeded shuffle; both halves are restored to source order.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_class(
    const std::vector<std::size_t>& rows, double p, Rng& rng) {
  std::vector<std::size_t> order = shuffled_indices(rng, rows.size());
  std::size_t n_train = round_count(p * static_cast<double>(rows.size()));
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < rows.size(); ++i)
    (i < n_train ? train : test).push_back(rows[order[i]]);
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

}  // namespace detail

struct HoldoutIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline HoldoutIndices stratified_holdout_indices(const Dataset& d, double p_holdout,
                                                 std::uint64_t seed) {
  if (!(p_holdout > 0.0 && p_holdout < 1.0))
    throw Error(Errc::bad_config, "p_holdout must lie strictly in (0,1)");
  ClassIndex ci = split_by_class(d);
  for (const auto* cls : {&ci.minority, &ci.majority}) {
    std::size_t n_train = detail::round_count(p_holdout * static_cast<double>(cls->size()));
    if (n_train == 0 || n_train == cls->size())
      throw Error(Errc::class_too_small,
                  "a class with " + std::to_string(cls->size()) +
                      " rows cannot be split at p_holdout=" + std::to_string(p_holdout));
  }
  Rng rng(seed);
  auto [min_train, min_test] = detail::split_class(ci.minority, p_holdout, rng);
  auto [maj_train, maj_test] = detail::split_class(ci.majority, p_holdout, rng);

  auto merge = [](std::vector<std::size_t> a, const std::vector<std::size_t>& b) {
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    return a;
  };
  return {merge(std::move(min_train), maj_train), merge(std::move(min_test), maj_test)};
}

inline SplitPair stratified_holdout(const Dataset& d, double p_holdout, std::uint64_t seed) {
  HoldoutIndices idx = stratified_holdout_indices(d, p_holdout, seed);
  return {d.subset(idx.train, d.provenance() + "/train"),
          d.subset(idx.test, d.provenance() + "/test"), p_holdout};
}

inline std::vector<SplitPair> stratified_kfold(const Dataset& d, std::size_t k,
                                               std::uint64_t seed) {
  if (k < 2) throw Error(Errc::bad_config, "k must be at least 2");
  ClassIndex ci = split_by_class(d);
  if (ci.minority.size() < k || ci.majority.size() < k)
    throw Error(Errc::class_too_small, "each class needs at least k=" + std::to_string(k) +
                                           " rows for k-fold splitting");
  Rng rng(seed);
  // Deal each class's shuffled rows into k folds; the first (n mod k) folds
  // take one extra row.
  std::vector<std::vector<std::size_t>> fold_rows(k);
  for (const auto* cls : {&ci.minority, &ci.majority}) {
    std::vector<std::size_t> order = shuffled_indices(rng, cls->size());
    std::size_t base = cls->size() / k, extra = cls->size() % k, at = 0;
    for (std::size_t f = 0; f < k; ++f) {
      std::size_t take = base + (f < extra ? 1 : 0);
      for (std::size_t i = 0; i < take; ++i) fold_rows[f].push_back((*cls)[order[at++]]);
    }
  }
  std::vector<SplitPair> folds;
  folds.reserve(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> test = fold_rows[f];
    std::sort(test.begin(), test.end());
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) train.insert(train.end(), fold_rows[g].begin(), fold_rows[g].end());
    std::sort(train.begin(), train.end());
    double p = static_cast<double>(train.size()) / static_cast<double>(d.n_rows());
    folds.push_back({d.subset(train, d.provenance() + "/fold" + std::to_string(f) + ".train"),
                     d.subset(test, d.provenance() + "/fold" + std::to_string(f) + ".test"), p});
  }
  return folds;
}

// Re-proportion by subsampling one class without replacement; the other class
// is kept whole. No synthetic or duplicated rows.
inline Dataset resample_to_proportion(const Dataset& d, double p_target, std::uint64_t seed) {
  if (!(p_target > 0.0 && p_target < 0.5))
    throw Error(Errc::bad_config, "p_target must lie strictly in (0, 0.5)");
  ClassIndex ci = split_by_class(d);
  const std::size_t n_min = ci.minority.size(), n_maj = ci.majority.size();
  const double p_d = static_cast<double>(n_min) / static_cast<double>(n_min + n_maj);

  std::vector<std::size_t> keep_min, keep_maj;
  Rng rng(seed);
  if (p_target > p_d) {
    std::size_t n_maj_new =
        detail::round_count(static_cast<double>(n_min) * (1.0 - p_target) / p_target);
    if (n_maj_new < 1) throw Error(Errc::unreachable_proportion, "majority count would reach 0");
    keep_min = ci.minority;
    keep_maj = sample_without_replacement(rng, n_maj, std::min(n_maj_new, n_maj));
    for (auto& i : keep_maj) i = ci.majority[i];
  } else if (p_target < p_d) {
    std::size_t n_min_new =
        detail::round_count(static_cast<double>(n_maj) * p_target / (1.0 - p_target));
    if (n_min_new < 1) throw Error(Errc::unreachable_proportion, "minority count would reach 0");
    keep_maj = ci.majority;
    keep_min = sample_without_replacement(rng, n_min, std::min(n_min_new, n_min));
    for (auto& i : keep_min) i = ci.minority[i];
  } else {
    keep_min = ci.minority;
    keep_maj = ci.majority;
  }
  std::vector<std::size_t> rows = keep_min;
  rows.insert(rows.end(), keep_maj.begin(), keep_maj.end());
  std::sort(rows.begin(), rows.end());
  std::ostringstream tag;
  tag << d.provenance() << "/p=" << p_target;
  return d.subset(rows, tag.str());
}

struct ProportionGrid {
  double p_d = 0.0;
  std::vector<double> targets;
};

namespace detail {

// linspace(lo, hi, points) excluding the value `drop` (exact comparison on
// the endpoint positions, not float equality).
inline void linspace_excluding(double lo, double hi, std::size_t points, double drop,
                               std::vector<double>& out) {
  for (std::size_t i = 0; i < points; ++i) {
    double t = static_cast<double>(i) / static_cast<double>(points - 1);
    double v = lo + t * (hi - lo);
    bool is_drop = (lo == drop && i == 0) || (hi == drop && i + 1 == points);
    if (!is_drop) out.push_back(v);
  }
}

}  // namespace detail

inline ProportionGrid proportion_grid(double p_d, std::size_t n) {
  if (!(p_d > 0.0 && p_d <= 0.4))
    throw Error(Errc::not_imbalanced,
                "proportions above 0.4 are not imbalanced enough; got " + std::to_string(p_d));
  if (n < 6 || n % 2 != 0)
    throw Error(Errc::bad_n, "grid size must be an even integer >= 6, got " + std::to_string(n));

  ProportionGrid grid;
  grid.p_d = p_d;
  if (p_d > 0.05) {
    detail::linspace_excluding(0.05, p_d, n / 2 + 1, p_d, grid.targets);
    detail::linspace_excluding(p_d, 0.4, n / 2 + 1, p_d, grid.targets);
  } else {
    detail::linspace_excluding(p_d, 0.4, n + 1, p_d, grid.targets);
  }
  return grid;
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline bool is_missing(const std::string& field) {
  return field.empty() || field == "NA" || field == "N/A" || field == "?";
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + s.size() && std::isfinite(out);
}

// RFC-4180-style reader: quoted fields, doubled-quote escapes, CRLF or LF.
inline std::vector<std::vector<std::string>> read_csv(std::istream& in, char delimiter) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false, field_started = false, row_started = false;
  int c;
  auto end_field = [&] {
    fields.push_back(quoted ? field : trim(field));
    field.clear();
    quoted = field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(fields));
    fields = {};
    row_started = false;
  };
  while ((c = in.get()) != std::char_traits<char>::eof()) {
    char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
      row_started = true;
      continue;
    }
    if (ch == '"' && !field_started && field.empty()) {
      quoted = true;
      field_started = row_started = true;
    } else if (ch == delimiter) {
      end_field();
      row_started = true;
    } else if (ch == '\n') {
      if (row_started || !field.empty()) end_row();
    } else if (ch == '\r') {
      // consumed; LF (if any) ends the row
      if (in.peek() != '\n' && (row_started || !field.empty())) end_row();
    } else {
      field.push_back(ch);
      field_started = row_started = true;
    }
  }
  if (row_started || !field.empty()) end_row();
  return rows;
}

}  // namespace detail

struct LoadOptions {
  std::string target_column;
  std::optional<std::string> positive_label;  // unset: minority class
  char delimiter = ',';
};

inline Dataset load_csv(std::istream& in, const LoadOptions& opt, std::string provenance) {
  auto table = detail::read_csv(in, opt.delimiter);
  if (table.empty()) throw Error(Errc::empty_after_cleaning, "no header row in input");
  const std::vector<std::string> header = table.front();

  std::size_t target_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == opt.target_column) target_idx = i;
  if (target_idx == header.size())
    throw Error(Errc::missing_target_column, "no column named '" + opt.target_column + "'");

  // Drop rows with missing fields first, then infer column types.
  std::vector<std::vector<std::string>> kept;
  std::size_t dropped = 0;
  for (std::size_t r = 1; r < table.size(); ++r) {
    auto& row = table[r];
    if (row.size() != header.size()) {
      ++dropped;
      continue;
    }
    bool missing = false;
    for (const auto& f : row) missing = missing || detail::is_missing(f);
    if (missing) {
      ++dropped;
      continue;
    }
    kept.push_back(std::move(row));
  }
  if (kept.empty())
    throw Error(Errc::empty_after_cleaning,
                "all " + std::to_string(dropped) + " data rows had missing values");

  std::set<std::string> target_values;
  for (const auto& row : kept) target_values.insert(row[target_idx]);
  if (target_values.size() != 2)
    throw Error(Errc::not_binary_target, "target column has " +
                                             std::to_string(target_values.size()) +
                                             " distinct values, need exactly 2");

  std::map<std::string, std::size_t> target_counts;
  for (const auto& row : kept) ++target_counts[row[target_idx]];
  std::string positive;
  if (opt.positive_label) {
    positive = *opt.positive_label;
    if (!target_values.count(positive))
      throw Error(Errc::unknown_positive_label,
                  "positive label '" + positive + "' does not occur in the target column");
  } else {
    // minority class becomes the positive class; tie broken lexicographically
    auto it = target_values.begin();
    const std::string& a = *it++;
    const std::string& b = *it;
    positive = target_counts[a] < target_counts[b]   ? a
               : target_counts[b] < target_counts[a] ? b
                                                     : std::min(a, b);
  }

  // Column typing: numeric iff every kept value parses as a finite double.
  std::vector<ColumnSchema> schema;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == target_idx) continue;
    ColumnSchema col{header[c], {}};
    bool numeric = true;
    double tmp;
    for (const auto& row : kept) numeric = numeric && detail::parse_double(row[c], tmp);
    if (!numeric) {
      std::set<std::string> levels;
      for (const auto& row : kept) levels.insert(row[c]);
      col.levels.assign(levels.begin(), levels.end());
    }
    schema.push_back(std::move(col));
  }

  std::vector<std::string> names;
  std::vector<OneHotGroup> groups;
  for (const auto& col : schema) {
    if (col.is_numeric()) {
      names.push_back(col.name);
    } else {
      groups.push_back({names.size(), col.levels.size(), col.name});
      for (const auto& level : col.levels) names.push_back(col.name + "=" + level);
    }
  }

  std::vector<double> values;
  values.reserve(kept.size() * names.size());
  std::vector<Label> labels;
  labels.reserve(kept.size());
  for (const auto& row : kept) {
    std::size_t c_raw = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == target_idx) continue;
      const ColumnSchema& col = schema[c_raw++];
      if (col.is_numeric()) {
        double v = 0;
        detail::parse_double(row[c], v);
        values.push_back(v);
      } else {
        for (const auto& level : col.levels) values.push_back(row[c] == level ? 1.0 : 0.0);
      }
    }
    labels.push_back(row[target_idx] == positive ? Label::positive : Label::negative);
  }
  if (labels.size() < 2)
    throw Error(Errc::empty_after_cleaning, "fewer than 2 usable rows after cleaning");

  auto it = target_values.begin();
  const std::string negative = (*it == positive) ? *std::next(it) : *it;
  Dataset out(std::move(values), names.size(), std::move(labels), std::move(names), positive,
              std::move(provenance), std::move(schema), std::move(groups), dropped);
  return out.with_negative_label(negative);
}

inline Dataset load_csv(const std::string& path, const LoadOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open '" + path + "'");
  return load_csv(in, opt, path);
}

// Encode a raw CSV of feature columns with a previously fitted schema, for
// prediction on new data. Unseen categorical levels encode as all-zeros.
// Returns the row-major matrix; rows with missing numeric fields are dropped
// and counted into `dropped`.
inline std::vector<double> encode_with_schema(std::istream& in,
                                              const std::vector<ColumnSchema>& schema,
                                              char delimiter, std::size_t& n_rows,
                                              std::size_t& dropped) {
  auto table = detail::read_csv(in, delimiter);
  if (table.empty()) throw Error(Errc::empty_after_cleaning, "no header row in input");
  const auto& header = table.front();
  std::vector<std::size_t> col_of(schema.size());
  for (std::size_t s = 0; s < schema.size(); ++s) {
    auto it = std::find(header.begin(), header.end(), schema[s].name);
    if (it == header.end())
      throw Error(Errc::width_mismatch, "input lacks column '" + schema[s].name + "'");
    col_of[s] = static_cast<std::size_t>(it - header.begin());
  }
  std::vector<double> values;
  n_rows = 0;
  dropped = 0;
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    if (row.size() != header.size()) {
      ++dropped;
      continue;
    }
    std::vector<double> enc;
    bool ok = true;
    for (std::size_t s = 0; s < schema.size() && ok; ++s) {
      const std::string& f = row[col_of[s]];
      if (schema[s].is_numeric()) {
        double v;
        ok = !detail::is_missing(f) && detail::parse_double(f, v);
        if (ok) enc.push_back(v);
      } else {
        for (const auto& level : schema[s].levels) enc.push_back(f == level ? 1.0 : 0.0);
      }
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    values.insert(values.end(), enc.begin(), enc.end());
    ++n_rows;
  }
  return values;
}

}  // namespace film
