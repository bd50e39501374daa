#pragma once

// Shared fixtures and independent oracles for the test suites. Oracles here
// must stay independent of the library code paths they check.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "film/dataset.hpp"
#include "film/error.hpp"
#include "film/metrics.hpp"
#include "film/rng.hpp"

namespace support {

// error code thrown by a callable, or nullopt if it completed
template <class Fn>
std::optional<film::Errc> error_code_of(Fn&& fn) {
  try {
    std::forward<Fn>(fn)();
    return std::nullopt;
  } catch (const film::Error& e) {
    return e.code();
  }
}

// Dataset from explicit rows; labels 1 = positive.
inline film::Dataset make_dataset(const std::vector<std::vector<double>>& rows,
                                  const std::vector<int>& labels,
                                  const std::string& provenance = "fixture") {
  std::vector<double> values;
  const std::size_t cols = rows.at(0).size();
  for (const auto& r : rows) values.insert(values.end(), r.begin(), r.end());
  std::vector<film::Label> ls;
  for (int l : labels) ls.push_back(l ? film::Label::positive : film::Label::negative);
  std::vector<std::string> names;
  for (std::size_t c = 0; c < cols; ++c) names.push_back("x" + std::to_string(c));
  return film::Dataset(std::move(values), cols, std::move(ls), std::move(names), "pos",
                       provenance);
}

// Two Gaussian blobs in `dims` dimensions, positives centred at +separation
// on every axis.
inline film::Dataset make_blobs(std::size_t n_pos, std::size_t n_neg, std::size_t dims,
                                double separation, std::uint64_t seed) {
  film::Rng rng(seed);
  auto gauss = [&rng]() {
    const double u1 = 1.0 - rng.real01();
    const double u2 = rng.real01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  };
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n_pos; ++i) {
    std::vector<double> row(dims);
    for (auto& v : row) v = separation + gauss();
    rows.push_back(std::move(row));
    labels.push_back(1);
  }
  for (std::size_t i = 0; i < n_neg; ++i) {
    std::vector<double> row(dims);
    for (auto& v : row) v = gauss();
    rows.push_back(std::move(row));
    labels.push_back(0);
  }
  return make_dataset(rows, labels, "blobs");
}

// ---------------------------------------------------------------------------
// Exact-arithmetic oracle for the threshold metrics (integer counts, integer
// numerators/denominators, long double only at the final division).

struct OracleValue {
  long double value = 0.0L;
  bool degenerate = false;
};

struct OracleMetrics {
  OracleValue acc, sens, spec, prec, recall, fpr, f1, kappa, mcc, bal_acc, gmean;
};

inline OracleValue oracle_ratio(long long num, long long den) {
  if (den == 0) return {0.0L, true};
  return {static_cast<long double>(num) / static_cast<long double>(den), false};
}

inline OracleMetrics oracle_threshold_metrics(long long tp, long long tn, long long fp,
                                              long long fn) {
  OracleMetrics o;
  o.acc = oracle_ratio(tp + tn, tp + tn + fp + fn);
  o.sens = oracle_ratio(tp, tp + fn);
  o.spec = oracle_ratio(tn, tn + fp);
  o.prec = oracle_ratio(tp, tp + fp);
  o.recall = oracle_ratio(tp, tp + fn);
  o.fpr = oracle_ratio(fp, fp + tn);
  // F1 from the zero-filled precision/recall, as the formula is written
  const long double p = o.prec.value, r = o.recall.value;
  if (p + r == 0.0L)
    o.f1 = {0.0L, true};
  else
    o.f1 = {2.0L * p * r / (p + r), false};
  const long long kappa_den = (tp + fp) * (fp + tn) + (tp + fn) * (fn + tn);
  if (kappa_den == 0)
    o.kappa = {0.0L, true};
  else
    o.kappa = {2.0L * static_cast<long double>(tp * tn - fn * fp) /
                   static_cast<long double>(kappa_den),
               false};
  const long long mcc_prod = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (mcc_prod == 0)
    o.mcc = {0.0L, true};
  else
    o.mcc = {static_cast<long double>(tp * tn - fn * fp) /
                 std::sqrt(static_cast<long double>(mcc_prod)),
             false};
  o.bal_acc = {(o.sens.value + o.spec.value) / 2.0L, false};
  o.gmean = {std::sqrt(o.sens.value * o.spec.value), false};
  return o;
}

// ---------------------------------------------------------------------------
// Curve oracles

// all-pairs Mann-Whitney with half credit for ties, O(P*N)
inline double oracle_roc_auc(const std::vector<double>& scores,
                             const std::vector<film::Label>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != film::Label::positive) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != film::Label::negative) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// brute-force threshold sweep of the step-wise precision-recall area
inline double oracle_pr_auc(const std::vector<double>& scores,
                            const std::vector<film::Label>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::size_t n_pos = 0;
  for (film::Label l : labels) n_pos += l == film::Label::positive ? 1 : 0;
  double area = 0.0, prev_recall = 0.0;
  for (double thr : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] >= thr) (labels[i] == film::Label::positive ? tp : fp)++;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

// ---------------------------------------------------------------------------
// Filesystem helpers

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("film_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

}  // namespace support
