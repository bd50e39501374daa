#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "film/dataset.hpp"
#include "film/error.hpp"

namespace film {

struct ConfusionMatrix {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::uint64_t total() const { return tp + tn + fp + fn; }
};

enum class Metric : std::uint8_t {
  acc = 0,
  sens,
  spec,
  prec,
  recall,
  fpr,
  f1,
  kappa,
  mcc,
  bal_acc,
  gmean,
  roc_auc,
  pr_auc,
};

inline constexpr std::size_t kMetricCount = 13;

inline constexpr std::array<std::string_view, kMetricCount> kMetricNames = {
    "acc", "sens", "spec",    "prec",  "recall",  "fpr",   "f1",
    "kappa", "mcc",  "bal_acc", "gmean", "roc_auc", "pr_auc"};

// The k metrics aggregated by the bias analysis and the weighted sum.
inline constexpr std::array<Metric, 8> kAggregatedMetrics = {
    Metric::acc,  Metric::kappa, Metric::bal_acc, Metric::f1,
    Metric::roc_auc, Metric::pr_auc, Metric::mcc,    Metric::gmean};

inline std::string_view metric_name(Metric m) { return kMetricNames[static_cast<std::size_t>(m)]; }

inline std::optional<Metric> metric_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kMetricCount; ++i)
    if (kMetricNames[i] == name) return static_cast<Metric>(i);
  return std::nullopt;
}

// All metric values for one evaluation. Metrics whose formula hit a zero
// denominator are set to 0 and flagged; curve metrics may be absent.
struct MetricVector {
  std::array<double, kMetricCount> values{};
  std::uint16_t present = 0;
  std::uint16_t degenerate = 0;

  double get(Metric m) const { return values[static_cast<std::size_t>(m)]; }
  bool has(Metric m) const { return present & (1u << static_cast<unsigned>(m)); }
  bool is_degenerate(Metric m) const { return degenerate & (1u << static_cast<unsigned>(m)); }

  void set(Metric m, double v) {
    values[static_cast<std::size_t>(m)] = v;
    present |= static_cast<std::uint16_t>(1u << static_cast<unsigned>(m));
  }
  void set_degenerate(Metric m) {
    values[static_cast<std::size_t>(m)] = 0.0;
    present |= static_cast<std::uint16_t>(1u << static_cast<unsigned>(m));
    degenerate |= static_cast<std::uint16_t>(1u << static_cast<unsigned>(m));
  }

  std::vector<std::string> degenerate_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < kMetricCount; ++i)
      if (degenerate & (1u << i)) out.emplace_back(kMetricNames[i]);
    return out;
  }
};

inline ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> truth) {
  if (preds.size() != truth.size() || preds.empty())
    throw Error(Errc::length_mismatch, "prediction and truth lengths differ or are empty");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (truth[i] == Label::positive)
      (preds[i] == Label::positive ? cm.tp : cm.fn)++;
    else
      (preds[i] == Label::negative ? cm.tn : cm.fp)++;
  }
  return cm;
}

// Threshold metrics, each formula applied verbatim; zero denominators yield a
// flagged 0 so aggregation stays total.
inline MetricVector threshold_metrics(const ConfusionMatrix& cm) {
  const double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn);
  const double fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);
  MetricVector out;
  auto ratio = [&out](Metric m, double num, double den) {
    if (den == 0.0)
      out.set_degenerate(m);
    else
      out.set(m, num / den);
  };

  ratio(Metric::acc, tp + tn, tp + fp + tn + fn);
  ratio(Metric::sens, tp, tp + fn);
  ratio(Metric::spec, tn, tn + fp);
  ratio(Metric::prec, tp, tp + fp);
  ratio(Metric::recall, tp, tp + fn);
  ratio(Metric::fpr, fp, fp + tn);
  ratio(Metric::f1, 2.0 * out.get(Metric::prec) * out.get(Metric::recall),
        out.get(Metric::prec) + out.get(Metric::recall));
  ratio(Metric::kappa, 2.0 * (tp * tn - fn * fp),
        (tp + fp) * (fp + tn) + (tp + fn) * (fn + tn));
  ratio(Metric::mcc, tp * tn - fn * fp,
        std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)));
  out.set(Metric::bal_acc, (out.get(Metric::sens) + out.get(Metric::spec)) / 2.0);
  out.set(Metric::gmean, std::sqrt(out.get(Metric::sens) * out.get(Metric::spec)));
  return out;
}

// Cross-check form of Cohen's Kappa, (p_o - p_e) / (1 - p_e).
inline double kappa_standard(const ConfusionMatrix& cm) {
  const double n = static_cast<double>(cm.total());
  const double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn);
  const double fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);
  const double po = (tp + tn) / n;
  const double pe = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n);
  if (pe == 1.0) return 0.0;
  return (po - pe) / (1.0 - pe);
}

struct ScoredPredictions {
  std::vector<double> scores;  // probability of the positive class
  std::vector<Label> labels;   // ground truth
  double threshold = 0.5;
};

inline std::vector<Label> hard_labels(std::span<const double> scores, double threshold) {
  std::vector<Label> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    out[i] = scores[i] >= threshold ? Label::positive : Label::negative;
  return out;
}

// Mann-Whitney statistic over (positive, negative) score pairs with half
// credit for ties; computed from average ranks in O(n log n).
inline double roc_auc(const ScoredPredictions& sp) {
  if (sp.scores.size() != sp.labels.size())
    throw Error(Errc::length_mismatch, "scores and labels differ in length");
  const std::size_t n = sp.scores.size();
  std::size_t n_pos = 0;
  for (Label l : sp.labels) n_pos += (l == Label::positive) ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw Error(Errc::one_class_only, "roc_auc needs at least one score from each class");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return sp.scores[a] < sp.scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && sp.scores[order[j]] == sp.scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (sp.labels[order[t]] == Label::positive) rank_sum_pos += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

// Area under the precision-recall step curve: sum of (recall increment x
// precision at that threshold) over distinct score thresholds, descending.
inline double pr_auc(const ScoredPredictions& sp) {
  if (sp.scores.size() != sp.labels.size())
    throw Error(Errc::length_mismatch, "scores and labels differ in length");
  const std::size_t n = sp.scores.size();
  std::size_t n_pos = 0;
  for (Label l : sp.labels) n_pos += (l == Label::positive) ? 1 : 0;
  if (n_pos == 0) throw Error(Errc::no_positives, "pr_auc needs at least one positive");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return sp.scores[a] > sp.scores[b]; });

  double area = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && sp.scores[order[j]] == sp.scores[order[i]]) ++j;
    for (std::size_t t = i; t < j; ++t)
      (sp.labels[order[t]] == Label::positive ? tp : fp)++;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

// Threshold metrics from the given hard labels plus both curve areas from the
// scores. Used where the labelling rule is not a plain threshold (ensembles).
inline MetricVector evaluate_predictions(std::span<const Label> hard,
                                         const ScoredPredictions& sp) {
  MetricVector mv = threshold_metrics(confusion(hard, sp.labels));
  bool has_pos = false, has_neg = false;
  for (Label l : sp.labels) (l == Label::positive ? has_pos : has_neg) = true;
  if (has_pos && has_neg)
    mv.set(Metric::roc_auc, roc_auc(sp));
  else
    mv.set_degenerate(Metric::roc_auc);
  if (has_pos)
    mv.set(Metric::pr_auc, pr_auc(sp));
  else
    mv.set_degenerate(Metric::pr_auc);
  return mv;
}

inline MetricVector full_metrics(const ScoredPredictions& sp) {
  return evaluate_predictions(hard_labels(sp.scores, sp.threshold), sp);
}

}  // namespace film
