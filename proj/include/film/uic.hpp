#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "film/error.hpp"
#include "film/metrics.hpp"
#include "film/records.hpp"

namespace film {

// Sample Pearson correlation; nullopt when either sequence has zero variance.
inline std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(Errc::length_mismatch, "sequences differ in length");
  if (xs.size() < 3) throw Error(Errc::too_few, "pearson needs at least 3 points");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

struct GaussianParams {
  double a = 1.0;   // max height
  double b = 0.0;   // centre
  double c = 0.25;  // width

  void validate() const {
    if (!(a > 0.0) || !(c > 0.0))
      throw Error(Errc::bad_config, "gaussian parameters need a > 0 and c > 0");
  }
};

// Metric weight from its bias estimate. An undefined correlation means the
// metric did not move with p_min at all, so it keeps the full weight a.
inline double gaussian_weight(std::optional<double> r, const GaussianParams& g) {
  if (!r) return g.a;
  const double d = *r - g.b;
  return g.a * std::exp(-(d * d) / (2.0 * g.c * g.c));
}

// Pearson correlations of every (technique, metric) pair against the minority
// proportion vector, from fold-averaged metric values per variant.
struct BiasProfile {
  std::vector<std::string> techniques;
  std::vector<Metric> metrics;
  std::vector<double> p_min_vector;            // variant order, p_d first
  std::vector<std::optional<double>> r;        // [technique][metric]
  std::vector<double> variant_means;           // [technique][variant][metric]

  std::optional<double> correlation(std::size_t t, std::size_t m) const {
    return r[t * metrics.size() + m];
  }
  double mean_value(std::size_t t, std::size_t v, std::size_t m) const {
    return variant_means[(t * p_min_vector.size() + v) * metrics.size() + m];
  }
};

inline BiasProfile bias_profile(const std::vector<RunRecord>& records,
                                std::span<const double> p_min_vector,
                                std::span<const std::string> techniques,
                                std::span<const Metric> metrics) {
  const std::size_t n_var = p_min_vector.size(), n_tech = techniques.size(),
                    n_met = metrics.size();
  BiasProfile profile;
  profile.techniques.assign(techniques.begin(), techniques.end());
  profile.metrics.assign(metrics.begin(), metrics.end());
  profile.p_min_vector.assign(p_min_vector.begin(), p_min_vector.end());
  profile.variant_means.assign(n_tech * n_var * n_met, 0.0);

  std::vector<std::size_t> fold_counts(n_tech * n_var, 0);
  for (const auto& rec : records) {
    auto t_it = std::find(techniques.begin(), techniques.end(), rec.technique);
    if (t_it == techniques.end()) continue;
    const std::size_t t = static_cast<std::size_t>(t_it - techniques.begin());
    if (rec.variant >= n_var)
      throw Error(Errc::incomplete_grid, "record variant index exceeds the proportion grid");
    ++fold_counts[t * n_var + rec.variant];
    for (std::size_t m = 0; m < n_met; ++m)
      profile.variant_means[(t * n_var + rec.variant) * n_met + m] +=
          rec.metrics.get(metrics[m]);
  }
  for (std::size_t t = 0; t < n_tech; ++t)
    for (std::size_t v = 0; v < n_var; ++v) {
      const std::size_t folds = fold_counts[t * n_var + v];
      if (folds == 0)
        throw Error(Errc::incomplete_grid, "technique '" + profile.techniques[t] +
                                               "' has no records for variant " +
                                               std::to_string(v));
      for (std::size_t m = 0; m < n_met; ++m)
        profile.variant_means[(t * n_var + v) * n_met + m] /= static_cast<double>(folds);
    }

  profile.r.resize(n_tech * n_met);
  std::vector<double> series(n_var);
  for (std::size_t t = 0; t < n_tech; ++t)
    for (std::size_t m = 0; m < n_met; ++m) {
      for (std::size_t v = 0; v < n_var; ++v) series[v] = profile.mean_value(t, v, m);
      profile.r[t * n_met + m] = pearson(series, p_min_vector);
    }
  return profile;
}

struct UicEntry {
  std::vector<double> weights;        // per metric
  std::vector<double> metric_values;  // per metric, on the original dataset
  double uic = 0.0;
};

struct UicReport {
  std::vector<std::string> techniques;
  std::vector<Metric> metrics;
  std::vector<UicEntry> entries;
  std::string winner;
};

// Weighted sum of the original-dataset metric values, weights from each
// technique's own correlation profile. The winner is the argmax technique.
inline UicReport uic_score(const BiasProfile& profile,
                           std::span<const std::vector<double>> original_metrics,
                           const GaussianParams& params) {
  params.validate();
  if (original_metrics.size() != profile.techniques.size())
    throw Error(Errc::length_mismatch, "one metric vector per technique required");
  UicReport report;
  report.techniques = profile.techniques;
  report.metrics = profile.metrics;
  double best = -1.0;
  for (std::size_t t = 0; t < profile.techniques.size(); ++t) {
    if (original_metrics[t].size() != profile.metrics.size())
      throw Error(Errc::length_mismatch, "metric vector width mismatch");
    UicEntry entry;
    for (std::size_t m = 0; m < profile.metrics.size(); ++m) {
      const double w = gaussian_weight(profile.correlation(t, m), params);
      entry.weights.push_back(w);
      entry.metric_values.push_back(original_metrics[t][m]);
      entry.uic += w * original_metrics[t][m];
    }
    if (entry.uic > best) {
      best = entry.uic;
      report.winner = profile.techniques[t];
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

// Convenience path: the original dataset is variant 0 of the profile.
inline UicReport uic_score(const BiasProfile& profile, const GaussianParams& params) {
  std::vector<std::vector<double>> originals(profile.techniques.size());
  for (std::size_t t = 0; t < profile.techniques.size(); ++t)
    for (std::size_t m = 0; m < profile.metrics.size(); ++m)
      originals[t].push_back(profile.mean_value(t, 0, m));
  return uic_score(profile, originals, params);
}

// Euclidean norm of a correlation column; undefined entries are skipped and
// counted.
inline double bias_distance(std::span<const std::optional<double>> r_column,
                            std::size_t* n_undefined = nullptr) {
  double s = 0.0;
  std::size_t undef = 0;
  for (const auto& r : r_column) {
    if (r)
      s += *r * *r;
    else
      ++undef;
  }
  if (n_undefined) *n_undefined = undef;
  return std::sqrt(s);
}

struct WilcoxonResult {
  double statistic = 0.0;  // sum of ranks of positive differences
  double p_value = 1.0;    // two-sided
  std::size_t n_used = 0;  // pairs left after dropping zero differences
  bool exact = false;
};

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace detail

// Paired Wilcoxon signed-rank test, two-sided. Zero differences are dropped;
// ties share average ranks. Exact enumeration up to 25 pairs, normal
// approximation with continuity and tie corrections beyond.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::length_mismatch, "paired samples differ in length");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  const std::size_t n = diffs.size();
  if (n < 5)
    throw Error(Errc::too_few, "need at least 5 nonzero differences, got " + std::to_string(n));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(diffs[x]) < std::abs(diffs[y]);
  });
  // doubled ranks stay integral under average-rank ties
  std::vector<std::uint64_t> rank2(n);
  double tie_correction = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
    const std::uint64_t doubled = static_cast<std::uint64_t>(i + 1 + j);  // 2 * average rank
    for (std::size_t t = i; t < j; ++t) rank2[order[t]] = doubled;
    const double ties = static_cast<double>(j - i);
    tie_correction += (ties * ties * ties - ties) / 48.0;
    i = j;
  }
  std::uint64_t w2 = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (diffs[k] > 0.0) w2 += rank2[k];

  WilcoxonResult result;
  result.statistic = static_cast<double>(w2) / 2.0;
  result.n_used = n;

  if (n <= 25) {
    result.exact = true;
    // distribution of the doubled statistic over all 2^n sign assignments
    const std::uint64_t max2 = static_cast<std::uint64_t>(n) * (n + 1);
    std::vector<std::uint64_t> count(max2 + 1, 0);
    count[0] = 1;
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint64_t r = rank2[k];
      for (std::uint64_t s = max2 + 1; s-- > r;) count[s] += count[s - r];
    }
    const double total = std::pow(2.0, static_cast<double>(n));
    double le = 0.0, ge = 0.0;
    for (std::uint64_t s = 0; s <= max2; ++s) {
      if (s <= w2) le += static_cast<double>(count[s]);
      if (s >= w2) ge += static_cast<double>(count[s]);
    }
    result.p_value = std::min(1.0, 2.0 * std::min(le, ge) / total);
  } else {
    const double dn = static_cast<double>(n);
    const double mean = dn * (dn + 1.0) / 4.0;
    const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_correction;
    const double w = result.statistic;
    double z = 0.0;
    if (var > 0.0) {
      const double cc = w > mean ? -0.5 : w < mean ? 0.5 : 0.0;
      z = (w - mean + cc) / std::sqrt(var);
    }
    result.p_value = std::clamp(2.0 * (1.0 - detail::normal_cdf(std::abs(z))), 0.0, 1.0);
  }
  return result;
}

inline std::vector<double> bonferroni(std::span<const double> ps, std::size_t m) {
  std::vector<double> out;
  out.reserve(ps.size());
  for (double p : ps) out.push_back(std::min(1.0, p * static_cast<double>(m)));
  return out;
}

}  // namespace film
