#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "film/error.hpp"
#include "film/metrics.hpp"
#include "film/records.hpp"

namespace film {

struct AgreementCell {
  double agreement = 0.0;                 // fraction of experiments that agreed
  std::size_t agreed_count = 0;           // raw count behind the fraction
  std::map<std::string, double> shares;   // winner shares, summing to `agreement`
};

struct AgreementMatrix {
  std::vector<Metric> metrics;
  std::vector<std::string> techniques;
  std::size_t n_experiments = 0;
  std::vector<AgreementCell> cells;  // upper triangle incl. diagonal, row-major

  std::size_t cell_index(std::size_t i, std::size_t j) const {
    // i <= j; cells of row i start after i full rows minus the skipped lower part
    return i * metrics.size() - i * (i + 1) / 2 + j;
  }
  const AgreementCell& cell(std::size_t i, std::size_t j) const {
    return cells[cell_index(i, j)];
  }
};

namespace detail {

// records regrouped per experiment (variant x fold), one metric vector per
// technique, with completeness enforced
struct ExperimentTable {
  std::vector<std::string> techniques;
  std::vector<std::vector<const MetricVector*>> experiments;  // [experiment][technique]
};

inline ExperimentTable group_experiments(const std::vector<RunRecord>& records,
                                         std::span<const std::string> techniques) {
  ExperimentTable table;
  table.techniques.assign(techniques.begin(), techniques.end());
  std::map<std::pair<std::size_t, std::size_t>, std::vector<const MetricVector*>> by_cell;
  for (const auto& rec : records) {
    auto t_it = std::find(techniques.begin(), techniques.end(), rec.technique);
    if (t_it == techniques.end()) continue;
    auto& slot = by_cell[{rec.variant, rec.fold}];
    slot.resize(techniques.size(), nullptr);
    const auto t = static_cast<std::size_t>(t_it - techniques.begin());
    if (slot[t] != nullptr)
      throw Error(Errc::incomplete_records, "duplicate record for technique '" + rec.technique +
                                                "' in one experiment");
    slot[t] = &rec.metrics;
  }
  if (by_cell.empty()) throw Error(Errc::incomplete_records, "no records");
  for (auto& [key, slot] : by_cell) {
    for (std::size_t t = 0; t < techniques.size(); ++t)
      if (slot[t] == nullptr)
        throw Error(Errc::incomplete_records,
                    "experiment (variant " + std::to_string(key.first) + ", fold " +
                        std::to_string(key.second) + ") lacks technique '" +
                        table.techniques[t] + "'");
    table.experiments.push_back(std::move(slot));
  }
  return table;
}

// index of the strictly-best technique under `m`, or -1 on a tie
inline int unique_argmax(const std::vector<const MetricVector*>& row, Metric m) {
  std::size_t best = 0;
  bool tied = false;
  for (std::size_t t = 1; t < row.size(); ++t) {
    const double v = row[t]->get(m), b = row[best]->get(m);
    if (v > b) {
      best = t;
      tied = false;
    } else if (v == b) {
      tied = true;
    }
  }
  return tied ? -1 : static_cast<int>(best);
}

}  // namespace detail

// Fraction of experiments each technique wins under one metric; ties split
// equally among the tied techniques. Ratios sum to 1.
inline std::map<std::string, double> win_ratios(const std::vector<RunRecord>& records,
                                                Metric metric,
                                                std::span<const std::string> techniques) {
  auto table = detail::group_experiments(records, techniques);
  std::map<std::string, double> wins;
  for (const auto& t : table.techniques) wins[t] = 0.0;
  for (const auto& row : table.experiments) {
    double best = row[0]->get(metric);
    for (const auto* mv : row) best = std::max(best, mv->get(metric));
    std::vector<std::size_t> winners;
    for (std::size_t t = 0; t < row.size(); ++t)
      if (row[t]->get(metric) == best) winners.push_back(t);
    for (std::size_t t : winners)
      wins[table.techniques[t]] += 1.0 / static_cast<double>(winners.size());
  }
  for (auto& [_, v] : wins) v /= static_cast<double>(table.experiments.size());
  return wins;
}

// Agreement between two metrics: both must crown the same technique with a
// unique argmax; a tie under either counts as disagreement.
inline AgreementCell pairwise_agreement(const std::vector<RunRecord>& records, Metric mi,
                                        Metric mj, std::span<const std::string> techniques) {
  auto table = detail::group_experiments(records, techniques);
  AgreementCell cell;
  std::map<std::string, std::size_t> agreed_by;
  for (const auto& row : table.experiments) {
    const int wi = detail::unique_argmax(row, mi);
    const int wj = detail::unique_argmax(row, mj);
    if (wi >= 0 && wi == wj) {
      ++cell.agreed_count;
      ++agreed_by[table.techniques[static_cast<std::size_t>(wi)]];
    }
  }
  const double n = static_cast<double>(table.experiments.size());
  cell.agreement = static_cast<double>(cell.agreed_count) / n;
  for (const auto& [tech, count] : agreed_by)
    cell.shares[tech] = static_cast<double>(count) / n;
  return cell;
}

inline AgreementMatrix agreement_matrix(const std::vector<RunRecord>& records,
                                        std::span<const Metric> metrics,
                                        std::span<const std::string> techniques) {
  AgreementMatrix matrix;
  matrix.metrics.assign(metrics.begin(), metrics.end());
  matrix.techniques.assign(techniques.begin(), techniques.end());
  matrix.n_experiments = detail::group_experiments(records, techniques).experiments.size();
  for (std::size_t i = 0; i < metrics.size(); ++i)
    for (std::size_t j = i; j < metrics.size(); ++j) {
      if (i == j) {
        AgreementCell diag;
        diag.agreement = 1.0;
        diag.agreed_count = matrix.n_experiments;
        diag.shares = win_ratios(records, metrics[i], techniques);
        matrix.cells.push_back(std::move(diag));
      } else {
        matrix.cells.push_back(pairwise_agreement(records, metrics[i], metrics[j], techniques));
      }
    }
  return matrix;
}

struct DiscordanceResult {
  double ratio = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Mean disagreement over the strictly-upper cells, with a 99% Wilson score
// interval over the pooled per-experiment indicators.
inline DiscordanceResult discordance_ratio(const AgreementMatrix& matrix) {
  const std::size_t m = matrix.metrics.size();
  std::size_t cells = 0, total = 0, disagreed = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const auto& cell = matrix.cell(i, j);
      sum += 1.0 - cell.agreement;
      ++cells;
      total += matrix.n_experiments;
      disagreed += matrix.n_experiments - cell.agreed_count;
    }
  DiscordanceResult result;
  if (cells == 0) {
    result.ci_high = 1.0;
    return result;
  }
  result.ratio = sum / static_cast<double>(cells);

  const double z = 2.5758293035489004;  // 99% two-sided normal quantile
  const double n = static_cast<double>(total);
  const double p = static_cast<double>(disagreed) / n;
  const double denom = 1.0 + z * z / n;
  const double centre = (p + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
  result.ci_low = std::max(0.0, centre - half);
  result.ci_high = std::min(1.0, centre + half);
  return result;
}

// ---------------------------------------------------------------------------
// SVG rendering

namespace detail {

inline constexpr std::array<std::string_view, 10> kPalette = {
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// one pie slice as a closed arc path; fraction_start/end in turns from 12
// o'clock, clockwise
inline void append_slice(std::string& svg, double cx, double cy, double radius,
                         double fraction_start, double fraction_end, std::string_view fill) {
  const double span = fraction_end - fraction_start;
  if (span <= 0.0) return;
  if (span >= 1.0 - 1e-12) {
    svg += "<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" r=\"" + fmt(radius) +
           "\" fill=\"" + std::string(fill) + "\"/>\n";
    return;
  }
  const double two_pi = 6.283185307179586;
  const double a0 = fraction_start * two_pi - two_pi / 4.0;
  const double a1 = fraction_end * two_pi - two_pi / 4.0;
  const double x0 = cx + radius * std::cos(a0), y0 = cy + radius * std::sin(a0);
  const double x1 = cx + radius * std::cos(a1), y1 = cy + radius * std::sin(a1);
  const int large_arc = span > 0.5 ? 1 : 0;
  svg += "<path d=\"M " + fmt(cx) + " " + fmt(cy) + " L " + fmt(x0) + " " + fmt(y0) + " A " +
         fmt(radius) + " " + fmt(radius) + " 0 " + std::to_string(large_arc) + " 1 " + fmt(x1) +
         " " + fmt(y1) + " Z\" fill=\"" + std::string(fill) + "\"/>\n";
}

}  // namespace detail

// Upper-triangular grid of pies: filled arc length is the agreement fraction,
// slices are per-technique shares, the empty remainder is disagreement.
// Output is byte-identical for identical input.
inline std::string render_concordance_svg(const AgreementMatrix& matrix) {
  const std::size_t m = matrix.metrics.size();
  const double cell = 84.0, radius = 32.0, left = 84.0, top = 40.0;
  const double legend_h = 24.0 * static_cast<double>(matrix.techniques.size()) + 16.0;
  const double width = left + cell * static_cast<double>(m) + 16.0;
  const double height = top + cell * static_cast<double>(m) + legend_h + 16.0;

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(width) +
         "\" height=\"" + detail::fmt(height) + "\" font-family=\"sans-serif\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t j = 0; j < m; ++j) {
    const double x = left + cell * (static_cast<double>(j) + 0.5);
    svg += "<text x=\"" + detail::fmt(x) + "\" y=\"" + detail::fmt(top - 12.0) +
           "\" text-anchor=\"middle\" font-size=\"12\">" +
           std::string(metric_name(matrix.metrics[j])) + "</text>\n";
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double y = top + cell * (static_cast<double>(i) + 0.5);
    svg += "<text x=\"" + detail::fmt(left - 10.0) + "\" y=\"" + detail::fmt(y + 4.0) +
           "\" text-anchor=\"end\" font-size=\"12\">" +
           std::string(metric_name(matrix.metrics[i])) + "</text>\n";
  }

  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) {
      const auto& c = matrix.cell(i, j);
      const double cx = left + cell * (static_cast<double>(j) + 0.5);
      const double cy = top + cell * (static_cast<double>(i) + 0.5);
      svg += "<circle cx=\"" + detail::fmt(cx) + "\" cy=\"" + detail::fmt(cy) + "\" r=\"" +
             detail::fmt(radius) + "\" fill=\"white\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
      double at = 0.0;
      for (std::size_t t = 0; t < matrix.techniques.size(); ++t) {
        const auto it = c.shares.find(matrix.techniques[t]);
        if (it == c.shares.end() || it->second <= 0.0) continue;
        detail::append_slice(svg, cx, cy, radius, at, at + it->second,
                             detail::kPalette[t % detail::kPalette.size()]);
        at += it->second;
      }
    }

  const double ly = top + cell * static_cast<double>(m) + 16.0;
  for (std::size_t t = 0; t < matrix.techniques.size(); ++t) {
    const double y = ly + 24.0 * static_cast<double>(t);
    svg += "<rect x=\"" + detail::fmt(left) + "\" y=\"" + detail::fmt(y) +
           "\" width=\"14\" height=\"14\" fill=\"" +
           std::string(detail::kPalette[t % detail::kPalette.size()]) + "\"/>\n";
    svg += "<text x=\"" + detail::fmt(left + 20.0) + "\" y=\"" + detail::fmt(y + 11.0) +
           "\" font-size=\"12\">" + matrix.techniques[t] + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

inline void render_concordance_svg(const AgreementMatrix& matrix, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot open '" + path + "' for writing");
  out << render_concordance_svg(matrix);
  if (!out) throw Error(Errc::io_error, "failed writing '" + path + "'");
}

}  // namespace film
