#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "film/dataset.hpp"
#include "film/error.hpp"
#include "film/learners.hpp"
#include "film/metrics.hpp"
#include "film/rng.hpp"

namespace film {

// Replicate minority rows (originals kept, extras drawn with replacement)
// until the classes balance.
inline Dataset upsample(const Dataset& d, std::uint64_t seed) {
  ClassIndex ci = split_by_class(d);
  if (ci.minority.empty()) throw Error(Errc::one_class_only, "upsample needs both classes");
  if (ci.minority.size() == ci.majority.size()) return d;
  Rng rng(seed);
  std::vector<std::size_t> rows(d.n_rows());
  for (std::size_t i = 0; i < d.n_rows(); ++i) rows[i] = i;
  const std::size_t extra = ci.majority.size() - ci.minority.size();
  for (std::size_t i : sample_with_replacement(rng, ci.minority.size(), extra))
    rows.push_back(ci.minority[i]);
  return d.subset(rows, d.provenance() + "/upsample");
}

// Subsample the majority class without replacement down to the minority size.
inline Dataset downsample(const Dataset& d, std::uint64_t seed) {
  ClassIndex ci = split_by_class(d);
  if (ci.minority.empty()) throw Error(Errc::one_class_only, "downsample needs both classes");
  Rng rng(seed);
  std::vector<std::size_t> rows = ci.minority;
  for (std::size_t i : sample_without_replacement(rng, ci.majority.size(), ci.minority.size()))
    rows.push_back(ci.majority[i]);
  std::sort(rows.begin(), rows.end());
  return d.subset(rows, d.provenance() + "/downsample");
}

struct SmoteRecord {
  std::size_t base_row = 0;      // row index in the returned dataset
  std::size_t neighbor_row = 0;  // row index in the returned dataset
  double lambda = 0.0;
};

struct SmoteResult {
  Dataset data;
  std::vector<SmoteRecord> synthesis;  // one per appended synthetic row
};

// Synthetic minority oversampling: each synthetic row interpolates between a
// minority row and one of its k Euclidean nearest minority neighbours.
// oversample_ratio <= 0 balances the classes; otherwise round(ratio * n_min)
// synthetic rows are produced. One-hot blocks are repaired to the nearest
// valid indicator vector.
inline SmoteResult smote(const Dataset& d, int k_neighbors, double oversample_ratio,
                         std::uint64_t seed) {
  ClassIndex ci = split_by_class(d);
  const std::size_t n_min = ci.minority.size();
  if (n_min < 2) throw Error(Errc::too_few_minority, "smote needs at least 2 minority rows");
  if (k_neighbors < 1 || static_cast<std::size_t>(k_neighbors) > n_min - 1)
    throw Error(Errc::too_few_minority,
                "k_neighbors must lie in [1, n_min-1]=" + std::to_string(n_min - 1));

  const std::size_t n_synth =
      oversample_ratio <= 0.0
          ? ci.majority.size() - std::min(ci.majority.size(), n_min)
          : detail::round_count(oversample_ratio * static_cast<double>(n_min));

  // k nearest minority neighbours per minority row (squared distances,
  // tie-broken by row order)
  std::vector<std::vector<std::size_t>> neighbors(n_min);
  std::vector<std::pair<double, std::size_t>> dist;
  for (std::size_t a = 0; a < n_min; ++a) {
    dist.clear();
    auto ra = d.row(ci.minority[a]);
    for (std::size_t b = 0; b < n_min; ++b) {
      if (b == a) continue;
      auto rb = d.row(ci.minority[b]);
      double s = 0.0;
      for (std::size_t j = 0; j < d.n_cols(); ++j) {
        const double delta = ra[j] - rb[j];
        s += delta * delta;
      }
      dist.emplace_back(s, b);
    }
    std::stable_sort(dist.begin(), dist.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    neighbors[a].reserve(static_cast<std::size_t>(k_neighbors));
    for (int k = 0; k < k_neighbors; ++k) neighbors[a].push_back(dist[static_cast<std::size_t>(k)].second);
  }

  Rng rng(seed);
  std::vector<double> values;
  std::vector<Label> labels;
  values.reserve((d.n_rows() + n_synth) * d.n_cols());
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    auto row = d.row(r);
    values.insert(values.end(), row.begin(), row.end());
    labels.push_back(d.label(r));
  }

  std::vector<SmoteRecord> records;
  records.reserve(n_synth);
  const Label minority_label = ci.minority_label;
  for (std::size_t s = 0; s < n_synth; ++s) {
    const std::size_t a = rng.index(n_min);
    const std::size_t b = neighbors[a][rng.index(neighbors[a].size())];
    const double lambda = rng.real01();
    auto ra = d.row(ci.minority[a]);
    auto rb = d.row(ci.minority[b]);
    std::vector<double> synth(d.n_cols());
    for (std::size_t j = 0; j < d.n_cols(); ++j) synth[j] = ra[j] + lambda * (rb[j] - ra[j]);
    // repair each one-hot block: argmax becomes 1, the rest 0
    for (const auto& g : d.one_hot_groups()) {
      std::size_t best = g.first_column;
      for (std::size_t c = g.first_column; c < g.first_column + g.width; ++c)
        if (synth[c] > synth[best]) best = c;
      for (std::size_t c = g.first_column; c < g.first_column + g.width; ++c)
        synth[c] = (c == best) ? 1.0 : 0.0;
    }
    values.insert(values.end(), synth.begin(), synth.end());
    labels.push_back(minority_label);
    records.push_back({ci.minority[a], ci.minority[b], lambda});
  }

  Dataset out(std::move(values), d.n_cols(), std::move(labels), d.feature_names(),
              d.positive_label(), d.provenance() + "/smote", d.schema(), d.one_hot_groups(), 0);
  return {std::move(out), std::move(records)};
}

// Ensemble of models trained on independent balanced downsamples. Probability
// is the member mean; the hard label is an unweighted majority vote with ties
// going to the majority (negative) class.
struct BaggedModel {
  std::vector<TrainedModel> members;

  std::vector<double> predict_proba(MatrixView rows) const {
    std::vector<double> out(rows.rows, 0.0);
    for (const auto& m : members) {
      auto p = m.predict_proba(rows);
      for (std::size_t i = 0; i < p.size(); ++i) out[i] += p[i];
    }
    for (double& v : out) v /= static_cast<double>(members.size());
    return out;
  }

  std::vector<Label> predict_labels(MatrixView rows, double threshold = 0.5) const {
    std::vector<std::size_t> votes_pos(rows.rows, 0);
    for (const auto& m : members) {
      auto p = m.predict_proba(rows);
      for (std::size_t i = 0; i < p.size(); ++i) votes_pos[i] += p[i] >= threshold ? 1 : 0;
    }
    std::vector<Label> out(rows.rows);
    for (std::size_t i = 0; i < rows.rows; ++i)
      out[i] = 2 * votes_pos[i] > members.size() ? Label::positive : Label::negative;
    return out;
  }
};

inline BaggedModel under_bagging(const Dataset& d, int n_bags, const LearnerSpec& learner,
                                 std::uint64_t seed) {
  if (n_bags < 1) throw Error(Errc::bad_config, "n_bags must be at least 1");
  BaggedModel model;
  model.members.reserve(static_cast<std::size_t>(n_bags));
  for (int b = 0; b < n_bags; ++b) {
    const std::uint64_t bag_seed = derive_seed(seed, static_cast<std::uint64_t>(b));
    Dataset bag = downsample(d, bag_seed);
    LearnerSpec spec = learner;
    spec.seed = derive_seed(bag_seed, "train");
    model.members.push_back(train(spec, bag));
  }
  return model;
}

inline std::size_t majority_draw_count(std::size_t n_min_draw, double p_target) {
  return detail::round_count(static_cast<double>(n_min_draw) * (1.0 - p_target) / p_target);
}

struct BalancedDrawIndices {
  std::vector<std::size_t> minority;  // indices into the minority pool
  std::vector<std::size_t> majority;  // indices into the majority pool
};

// Index-level core of balance_subsampling: both classes drawn uniformly with
// replacement. Exposed separately so coverage simulations run the same path.
inline BalancedDrawIndices balanced_draw(Rng& rng, std::size_t n_min_pool,
                                         std::size_t n_maj_pool, double p_target,
                                         std::size_t n_min_draw) {
  BalancedDrawIndices out;
  out.minority = sample_with_replacement(rng, n_min_pool, n_min_draw);
  const std::size_t n_maj_draw = majority_draw_count(n_min_draw, p_target);
  out.majority = sample_with_replacement(rng, n_maj_pool, n_maj_draw);
  return out;
}

// `count` independent balanced subsets of d, each drawing n_min_draw minority
// rows and round(n_min_draw*(1-p)/p) majority rows, all with replacement.
// Subset i uses the derived seed hash(seed, i).
inline std::vector<Dataset> balance_subsampling(const Dataset& d, double p_target,
                                                std::size_t n_min_draw, std::size_t count,
                                                std::uint64_t seed) {
  if (!(p_target > 0.0 && p_target <= 0.5))
    throw Error(Errc::bad_counts, "p_target must lie in (0, 0.5]");
  ClassIndex ci = split_by_class(d);
  if (n_min_draw < 1 || n_min_draw > ci.minority.size())
    throw Error(Errc::bad_counts, "n_min_draw must lie in [1, n_min=" +
                                      std::to_string(ci.minority.size()) + "]");
  std::vector<Dataset> subsets;
  subsets.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Rng rng(derive_seed(seed, s));
    BalancedDrawIndices draw =
        balanced_draw(rng, ci.minority.size(), ci.majority.size(), p_target, n_min_draw);
    std::vector<std::size_t> rows;
    rows.reserve(draw.minority.size() + draw.majority.size());
    for (std::size_t i : draw.minority) rows.push_back(ci.minority[i]);
    for (std::size_t i : draw.majority) rows.push_back(ci.majority[i]);
    subsets.push_back(d.subset(rows, d.provenance() + "/balanced" + std::to_string(s)));
  }
  return subsets;
}

}  // namespace film
