#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "film/dataset.hpp"
#include "film/error.hpp"
#include "film/learners.hpp"
#include "film/metrics.hpp"
#include "film/resampling.hpp"
#include "film/rng.hpp"

namespace film {

struct IpipConfig {
  double alpha = 0.99;           // coverage confidence for the binomial bounds
  double n_min_fraction = 0.75;  // minority draw size as a fraction of n_min
  double p_subset = 0.45;        // minority proportion of the outer subsets
  double p_inner = 0.5;          // minority proportion of the per-model resamples
  double p_holdout = 0.75;       // internal train share
  std::optional<int> b_s_override;
  std::optional<int> b_e_override;
  double intra_vote_threshold = 0.75;  // majority-class share needed within an ensemble
  double inter_vote_threshold = 0.5;   // majority-class share needed across ensembles
  Metric selection_metric = Metric::kappa;
  int n_threads = 1;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::bad_config, "alpha must lie in (0,1)");
    for (double f : {n_min_fraction, p_holdout})
      if (!(f > 0.0 && f < 1.0))
        throw Error(Errc::bad_config, "fractions must lie strictly in (0,1)");
    for (double p : {p_subset, p_inner})
      if (!(p > 0.0 && p <= 0.5))
        throw Error(Errc::bad_config, "subset proportions must lie in (0, 0.5]");
    for (double t : {intra_vote_threshold, inter_vote_threshold})
      if (!(t > 0.0 && t <= 1.0))
        throw Error(Errc::bad_config, "vote thresholds must lie in (0,1]");
    if ((b_s_override && *b_s_override < 1) || (b_e_override && *b_e_override < 1))
      throw Error(Errc::bad_config, "subset/ensemble overrides must be at least 1");
    if (n_threads < 1) throw Error(Errc::bad_config, "n_threads must be at least 1");
  }
};

// Smallest b_s with b_s > log(1-alpha) / (n_min * log(1-1/n)): enough balanced
// subsets that any given minority row of a pool of n is drawn at least once
// with probability exceeding alpha, when each subset draws n_min rows with
// replacement.
inline int min_subsets(double alpha, std::size_t n, std::size_t n_min) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::bad_config, "alpha must lie in (0,1)");
  if (n < 2 || n_min < 1) throw Error(Errc::bad_config, "need n >= 2 and n_min >= 1");
  const double bound = std::log(1.0 - alpha) /
                       (static_cast<double>(n_min) * std::log(1.0 - 1.0 / static_cast<double>(n)));
  return static_cast<int>(std::floor(bound)) + 1;
}

// Same bound with the pool collapsed to the draw size itself: the largest
// useful ensemble for resamples of n_min rows drawn from n_min rows.
inline int max_ensemble_models(double alpha, std::size_t n_min) {
  if (n_min < 2) return 1;
  return min_subsets(alpha, n_min, n_min);
}

// Remaining attempts allowed to grow an ensemble that already has t models.
inline int tries_budget(int b_e, int t) {
  return static_cast<int>(std::ceil(static_cast<double>(b_e - t) / 3.0));
}

struct IpipEnsemble {
  std::vector<TrainedModel> models;
  std::vector<double> accepted_performance;  // strictly increasing
};

class IpipModel {
 public:
  IpipModel(IpipConfig cfg, std::size_t n_features, int b_s, int b_e,
            std::vector<IpipEnsemble> ensembles)
      : cfg_(std::move(cfg)),
        n_features_(n_features),
        b_s_(b_s),
        b_e_(b_e),
        ensembles_(std::move(ensembles)) {}

  const IpipConfig& config() const { return cfg_; }
  std::size_t n_features() const { return n_features_; }
  int b_s() const { return b_s_; }
  int b_e() const { return b_e_; }
  const std::vector<IpipEnsemble>& ensembles() const { return ensembles_; }

  nlohmann::json to_json() const;
  static IpipModel from_json(const nlohmann::json& j);

 private:
  IpipConfig cfg_;
  std::size_t n_features_;
  int b_s_;
  int b_e_;
  std::vector<IpipEnsemble> ensembles_;
};

// Diagnostic capture of a training run, for invariant checks: which source
// rows each subset drew and how every candidate fared.
struct IpipTrace {
  std::vector<std::size_t> holdout_train_rows;
  std::vector<std::size_t> holdout_test_rows;
  struct Subset {
    std::vector<std::size_t> rows;  // indices into the source dataset
    int candidates_trained = 0;
    std::vector<std::pair<double, bool>> candidates;  // (performance, accepted)
    bool fallback_accept = false;
  };
  std::vector<Subset> subsets;
  std::size_t n_min_train = 0;
  std::size_t n_min_draw = 0;
};

namespace detail {

// Vote of one ensemble given per-member positive votes: the majority class
// (negative) wins iff its share reaches the threshold; ties favour it.
inline Label ensemble_vote(std::size_t votes_pos, std::size_t size, double intra_threshold) {
  const double frac_neg =
      static_cast<double>(size - votes_pos) / static_cast<double>(size);
  return frac_neg >= intra_threshold ? Label::negative : Label::positive;
}

struct EnsembleEval {
  // hard member votes on the holdout test set, one vector per member
  std::vector<std::vector<Label>> member_labels;

  double score(const IpipConfig& cfg, std::span<const Label> truth) const {
    const std::size_t n = truth.size();
    std::vector<Label> voted(n);
    std::vector<double> positive_fraction(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t votes_pos = 0;
      for (const auto& ml : member_labels) votes_pos += ml[i] == Label::positive ? 1 : 0;
      voted[i] = ensemble_vote(votes_pos, member_labels.size(), cfg.intra_vote_threshold);
      positive_fraction[i] =
          static_cast<double>(votes_pos) / static_cast<double>(member_labels.size());
    }
    if (cfg.selection_metric == Metric::roc_auc || cfg.selection_metric == Metric::pr_auc) {
      ScoredPredictions sp{positive_fraction, {truth.begin(), truth.end()}, 0.5};
      return cfg.selection_metric == Metric::roc_auc ? roc_auc(sp) : pr_auc(sp);
    }
    return threshold_metrics(confusion(voted, truth)).get(cfg.selection_metric);
  }
};

struct SubsetResult {
  IpipEnsemble ensemble;
  IpipTrace::Subset trace;
};

inline SubsetResult grow_ensemble(const Dataset& train_part,
                                  std::span<const std::size_t> train_rows_in_source,
                                  const Dataset& test_part, const LearnerSpec& learner,
                                  const IpipConfig& cfg, int b_e, std::size_t n_min_draw,
                                  std::uint64_t subset_seed) {
  SubsetResult result;
  Rng rng(derive_seed(subset_seed, "draw"));
  ClassIndex ci = split_by_class(train_part);
  BalancedDrawIndices draw =
      balanced_draw(rng, ci.minority.size(), ci.majority.size(), cfg.p_subset, n_min_draw);

  std::vector<std::size_t> subset_rows;
  subset_rows.reserve(draw.minority.size() + draw.majority.size());
  for (std::size_t i : draw.minority) subset_rows.push_back(ci.minority[i]);
  for (std::size_t i : draw.majority) subset_rows.push_back(ci.majority[i]);
  for (std::size_t r : subset_rows) result.trace.rows.push_back(train_rows_in_source[r]);
  Dataset subset = train_part.subset(subset_rows, train_part.provenance() + "/subset");

  EnsembleEval eval;
  double best_performance = 0.0;
  int tries = 0;
  std::uint64_t attempt = 0;
  std::optional<TrainedModel> first_candidate;
  double first_performance = 0.0;

  while (static_cast<int>(result.ensemble.models.size()) < b_e &&
         tries < tries_budget(b_e, static_cast<int>(result.ensemble.models.size()))) {
    const std::uint64_t attempt_seed = derive_seed(subset_seed, attempt++);
    Dataset inner = balance_subsampling(subset, cfg.p_inner,
                                        split_by_class(subset).minority.size(), 1,
                                        derive_seed(attempt_seed, "inner"))
                        .front();
    LearnerSpec spec = learner;
    spec.seed = derive_seed(attempt_seed, "train");
    TrainedModel model = train(spec, inner);
    ++result.trace.candidates_trained;

    eval.member_labels.push_back(hard_labels(model.predict_proba(test_part), 0.5));
    const double performance = eval.score(cfg, test_part.labels());
    if (!first_candidate) {
      first_candidate = model;
      first_performance = performance;
    }
    if (performance > best_performance) {
      best_performance = performance;
      result.ensemble.models.push_back(std::move(model));
      result.ensemble.accepted_performance.push_back(performance);
      result.trace.candidates.emplace_back(performance, true);
      tries = 0;
    } else {
      eval.member_labels.pop_back();
      result.trace.candidates.emplace_back(performance, false);
      ++tries;
    }
  }

  // An ensemble that never beat performance 0 still needs one voting member.
  if (result.ensemble.models.empty()) {
    result.ensemble.models.push_back(std::move(*first_candidate));
    result.ensemble.accepted_performance.push_back(first_performance);
    result.trace.fallback_accept = true;
  }
  return result;
}

}  // namespace detail

inline IpipModel train_ipip(const Dataset& d, const LearnerSpec& learner, const IpipConfig& cfg,
                            std::uint64_t seed, IpipTrace* trace = nullptr) {
  cfg.validate();
  ClassIndex ci = split_by_class(d);
  if (ci.minority.size() < 2)
    throw Error(Errc::class_too_small, "ipip needs at least 2 minority rows");

  HoldoutIndices split = stratified_holdout_indices(d, cfg.p_holdout, derive_seed(seed, "holdout"));
  Dataset train_part = d.subset(split.train, d.provenance() + "/ipip.train");
  Dataset test_part = d.subset(split.test, d.provenance() + "/ipip.test");

  const std::size_t n_min_train = split_by_class(train_part).minority.size();
  const std::size_t n_min_draw = static_cast<std::size_t>(
      std::ceil(cfg.n_min_fraction * static_cast<double>(n_min_train)));
  const int b_s =
      cfg.b_s_override ? *cfg.b_s_override : min_subsets(cfg.alpha, n_min_train, n_min_draw);
  const int b_e = cfg.b_e_override ? *cfg.b_e_override : max_ensemble_models(cfg.alpha, n_min_draw);

  std::vector<detail::SubsetResult> results(static_cast<std::size_t>(b_s));
  auto run_subset = [&](std::size_t s) {
    results[s] = detail::grow_ensemble(train_part, split.train, test_part, learner, cfg, b_e,
                                       n_min_draw, derive_seed(seed, s));
  };
  if (cfg.n_threads > 1) {
    std::vector<std::thread> workers;
    std::atomic<std::size_t> next{0};
    const std::size_t n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.n_threads), results.size());
    for (std::size_t w = 0; w < n_workers; ++w)
      workers.emplace_back([&] {
        for (std::size_t s = next.fetch_add(1); s < results.size(); s = next.fetch_add(1))
          run_subset(s);
      });
    for (auto& t : workers) t.join();
  } else {
    for (std::size_t s = 0; s < results.size(); ++s) run_subset(s);
  }

  std::vector<IpipEnsemble> ensembles;
  ensembles.reserve(results.size());
  for (auto& r : results) ensembles.push_back(std::move(r.ensemble));
  if (trace) {
    trace->holdout_train_rows = split.train;
    trace->holdout_test_rows = split.test;
    trace->n_min_train = n_min_train;
    trace->n_min_draw = n_min_draw;
    for (auto& r : results) trace->subsets.push_back(std::move(r.trace));
  }
  return IpipModel(cfg, d.n_cols(), b_s, b_e, std::move(ensembles));
}

struct IpipPrediction {
  std::vector<Label> labels;
  std::vector<double> scores;  // mean over ensembles of the positive member share
  std::vector<std::uint32_t> ensemble_votes_positive;
  std::vector<std::vector<std::uint32_t>> model_votes_positive;  // [row][ensemble]
};

inline IpipPrediction predict_ipip(const IpipModel& m, MatrixView rows) {
  if (rows.cols != m.n_features())
    throw Error(Errc::width_mismatch, "expected " + std::to_string(m.n_features()) +
                                          " features, got " + std::to_string(rows.cols));
  const std::size_t n = rows.rows;
  const std::size_t n_ens = m.ensembles().size();
  IpipPrediction out;
  out.labels.resize(n);
  out.scores.assign(n, 0.0);
  out.ensemble_votes_positive.assign(n, 0);
  out.model_votes_positive.assign(n, std::vector<std::uint32_t>(n_ens, 0));

  for (std::size_t e = 0; e < n_ens; ++e) {
    const auto& ensemble = m.ensembles()[e];
    for (const auto& model : ensemble.models) {
      auto p = model.predict_proba(rows);
      for (std::size_t i = 0; i < n; ++i)
        out.model_votes_positive[i][e] += p[i] >= 0.5 ? 1 : 0;
    }
  }
  const double inter = m.config().inter_vote_threshold;
  const double intra = m.config().intra_vote_threshold;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ens_pos = 0;
    for (std::size_t e = 0; e < n_ens; ++e) {
      const std::size_t size = m.ensembles()[e].models.size();
      const std::size_t votes_pos = out.model_votes_positive[i][e];
      if (detail::ensemble_vote(votes_pos, size, intra) == Label::positive) ++ens_pos;
      out.scores[i] += static_cast<double>(votes_pos) / static_cast<double>(size);
    }
    out.scores[i] /= static_cast<double>(n_ens);
    out.ensemble_votes_positive[i] = static_cast<std::uint32_t>(ens_pos);
    const double frac_neg =
        static_cast<double>(n_ens - ens_pos) / static_cast<double>(n_ens);
    out.labels[i] = frac_neg >= inter ? Label::negative : Label::positive;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

inline void to_json(nlohmann::json& j, const IpipConfig& cfg) {
  j = nlohmann::json{{"alpha", cfg.alpha},
                     {"n_min_fraction", cfg.n_min_fraction},
                     {"p_subset", cfg.p_subset},
                     {"p_inner", cfg.p_inner},
                     {"p_holdout", cfg.p_holdout},
                     {"intra_vote_threshold", cfg.intra_vote_threshold},
                     {"inter_vote_threshold", cfg.inter_vote_threshold},
                     {"selection_metric", std::string(metric_name(cfg.selection_metric))}};
  if (cfg.b_s_override) j["b_s_override"] = *cfg.b_s_override;
  if (cfg.b_e_override) j["b_e_override"] = *cfg.b_e_override;
}

inline void from_json(const nlohmann::json& j, IpipConfig& cfg) {
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.n_min_fraction = j.value("n_min_fraction", cfg.n_min_fraction);
  cfg.p_subset = j.value("p_subset", cfg.p_subset);
  cfg.p_inner = j.value("p_inner", cfg.p_inner);
  cfg.p_holdout = j.value("p_holdout", cfg.p_holdout);
  cfg.intra_vote_threshold = j.value("intra_vote_threshold", cfg.intra_vote_threshold);
  cfg.inter_vote_threshold = j.value("inter_vote_threshold", cfg.inter_vote_threshold);
  if (j.contains("selection_metric")) {
    auto m = metric_from_name(j.at("selection_metric").get<std::string>());
    if (!m) throw Error(Errc::bad_config, "unknown selection metric");
    cfg.selection_metric = *m;
  }
  if (j.contains("b_s_override")) cfg.b_s_override = j.at("b_s_override").get<int>();
  if (j.contains("b_e_override")) cfg.b_e_override = j.at("b_e_override").get<int>();
}

inline nlohmann::json IpipModel::to_json() const {
  nlohmann::json j{{"format", "film.ipip"}, {"version", 1}};
  j["config"] = cfg_;
  j["n_features"] = n_features_;
  j["b_s"] = b_s_;
  j["b_e"] = b_e_;
  nlohmann::json ensembles = nlohmann::json::array();
  for (const auto& e : ensembles_) {
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : e.models) models.push_back(m.to_json());
    ensembles.push_back(
        {{"accepted_performance", e.accepted_performance}, {"models", std::move(models)}});
  }
  j["ensembles"] = std::move(ensembles);
  return j;
}

inline IpipModel IpipModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "film.ipip" || j.value("version", 0) != 1)
    throw Error(Errc::bad_config, "not a version-1 film.ipip document");
  IpipConfig cfg = j.at("config").get<IpipConfig>();
  std::vector<IpipEnsemble> ensembles;
  for (const auto& je : j.at("ensembles")) {
    IpipEnsemble e;
    e.accepted_performance = je.at("accepted_performance").get<std::vector<double>>();
    for (const auto& jm : je.at("models")) e.models.push_back(TrainedModel::from_json(jm));
    ensembles.push_back(std::move(e));
  }
  return IpipModel(std::move(cfg), j.at("n_features").get<std::size_t>(), j.at("b_s").get<int>(),
                   j.at("b_e").get<int>(), std::move(ensembles));
}

}  // namespace film
