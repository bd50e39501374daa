#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "film/concordance.hpp"
#include "film/dataset.hpp"
#include "film/error.hpp"
#include "film/ipip.hpp"
#include "film/learners.hpp"
#include "film/metrics.hpp"
#include "film/records.hpp"
#include "film/resampling.hpp"
#include "film/rng.hpp"
#include "film/serialize.hpp"
#include "film/uic.hpp"

namespace film {

inline const std::vector<std::string>& known_iaas() {
  static const std::vector<std::string> kinds = {"none",  "upsample",      "downsample",
                                                 "smote", "under_bagging", "ipip"};
  return kinds;
}

inline HyperGrid default_grid(LearnerKind kind) {
  if (kind == LearnerKind::logistic) return {{{"l2_penalty", {0.0, 1e-3, 1e-1}}}};
  return {{{"max_depth", {8, 16}}, {"min_leaf_size", {1, 5}}}};
}

struct LearnerConfig {
  std::string name;  // short name used in technique ids
  LearnerSpec spec;
  HyperGrid grid;  // non-empty: Kappa-driven search on the original dataset first
};

struct ExperimentConfig {
  std::string dataset_path;
  std::string target_column;
  std::optional<std::string> positive_label;
  char delimiter = ',';

  std::vector<std::string> iaas = known_iaas();
  std::vector<LearnerConfig> learners;
  std::size_t grid_n = 6;
  std::size_t folds = 5;
  GaussianParams gaussian;
  IpipConfig ipip;
  int smote_k = 5;
  int n_bags = 10;

  std::uint64_t master_seed = 0;
  int jobs = 0;  // 0: all logical CPUs
  std::string out_dir;

  ExperimentConfig() {
    LearnerConfig logistic;
    logistic.name = "logistic";
    logistic.spec.kind = LearnerKind::logistic;
    LearnerConfig forest;
    forest.name = "forest";
    forest.spec.kind = LearnerKind::random_forest;
    learners = {std::move(logistic), std::move(forest)};
  }

  void validate() const {
    if (folds < 2) throw Error(Errc::bad_config, "folds must be at least 2");
    if (iaas.empty()) throw Error(Errc::bad_config, "at least one technique required");
    for (const auto& iaa : iaas)
      if (std::find(known_iaas().begin(), known_iaas().end(), iaa) == known_iaas().end())
        throw Error(Errc::bad_config, "unknown technique '" + iaa + "'");
    if (learners.empty()) throw Error(Errc::bad_config, "at least one learner required");
    std::set<std::string> names;
    for (const auto& l : learners)
      if (!names.insert(l.name).second)
        throw Error(Errc::bad_config, "duplicate learner name '" + l.name + "'");
    if (smote_k < 1) throw Error(Errc::bad_config, "smote_k must be at least 1");
    if (n_bags < 1) throw Error(Errc::bad_config, "n_bags must be at least 1");
    if (jobs < 0) throw Error(Errc::bad_config, "jobs must be non-negative");
    gaussian.validate();
    ipip.validate();
    if (grid_n < 6 || grid_n % 2 != 0)
      throw Error(Errc::bad_n, "grid_n must be an even integer >= 6");
  }
};

// ---------------------------------------------------------------------------
// Config JSON

inline void to_json(nlohmann::json& j, const LearnerConfig& lc) {
  j = nlohmann::json{{"name", lc.name}, {"spec", lc.spec}};
  if (!lc.grid.empty()) {
    nlohmann::json axes = nlohmann::json::object();
    for (const auto& [name, values] : lc.grid.axes) axes[name] = values;
    j["grid"] = std::move(axes);
  }
}

inline void from_json(const nlohmann::json& j, LearnerConfig& lc) {
  lc.name = j.at("name").get<std::string>();
  if (j.contains("spec"))
    lc.spec = j.at("spec").get<LearnerSpec>();
  else
    lc.spec.kind = learner_kind_from_name(lc.name);
  lc.grid = {};
  if (j.contains("grid")) {
    if (j.at("grid").is_string() && j.at("grid").get<std::string>() == "default") {
      lc.grid = default_grid(lc.spec.kind);
    } else {
      for (const auto& [axis, values] : j.at("grid").items())
        lc.grid.axes.emplace_back(axis, values.get<std::vector<double>>());
    }
  }
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& cfg) {
  j = nlohmann::json{{"dataset",
                      {{"path", cfg.dataset_path},
                       {"target", cfg.target_column},
                       {"delimiter", std::string(1, cfg.delimiter)}}},
                     {"techniques", cfg.iaas},
                     {"learners", cfg.learners},
                     {"grid_n", cfg.grid_n},
                     {"folds", cfg.folds},
                     {"gaussian", cfg.gaussian},
                     {"ipip", cfg.ipip},
                     {"smote_k", cfg.smote_k},
                     {"n_bags", cfg.n_bags},
                     {"seed", cfg.master_seed}};
  if (cfg.positive_label) j["dataset"]["positive_label"] = *cfg.positive_label;
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& cfg) {
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    cfg.dataset_path = d.value("path", cfg.dataset_path);
    cfg.target_column = d.value("target", cfg.target_column);
    if (d.contains("positive_label"))
      cfg.positive_label = d.at("positive_label").get<std::string>();
    const std::string delim = d.value("delimiter", std::string(1, cfg.delimiter));
    if (delim.size() != 1) throw Error(Errc::bad_config, "delimiter must be one character");
    cfg.delimiter = delim[0];
  }
  if (j.contains("techniques")) cfg.iaas = j.at("techniques").get<std::vector<std::string>>();
  if (j.contains("learners")) cfg.learners = j.at("learners").get<std::vector<LearnerConfig>>();
  cfg.grid_n = j.value("grid_n", cfg.grid_n);
  cfg.folds = j.value("folds", cfg.folds);
  if (j.contains("gaussian")) cfg.gaussian = j.at("gaussian").get<GaussianParams>();
  if (j.contains("ipip")) cfg.ipip = j.at("ipip").get<IpipConfig>();
  cfg.smote_k = j.value("smote_k", cfg.smote_k);
  cfg.n_bags = j.value("n_bags", cfg.n_bags);
  cfg.master_seed = j.value("seed", cfg.master_seed);
  cfg.jobs = j.value("jobs", cfg.jobs);
  cfg.out_dir = j.value("out", cfg.out_dir);
}

// Hash of the canonical config JSON; excludes output location and worker
// count, which cannot affect any result byte.
inline std::string config_hash(const ExperimentConfig& cfg) {
  const nlohmann::json j = cfg;
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Cells

struct CellKey {
  std::size_t variant = 0;
  std::string iaa;
  std::string learner;
  std::size_t fold = 0;

  std::string id() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "v%03zu", variant);
    std::string s = buf;
    std::snprintf(buf, sizeof(buf), "f%02zu", fold);
    return s + "_" + iaa + "_" + learner + "_" + buf;
  }
};

inline std::uint64_t cell_seed(std::uint64_t master, const CellKey& key) {
  std::uint64_t s = derive_seed(master, key.variant);
  s = derive_seed(s, key.iaa);
  s = derive_seed(s, key.learner);
  return derive_seed(s, key.fold);
}

namespace detail {

// Train the cell's technique on the fold's training part and score the test
// part. Hard labels follow each technique's own voting rule.
inline MetricVector run_cell(const SplitPair& fold, const std::string& iaa,
                             const LearnerSpec& learner, const ExperimentConfig& cfg,
                             std::uint64_t seed) {
  const Dataset& test = fold.test;
  ScoredPredictions sp;
  sp.labels = test.labels();
  std::vector<Label> hard;

  LearnerSpec spec = learner;
  spec.seed = derive_seed(seed, "train");
  if (iaa == "none" || iaa == "upsample" || iaa == "downsample" || iaa == "smote") {
    const std::uint64_t iaa_seed = derive_seed(seed, "iaa");
    const Dataset* train_data = &fold.train;
    std::optional<Dataset> resampled;
    if (iaa == "upsample")
      resampled = upsample(fold.train, iaa_seed);
    else if (iaa == "downsample")
      resampled = downsample(fold.train, iaa_seed);
    else if (iaa == "smote")
      resampled = smote(fold.train, cfg.smote_k, 0.0, iaa_seed).data;
    if (resampled) train_data = &*resampled;
    TrainedModel model = train(spec, *train_data);
    sp.scores = model.predict_proba(test);
    hard = hard_labels(sp.scores, sp.threshold);
  } else if (iaa == "under_bagging") {
    BaggedModel model = under_bagging(fold.train, cfg.n_bags, spec, derive_seed(seed, "bags"));
    sp.scores = model.predict_proba(test.matrix());
    hard = model.predict_labels(test.matrix());
  } else if (iaa == "ipip") {
    IpipConfig ipip_cfg = cfg.ipip;
    ipip_cfg.n_threads = 1;  // cells are already parallel
    IpipModel model = train_ipip(fold.train, spec, ipip_cfg, derive_seed(seed, "ipip"));
    IpipPrediction pred = predict_ipip(model, test.matrix());
    sp.scores = std::move(pred.scores);
    hard = std::move(pred.labels);
  } else {
    throw Error(Errc::bad_config, "unknown technique '" + iaa + "'");
  }
  return evaluate_predictions(hard, sp);
}

inline std::size_t fold_train_count(std::size_t n_class, std::size_t k) {
  return n_class - (n_class + k - 1) / k;  // smallest training share over folds
}

}  // namespace detail

struct ExperimentResult {
  double p_d = 0.0;
  std::vector<double> p_min_vector;  // p_d first, then the grid targets
  std::vector<std::string> techniques;
  std::vector<CellKey> cells;
  std::vector<RunRecord> records;  // successful cells, enumeration order
  std::vector<std::pair<std::string, std::string>> errors;  // (cell id, message)
  nlohmann::json manifest;
  std::map<std::string, LearnerSpec> grid_choices;
};

// Arithmetic pre-flight over every variant the grid will create, so a bad
// configuration fails before any training starts.
inline void validate_against_data(const Dataset& d, const ExperimentConfig& cfg) {
  const ClassStats stats = class_stats(d);
  const ProportionGrid grid = proportion_grid(stats.p_min, cfg.grid_n);

  std::vector<std::pair<std::size_t, std::size_t>> variants;  // (n_min, n_maj)
  variants.emplace_back(stats.n_min, stats.n_maj);
  for (double p : grid.targets) {
    if (p > stats.p_min) {
      variants.emplace_back(
          stats.n_min,
          detail::round_count(static_cast<double>(stats.n_min) * (1.0 - p) / p));
    } else {
      variants.emplace_back(
          detail::round_count(static_cast<double>(stats.n_maj) * p / (1.0 - p)),
          stats.n_maj);
    }
  }
  const bool uses_smote = std::find(cfg.iaas.begin(), cfg.iaas.end(), "smote") != cfg.iaas.end();
  const bool uses_ipip = std::find(cfg.iaas.begin(), cfg.iaas.end(), "ipip") != cfg.iaas.end();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto [n_min, n_maj] = variants[v];
    if (n_min < cfg.folds || n_maj < cfg.folds)
      throw Error(Errc::class_too_small, "variant " + std::to_string(v) + " has class counts (" +
                                             std::to_string(n_min) + ", " +
                                             std::to_string(n_maj) + ") below folds=" +
                                             std::to_string(cfg.folds));
    const std::size_t train_min = detail::fold_train_count(n_min, cfg.folds);
    if (uses_smote && train_min < static_cast<std::size_t>(cfg.smote_k) + 1)
      throw Error(Errc::too_few_minority,
                  "variant " + std::to_string(v) + " leaves " + std::to_string(train_min) +
                      " minority rows per training fold; smote needs k+1=" +
                      std::to_string(cfg.smote_k + 1));
    if (uses_ipip && train_min < 2)
      throw Error(Errc::class_too_small,
                  "variant " + std::to_string(v) + " leaves fewer than 2 minority rows per fold");
  }
}

inline ExperimentResult run_experiment(const Dataset& d, const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  validate_against_data(d, cfg);

  const ClassStats stats = class_stats(d);
  const ProportionGrid grid = proportion_grid(stats.p_min, cfg.grid_n);

  ExperimentResult result;
  result.p_d = stats.p_min;
  result.p_min_vector.push_back(stats.p_min);
  result.p_min_vector.insert(result.p_min_vector.end(), grid.targets.begin(),
                             grid.targets.end());
  for (const auto& iaa : cfg.iaas)
    for (const auto& learner : cfg.learners) result.techniques.push_back(iaa + "_" + learner.name);

  const std::string hash = config_hash(cfg);
  fs::path out(cfg.out_dir);
  const bool persist = !cfg.out_dir.empty();
  if (persist) {
    fs::create_directories(out / "cells");
    const fs::path manifest_path = out / "manifest.json";
    if (fs::exists(manifest_path)) {
      const nlohmann::json old = read_json_file(manifest_path.string());
      if (old.value("config_hash", "") != hash)
        throw Error(Errc::bad_config,
                    "output directory holds a run with a different config hash; refusing to mix");
    }
  }

  // Hyperparameter search on the original dataset, once per learner.
  std::vector<LearnerConfig> learners = cfg.learners;
  for (auto& learner : learners) {
    if (learner.grid.empty()) continue;
    GridSearchResult search = grid_search(learner.spec, learner.grid, d, cfg.folds,
                                          derive_seed(cfg.master_seed, "grid_" + learner.name));
    learner.spec = search.best;
    result.grid_choices[learner.name] = search.best;
  }

  // Variants and their fold splits are shared read-only by all cells.
  std::vector<Dataset> variants;
  variants.reserve(result.p_min_vector.size());
  variants.push_back(d);
  for (std::size_t v = 1; v < result.p_min_vector.size(); ++v)
    variants.push_back(resample_to_proportion(
        d, result.p_min_vector[v], derive_seed(derive_seed(cfg.master_seed, "variant"), v)));
  std::vector<std::vector<SplitPair>> folds;
  folds.reserve(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v)
    folds.push_back(stratified_kfold(variants[v], cfg.folds,
                                     derive_seed(derive_seed(cfg.master_seed, "folds"), v)));

  for (std::size_t v = 0; v < variants.size(); ++v)
    for (const auto& iaa : cfg.iaas)
      for (const auto& learner : learners)
        for (std::size_t f = 0; f < cfg.folds; ++f)
          result.cells.push_back({v, iaa, learner.name, f});

  struct CellOutcome {
    std::optional<RunRecord> record;
    std::string error;
  };
  std::vector<CellOutcome> outcomes(result.cells.size());

  auto run_one = [&](std::size_t i) {
    const CellKey& key = result.cells[i];
    const fs::path cell_path = out / "cells" / (key.id() + ".json");
    if (persist && fs::exists(cell_path)) {
      const nlohmann::json j = read_json_file(cell_path.string());
      if (j.contains("record"))
        outcomes[i].record = j.at("record").get<RunRecord>();
      else
        outcomes[i].error = j.value("error", "unknown recorded failure");
      return;
    }
    const LearnerConfig* learner = nullptr;
    for (const auto& l : learners)
      if (l.name == key.learner) learner = &l;
    nlohmann::json cell_json;
    try {
      RunRecord rec;
      rec.variant = key.variant;
      rec.p_target = result.p_min_vector[key.variant];
      rec.technique = key.iaa + "_" + key.learner;
      rec.fold = key.fold;
      rec.metrics = detail::run_cell(folds[key.variant][key.fold], key.iaa, learner->spec, cfg,
                                     cell_seed(cfg.master_seed, key));
      cell_json["record"] = rec;
      outcomes[i].record = std::move(rec);
    } catch (const std::exception& e) {
      outcomes[i].error = e.what();
      cell_json["error"] = outcomes[i].error;
    }
    if (persist) {
      const fs::path tmp = cell_path.string() + ".tmp";
      write_text_file(tmp.string(), cell_json.dump(2) + "\n");
      fs::rename(tmp, cell_path);
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(
      1, cfg.jobs > 0 ? static_cast<std::size_t>(cfg.jobs)
                      : std::thread::hardware_concurrency());
  if (n_workers == 1 || result.cells.size() <= 1) {
    for (std::size_t i = 0; i < result.cells.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(n_workers, result.cells.size()); ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < result.cells.size(); i = next.fetch_add(1))
          run_one(i);
      });
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    if (outcomes[i].record)
      result.records.push_back(std::move(*outcomes[i].record));
    else
      result.errors.emplace_back(result.cells[i].id(), outcomes[i].error);
  }

  nlohmann::json manifest{{"format", "film.manifest"},
                          {"version", 1},
                          {"config", cfg},
                          {"config_hash", hash},
                          {"master_seed", cfg.master_seed}};
  nlohmann::json grid_choices = nlohmann::json::object();
  for (const auto& [name, spec] : result.grid_choices) grid_choices[name] = spec;
  manifest["grid_choices"] = std::move(grid_choices);
  nlohmann::json cell_list = nlohmann::json::array();
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    nlohmann::json c{{"key", result.cells[i].id()},
                     {"seed", cell_seed(cfg.master_seed, result.cells[i])},
                     {"status", outcomes[i].record ? "ok" : "error"}};
    if (!outcomes[i].record) c["error"] = outcomes[i].error;
    cell_list.push_back(std::move(c));
  }
  manifest["cells"] = std::move(cell_list);
  result.manifest = std::move(manifest);
  return result;
}

// ---------------------------------------------------------------------------
// Reports

struct ReportBundle {
  BiasProfile profile;
  UicReport uic;
  AgreementMatrix agreement;
  DiscordanceResult discordance;
  // per technique, correlation of the derived series with p_min
  std::vector<std::optional<double>> r_mean;
  std::vector<std::optional<double>> r_uic;
};

// Per-variant UIC series for one technique: the technique's weights applied to
// its fold-averaged metric values at every proportion.
inline std::vector<double> uic_series(const BiasProfile& profile, const UicReport& uic,
                                      std::size_t t) {
  std::vector<double> series(profile.p_min_vector.size(), 0.0);
  for (std::size_t v = 0; v < series.size(); ++v)
    for (std::size_t m = 0; m < profile.metrics.size(); ++m)
      series[v] += uic.entries[t].weights[m] * profile.mean_value(t, v, m);
  return series;
}

inline ReportBundle build_reports(const std::vector<RunRecord>& records,
                                  std::span<const double> p_min_vector,
                                  std::span<const std::string> techniques,
                                  const GaussianParams& gaussian) {
  ReportBundle bundle;
  const std::vector<Metric> metrics(kAggregatedMetrics.begin(), kAggregatedMetrics.end());
  bundle.profile = bias_profile(records, p_min_vector, techniques, metrics);
  bundle.uic = uic_score(bundle.profile, gaussian);
  bundle.agreement = agreement_matrix(records, metrics, techniques);
  bundle.discordance = discordance_ratio(bundle.agreement);

  for (std::size_t t = 0; t < techniques.size(); ++t) {
    std::vector<double> mean_series(p_min_vector.size(), 0.0);
    for (std::size_t v = 0; v < p_min_vector.size(); ++v) {
      for (std::size_t m = 0; m < metrics.size(); ++m)
        mean_series[v] += bundle.profile.mean_value(t, v, m);
      mean_series[v] /= static_cast<double>(metrics.size());
    }
    bundle.r_mean.push_back(pearson(mean_series, p_min_vector));
    bundle.r_uic.push_back(pearson(uic_series(bundle.profile, bundle.uic, t), p_min_vector));
  }
  return bundle;
}

inline nlohmann::json uic_report_json(const ReportBundle& bundle, const GaussianParams& gaussian) {
  const auto& profile = bundle.profile;
  nlohmann::json techniques = nlohmann::json::object();
  for (std::size_t t = 0; t < profile.techniques.size(); ++t) {
    nlohmann::json weights = nlohmann::json::object(), values = nlohmann::json::object();
    for (std::size_t m = 0; m < profile.metrics.size(); ++m) {
      const auto key = std::string(metric_name(profile.metrics[m]));
      weights[key] = bundle.uic.entries[t].weights[m];
      values[key] = bundle.uic.entries[t].metric_values[m];
    }
    techniques[profile.techniques[t]] = {
        {"weights", std::move(weights)}, {"metrics", std::move(values)},
        {"uic", bundle.uic.entries[t].uic}};
  }
  nlohmann::json distances = nlohmann::json::object();
  std::vector<std::optional<double>> column(profile.techniques.size());
  for (std::size_t m = 0; m < profile.metrics.size(); ++m) {
    for (std::size_t t = 0; t < profile.techniques.size(); ++t)
      column[t] = profile.correlation(t, m);
    distances[std::string(metric_name(profile.metrics[m]))] = bias_distance(column);
  }
  distances["mean"] = bias_distance(bundle.r_mean);
  distances["uic"] = bias_distance(bundle.r_uic);

  nlohmann::json correlations = nlohmann::json::object();
  for (std::size_t t = 0; t < profile.techniques.size(); ++t) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t m = 0; m < profile.metrics.size(); ++m) {
      const auto r = profile.correlation(t, m);
      row[std::string(metric_name(profile.metrics[m]))] = r ? nlohmann::json(*r) : nullptr;
    }
    row["mean"] = bundle.r_mean[t] ? nlohmann::json(*bundle.r_mean[t]) : nullptr;
    row["uic"] = bundle.r_uic[t] ? nlohmann::json(*bundle.r_uic[t]) : nullptr;
    correlations[profile.techniques[t]] = std::move(row);
  }

  return nlohmann::json{{"format", "film.uic_report"},
                        {"version", 1},
                        {"gaussian", gaussian},
                        {"winner", bundle.uic.winner},
                        {"techniques", std::move(techniques)},
                        {"distances", std::move(distances)},
                        {"correlations", std::move(correlations)}};
}

namespace detail {

inline std::string csv_number(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

}  // namespace detail

// Heatmap-ready correlation matrix, one technique per row; the two derived
// columns carry the plain metric average and the weighted sum.
inline std::string bias_profile_csv(const ReportBundle& bundle) {
  const auto& profile = bundle.profile;
  std::string csv = "technique";
  for (Metric m : profile.metrics) csv += "," + std::string(metric_name(m));
  csv += ",mean,uic\n";
  for (std::size_t t = 0; t < profile.techniques.size(); ++t) {
    csv += profile.techniques[t];
    for (std::size_t m = 0; m < profile.metrics.size(); ++m)
      csv += "," + detail::csv_number(profile.correlation(t, m));
    csv += "," + detail::csv_number(bundle.r_mean[t]);
    csv += "," + detail::csv_number(bundle.r_uic[t]) + "\n";
  }
  return csv;
}

inline std::string win_ratios_csv(const AgreementMatrix& matrix) {
  std::string csv = "metric,technique,win_ratio\n";
  for (std::size_t i = 0; i < matrix.metrics.size(); ++i) {
    const auto& diag = matrix.cell(i, i);
    for (const auto& tech : matrix.techniques) {
      const auto it = diag.shares.find(tech);
      csv += std::string(metric_name(matrix.metrics[i])) + "," + tech + "," +
             detail::csv_number(it == diag.shares.end() ? 0.0 : it->second) + "\n";
    }
  }
  return csv;
}

inline nlohmann::json concordance_json(const ReportBundle& bundle) {
  nlohmann::json j = bundle.agreement;
  j["format"] = "film.concordance";
  j["version"] = 1;
  j["discordance"] = {{"ratio", bundle.discordance.ratio},
                      {"ci99", {bundle.discordance.ci_low, bundle.discordance.ci_high}}};
  return j;
}

inline nlohmann::json records_json(const ExperimentResult& result, const GaussianParams& gaussian,
                                   std::size_t folds) {
  return nlohmann::json{{"format", "film.records"}, {"version", 1},
                        {"p_d", result.p_d},       {"p_min_vector", result.p_min_vector},
                        {"techniques", result.techniques}, {"folds", folds},
                        {"gaussian", gaussian},    {"cells", result.records}};
}

// Writes records.json, manifest.json and, when every cell succeeded, the four
// report files. Returns the number of failed cells.
inline std::size_t write_experiment_outputs(const ExperimentResult& result,
                                            const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path out(cfg.out_dir);
  write_text_file((out / "records.json").string(),
                  records_json(result, cfg.gaussian, cfg.folds).dump(2) + "\n");
  write_text_file((out / "manifest.json").string(), result.manifest.dump(2) + "\n");
  if (!result.errors.empty()) return result.errors.size();

  ReportBundle bundle =
      build_reports(result.records, result.p_min_vector, result.techniques, cfg.gaussian);
  write_text_file((out / "uic_report.json").string(),
                  uic_report_json(bundle, cfg.gaussian).dump(2) + "\n");
  write_text_file((out / "bias_profile.csv").string(), bias_profile_csv(bundle));
  write_text_file((out / "concordance.json").string(), concordance_json(bundle).dump(2) + "\n");
  write_text_file((out / "concordance.svg").string(), render_concordance_svg(bundle.agreement));
  write_text_file((out / "win_ratios.csv").string(), win_ratios_csv(bundle.agreement));
  return 0;
}

}  // namespace film
