#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "film/dataset.hpp"
#include "film/error.hpp"
#include "film/metrics.hpp"
#include "film/rng.hpp"

namespace film {

enum class LearnerKind : std::uint8_t { logistic, random_forest };

inline std::string_view learner_kind_name(LearnerKind k) {
  return k == LearnerKind::logistic ? "logistic" : "random_forest";
}

inline LearnerKind learner_kind_from_name(std::string_view name) {
  if (name == "logistic") return LearnerKind::logistic;
  if (name == "random_forest" || name == "forest") return LearnerKind::random_forest;
  throw Error(Errc::bad_config, "unknown learner kind '" + std::string(name) + "'");
}

struct LearnerSpec {
  LearnerKind kind = LearnerKind::logistic;
  // logistic
  int max_iterations = 100;
  double convergence_tolerance = 1e-8;
  double l2_penalty = 0.0;
  // random forest
  int n_trees = 100;
  int max_depth = 16;
  int min_leaf_size = 1;
  int features_per_split = 0;       // 0: ceil(sqrt(p)) at train time
  double bootstrap_fraction = 1.0;  // 0: train every tree on the full sample
  std::uint64_t seed = 0;
};

inline void set_hyperparameter(LearnerSpec& spec, std::string_view name, double value) {
  if (name == "max_iterations")
    spec.max_iterations = static_cast<int>(value);
  else if (name == "convergence_tolerance")
    spec.convergence_tolerance = value;
  else if (name == "l2_penalty")
    spec.l2_penalty = value;
  else if (name == "n_trees")
    spec.n_trees = static_cast<int>(value);
  else if (name == "max_depth")
    spec.max_depth = static_cast<int>(value);
  else if (name == "min_leaf_size")
    spec.min_leaf_size = static_cast<int>(value);
  else if (name == "features_per_split")
    spec.features_per_split = static_cast<int>(value);
  else if (name == "bootstrap_fraction")
    spec.bootstrap_fraction = value;
  else
    throw Error(Errc::bad_config, "unknown hyperparameter '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace detail {

inline constexpr double kScoreClip = 30.0;

inline double sigmoid_clipped(double score) {
  const double s = std::clamp(score, -kScoreClip, kScoreClip);
  return 1.0 / (1.0 + std::exp(-s));
}

// Cholesky solve of A x = b for symmetric positive definite A (row-major,
// dim x dim). Returns false when a pivot collapses.
inline bool cholesky_solve(std::vector<double> a, std::vector<double> b, std::size_t dim,
                           std::vector<double>& x) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < dim; ++i) max_diag = std::max(max_diag, std::abs(a[i * dim + i]));
  for (std::size_t j = 0; j < dim; ++j) {
    double d = a[j * dim + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * dim + k] * a[j * dim + k];
    if (!(d > 1e-12 * std::max(max_diag, 1.0))) return false;
    const double l = std::sqrt(d);
    a[j * dim + j] = l;
    for (std::size_t i = j + 1; i < dim; ++i) {
      double v = a[i * dim + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * dim + k] * a[j * dim + k];
      a[i * dim + j] = v / l;
    }
  }
  for (std::size_t i = 0; i < dim; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= a[i * dim + k] * b[k];
    b[i] = v / a[i * dim + i];
  }
  x.assign(dim, 0.0);
  for (std::size_t i = dim; i-- > 0;) {
    double v = b[i];
    for (std::size_t k = i + 1; k < dim; ++k) v -= a[k * dim + i] * x[k];
    x[i] = v / a[i * dim + i];
  }
  return true;
}

}  // namespace detail

// Mean regularized log-loss and its gradient. `beta` holds the p feature
// coefficients followed by the intercept; the intercept is not penalized.
inline double logistic_loss_and_gradient(MatrixView x, std::span<const Label> y,
                                         std::span<const double> beta, double l2,
                                         std::vector<double>* grad_out) {
  const std::size_t n = x.rows, p = x.cols;
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  if (grad_out) grad_out->assign(p + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    double score = beta[p];
    for (std::size_t j = 0; j < p; ++j) score += beta[j] * row[j];
    const double mu = detail::sigmoid_clipped(score);
    const double yi = (y[i] == Label::positive) ? 1.0 : 0.0;
    loss -= yi * std::log(mu) + (1.0 - yi) * std::log(1.0 - mu);
    if (grad_out) {
      const double resid = (mu - yi) * inv_n;
      for (std::size_t j = 0; j < p; ++j) (*grad_out)[j] += resid * row[j];
      (*grad_out)[p] += resid;
    }
  }
  loss *= inv_n;
  for (std::size_t j = 0; j < p; ++j) {
    loss += 0.5 * l2 * inv_n * beta[j] * beta[j];
    if (grad_out) (*grad_out)[j] += l2 * inv_n * beta[j];
  }
  return loss;
}

struct LogisticState {
  std::vector<double> coefficients;  // one per feature
  double intercept = 0.0;
  int iterations = 0;
  bool gradient_fallback = false;
};

namespace detail {

inline LogisticState fit_logistic(MatrixView x, std::span<const Label> y,
                                  const LearnerSpec& spec) {
  const std::size_t n = x.rows, p = x.cols;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> beta(p + 1, 0.0);
  std::vector<double> grad;
  double loss = logistic_loss_and_gradient(x, y, beta, spec.l2_penalty, &grad);
  if (!std::isfinite(loss)) throw Error(Errc::singular_fit, "initial log-loss is not finite");

  bool fallback = false;
  int iter = 0;
  for (; iter < spec.max_iterations; ++iter) {
    std::vector<double> step;
    bool have_step = false;
    if (!fallback) {
      // Newton direction from the weighted normal equations
      std::vector<double> h((p + 1) * (p + 1), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        auto row = x.row(i);
        double score = beta[p];
        for (std::size_t j = 0; j < p; ++j) score += beta[j] * row[j];
        const double mu = sigmoid_clipped(score);
        const double w = std::max(mu * (1.0 - mu), 1e-10) * inv_n;
        for (std::size_t a = 0; a < p; ++a) {
          for (std::size_t b = a; b < p; ++b) h[a * (p + 1) + b] += w * row[a] * row[b];
          h[a * (p + 1) + p] += w * row[a];
        }
        h[p * (p + 1) + p] += w;
      }
      for (std::size_t a = 0; a < p + 1; ++a)
        for (std::size_t b = 0; b < a; ++b) h[a * (p + 1) + b] = h[b * (p + 1) + a];
      for (std::size_t j = 0; j < p; ++j) h[j * (p + 1) + j] += spec.l2_penalty * inv_n;
      std::vector<double> neg_grad(p + 1);
      for (std::size_t j = 0; j < p + 1; ++j) neg_grad[j] = -grad[j];
      have_step = cholesky_solve(std::move(h), std::move(neg_grad), p + 1, step);
      if (!have_step) fallback = true;
    }
    if (!have_step) {
      step.assign(p + 1, 0.0);
      for (std::size_t j = 0; j < p + 1; ++j) step[j] = -grad[j];
    }

    // Backtracking line search on the step direction
    double t = 1.0;
    if (fallback) {
      double g2 = 0.0;
      for (double g : grad) g2 += g * g;
      t = g2 > 1.0 ? 1.0 / std::sqrt(g2) : 1.0;
    }
    std::vector<double> candidate(p + 1);
    double new_loss = loss;
    bool improved = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t j = 0; j < p + 1; ++j) candidate[j] = beta[j] + t * step[j];
      new_loss = logistic_loss_and_gradient(x, y, candidate, spec.l2_penalty, nullptr);
      if (std::isfinite(new_loss) && new_loss <= loss) {
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) {
      double gnorm = 0.0;
      for (double g : grad) gnorm = std::max(gnorm, std::abs(g));
      if (gnorm > std::sqrt(spec.convergence_tolerance) && iter == 0)
        throw Error(Errc::singular_fit, "no descent step exists from the initial point");
      break;  // converged to numerical precision
    }
    const double delta = loss - new_loss;
    beta = candidate;
    loss = logistic_loss_and_gradient(x, y, beta, spec.l2_penalty, &grad);
    if (delta <= spec.convergence_tolerance * (1.0 + std::abs(loss))) {
      ++iter;
      break;
    }
  }

  LogisticState state;
  state.coefficients.assign(beta.begin(), beta.begin() + static_cast<std::ptrdiff_t>(p));
  state.intercept = beta[p];
  state.iterations = iter;
  state.gradient_fallback = fallback;
  return state;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Random forest

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::uint32_t n_pos = 0;
  std::uint32_t n_neg = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> row) const {
    int at = 0;
    while (nodes[at].feature >= 0)
      at = row[static_cast<std::size_t>(nodes[at].feature)] < nodes[at].threshold
               ? nodes[at].left
               : nodes[at].right;
    const TreeNode& leaf = nodes[at];
    return static_cast<double>(leaf.n_pos) / static_cast<double>(leaf.n_pos + leaf.n_neg);
  }
};

namespace detail {

inline double gini(double pos, double neg) {
  const double n = pos + neg;
  if (n == 0.0) return 0.0;
  const double pp = pos / n, pn = neg / n;
  return 1.0 - pp * pp - pn * pn;
}

struct TreeBuilder {
  MatrixView x;
  std::span<const Label> y;
  const LearnerSpec& spec;
  std::size_t mtry;
  Rng& rng;
  DecisionTree tree;

  int build(std::vector<std::size_t>& rows, std::size_t begin, std::size_t end, int depth) {
    std::uint32_t n_pos = 0, n_neg = 0;
    for (std::size_t i = begin; i < end; ++i)
      (y[rows[i]] == Label::positive ? n_pos : n_neg)++;
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({-1, 0.0, -1, -1, n_pos, n_neg});

    const std::size_t size = end - begin;
    if (depth >= spec.max_depth || n_pos == 0 || n_neg == 0 ||
        size < 2 * static_cast<std::size_t>(spec.min_leaf_size))
      return node_id;

    const std::vector<std::size_t> features = sample_without_replacement(rng, x.cols, mtry);
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    const double parent_impurity = gini(n_pos, n_neg) * static_cast<double>(size);

    std::vector<std::pair<double, Label>> vals(size);
    for (std::size_t f : features) {
      for (std::size_t i = 0; i < size; ++i) {
        const std::size_t r = rows[begin + i];
        vals[i] = {x.row(r)[f], y[r]};
      }
      std::sort(vals.begin(), vals.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double lp = 0, ln = 0;
      for (std::size_t i = 0; i + 1 < size; ++i) {
        (vals[i].second == Label::positive ? lp : ln) += 1.0;
        if (vals[i].first == vals[i + 1].first) continue;
        const double left_n = lp + ln, right_n = static_cast<double>(size) - left_n;
        if (left_n < spec.min_leaf_size || right_n < spec.min_leaf_size) continue;
        const double impurity =
            gini(lp, ln) * left_n + gini(n_pos - lp, n_neg - ln) * right_n;
        const double gain = parent_impurity - impurity;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = vals[i].first + (vals[i + 1].first - vals[i].first) / 2.0;
        }
      }
    }
    if (best_feature < 0) return node_id;

    auto mid_it = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                 rows.begin() + static_cast<std::ptrdiff_t>(end),
                                 [&](std::size_t r) {
                                   return x.row(r)[static_cast<std::size_t>(best_feature)] <
                                          best_threshold;
                                 });
    const std::size_t mid = static_cast<std::size_t>(mid_it - rows.begin());
    tree.nodes[static_cast<std::size_t>(node_id)].feature = best_feature;
    tree.nodes[static_cast<std::size_t>(node_id)].threshold = best_threshold;
    const int left = build(rows, begin, mid, depth + 1);
    tree.nodes[static_cast<std::size_t>(node_id)].left = left;
    const int right = build(rows, mid, end, depth + 1);
    tree.nodes[static_cast<std::size_t>(node_id)].right = right;
    return node_id;
  }
};

inline DecisionTree fit_tree(MatrixView x, std::span<const Label> y, const LearnerSpec& spec,
                             std::size_t mtry, std::uint64_t tree_seed) {
  Rng rng(tree_seed);
  std::vector<std::size_t> rows;
  if (spec.bootstrap_fraction > 0.0) {
    const std::size_t draws = std::max<std::size_t>(
        1, round_count(spec.bootstrap_fraction * static_cast<double>(x.rows)));
    rows = sample_with_replacement(rng, x.rows, draws);
  } else {
    rows.resize(x.rows);
    std::iota(rows.begin(), rows.end(), 0);
  }
  TreeBuilder builder{x, y, spec, mtry, rng, {}};
  builder.build(rows, 0, rows.size(), 0);
  return std::move(builder.tree);
}

}  // namespace detail

struct ForestState {
  std::vector<DecisionTree> trees;
};

// ---------------------------------------------------------------------------
// Unified model

class TrainedModel {
 public:
  TrainedModel(LearnerSpec spec, std::size_t n_features, LogisticState state)
      : spec_(std::move(spec)), n_features_(n_features), state_(std::move(state)) {}
  TrainedModel(LearnerSpec spec, std::size_t n_features, ForestState state)
      : spec_(std::move(spec)), n_features_(n_features), state_(std::move(state)) {}

  const LearnerSpec& spec() const { return spec_; }
  std::size_t n_features() const { return n_features_; }
  bool is_logistic() const { return std::holds_alternative<LogisticState>(state_); }
  const LogisticState& logistic() const { return std::get<LogisticState>(state_); }
  const ForestState& forest() const { return std::get<ForestState>(state_); }

  std::vector<double> predict_proba(MatrixView rows) const {
    if (rows.cols != n_features_)
      throw Error(Errc::width_mismatch, "expected " + std::to_string(n_features_) +
                                            " features, got " + std::to_string(rows.cols));
    std::vector<double> out(rows.rows, 0.0);
    if (is_logistic()) {
      const auto& st = std::get<LogisticState>(state_);
      for (std::size_t i = 0; i < rows.rows; ++i) {
        auto row = rows.row(i);
        double score = st.intercept;
        for (std::size_t j = 0; j < n_features_; ++j) score += st.coefficients[j] * row[j];
        out[i] = detail::sigmoid_clipped(score);
      }
    } else {
      const auto& st = std::get<ForestState>(state_);
      for (std::size_t i = 0; i < rows.rows; ++i) {
        double sum = 0.0;
        for (const auto& tree : st.trees) sum += tree.predict(rows.row(i));
        out[i] = sum / static_cast<double>(st.trees.size());
      }
    }
    return out;
  }

  std::vector<double> predict_proba(const Dataset& d) const { return predict_proba(d.matrix()); }

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);

 private:
  LearnerSpec spec_;
  std::size_t n_features_;
  std::variant<LogisticState, ForestState> state_;
};

inline TrainedModel train(const LearnerSpec& spec, const Dataset& d) {
  std::size_t pos = d.count(Label::positive);
  if (pos == 0 || pos == d.n_rows())
    throw Error(Errc::degenerate_data, "training labels are constant");
  if (spec.kind == LearnerKind::logistic)
    return TrainedModel(spec, d.n_cols(), detail::fit_logistic(d.matrix(), d.labels(), spec));

  if (spec.n_trees < 1) throw Error(Errc::bad_config, "n_trees must be positive");
  std::size_t mtry = spec.features_per_split > 0
                         ? static_cast<std::size_t>(spec.features_per_split)
                         : static_cast<std::size_t>(
                               std::ceil(std::sqrt(static_cast<double>(d.n_cols()))));
  if (mtry > d.n_cols())
    throw Error(Errc::bad_config, "features_per_split exceeds the feature count");
  ForestState state;
  state.trees.reserve(static_cast<std::size_t>(spec.n_trees));
  for (int t = 0; t < spec.n_trees; ++t)
    state.trees.push_back(detail::fit_tree(d.matrix(), d.labels(), spec, mtry,
                                           derive_seed(spec.seed, static_cast<std::uint64_t>(t))));
  return TrainedModel(spec, d.n_cols(), std::move(state));
}

inline std::vector<double> predict_proba(const TrainedModel& m, MatrixView rows) {
  return m.predict_proba(rows);
}

// ---------------------------------------------------------------------------
// Persistence

inline void to_json(nlohmann::json& j, const LearnerSpec& spec) {
  j = nlohmann::json{{"kind", std::string(learner_kind_name(spec.kind))},
                     {"max_iterations", spec.max_iterations},
                     {"convergence_tolerance", spec.convergence_tolerance},
                     {"l2_penalty", spec.l2_penalty},
                     {"n_trees", spec.n_trees},
                     {"max_depth", spec.max_depth},
                     {"min_leaf_size", spec.min_leaf_size},
                     {"features_per_split", spec.features_per_split},
                     {"bootstrap_fraction", spec.bootstrap_fraction},
                     {"seed", spec.seed}};
}

inline void from_json(const nlohmann::json& j, LearnerSpec& spec) {
  spec.kind = learner_kind_from_name(j.at("kind").get<std::string>());
  spec.max_iterations = j.value("max_iterations", spec.max_iterations);
  spec.convergence_tolerance = j.value("convergence_tolerance", spec.convergence_tolerance);
  spec.l2_penalty = j.value("l2_penalty", spec.l2_penalty);
  spec.n_trees = j.value("n_trees", spec.n_trees);
  spec.max_depth = j.value("max_depth", spec.max_depth);
  spec.min_leaf_size = j.value("min_leaf_size", spec.min_leaf_size);
  spec.features_per_split = j.value("features_per_split", spec.features_per_split);
  spec.bootstrap_fraction = j.value("bootstrap_fraction", spec.bootstrap_fraction);
  spec.seed = j.value("seed", spec.seed);
}

inline nlohmann::json TrainedModel::to_json() const {
  nlohmann::json j{{"format", "film.model"}, {"version", 1}};
  j["spec"] = spec_;
  j["n_features"] = n_features_;
  if (is_logistic()) {
    const auto& st = std::get<LogisticState>(state_);
    j["logistic"] = {{"coefficients", st.coefficients},
                     {"intercept", st.intercept},
                     {"iterations", st.iterations},
                     {"gradient_fallback", st.gradient_fallback}};
  } else {
    const auto& st = std::get<ForestState>(state_);
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : st.trees) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const auto& n : tree.nodes)
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.n_pos, n.n_neg});
      trees.push_back(std::move(nodes));
    }
    j["forest"] = {{"trees", std::move(trees)}};
  }
  return j;
}

inline TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "film.model" || j.value("version", 0) != 1)
    throw Error(Errc::bad_config, "not a version-1 film.model document");
  LearnerSpec spec = j.at("spec").get<LearnerSpec>();
  const auto n_features = j.at("n_features").get<std::size_t>();
  if (j.contains("logistic")) {
    const auto& l = j.at("logistic");
    LogisticState st;
    st.coefficients = l.at("coefficients").get<std::vector<double>>();
    st.intercept = l.at("intercept").get<double>();
    st.iterations = l.at("iterations").get<int>();
    st.gradient_fallback = l.at("gradient_fallback").get<bool>();
    return TrainedModel(std::move(spec), n_features, std::move(st));
  }
  ForestState st;
  for (const auto& nodes : j.at("forest").at("trees")) {
    DecisionTree tree;
    for (const auto& n : nodes)
      tree.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                            n.at(3).get<int>(), n.at(4).get<std::uint32_t>(),
                            n.at(5).get<std::uint32_t>()});
    st.trees.push_back(std::move(tree));
  }
  return TrainedModel(std::move(spec), n_features, std::move(st));
}

// ---------------------------------------------------------------------------
// Kappa-driven grid search

struct HyperGrid {
  std::vector<std::pair<std::string, std::vector<double>>> axes;
  bool empty() const { return axes.empty(); }
};

struct GridSearchCell {
  std::vector<std::pair<std::string, double>> params;
  double mean_kappa = 0.0;
};

struct GridSearchResult {
  LearnerSpec best;
  std::vector<GridSearchCell> table;
};

// Evaluates every grid point with stratified k-fold CV and mean Cohen's
// Kappa; ties keep the first point in cross-product order (last axis fastest).
inline GridSearchResult grid_search(const LearnerSpec& base, const HyperGrid& grid,
                                    const Dataset& d, std::size_t k, std::uint64_t seed) {
  if (grid.empty()) throw Error(Errc::bad_config, "hyperparameter grid is empty");
  for (const auto& [name, values] : grid.axes)
    if (values.empty())
      throw Error(Errc::bad_config, "hyperparameter axis '" + name + "' has no candidates");

  const auto folds = stratified_kfold(d, k, derive_seed(seed, "grid_folds"));
  std::size_t n_cells = 1;
  for (const auto& [_, values] : grid.axes) n_cells *= values.size();

  GridSearchResult result;
  result.best = base;
  double best_kappa = -2.0;
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    LearnerSpec spec = base;
    GridSearchCell row;
    std::size_t rem = cell;
    for (std::size_t a = grid.axes.size(); a-- > 0;) {
      const auto& [name, values] = grid.axes[a];
      const double v = values[rem % values.size()];
      rem /= values.size();
      set_hyperparameter(spec, name, v);
      row.params.emplace_back(name, v);
    }
    std::reverse(row.params.begin(), row.params.end());

    double kappa_sum = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      LearnerSpec fold_spec = spec;
      fold_spec.seed = derive_seed(derive_seed(seed, cell), f);
      TrainedModel model = train(fold_spec, folds[f].train);
      auto scores = model.predict_proba(folds[f].test);
      auto cm = confusion(hard_labels(scores, 0.5), folds[f].test.labels());
      kappa_sum += threshold_metrics(cm).get(Metric::kappa);
    }
    row.mean_kappa = kappa_sum / static_cast<double>(folds.size());
    if (row.mean_kappa > best_kappa) {
      best_kappa = row.mean_kappa;
      result.best = spec;
    }
    result.table.push_back(std::move(row));
  }
  return result;
}

}  // namespace film
