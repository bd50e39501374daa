#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "film/concordance.hpp"
#include "film/dataset.hpp"
#include "film/error.hpp"
#include "film/metrics.hpp"
#include "film/records.hpp"
#include "film/uic.hpp"

namespace film {

inline void to_json(nlohmann::json& j, const MetricVector& mv) {
  j = nlohmann::json::object();
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    const Metric m = static_cast<Metric>(i);
    if (mv.has(m))
      j[std::string(kMetricNames[i])] = mv.get(m);
    else
      j[std::string(kMetricNames[i])] = nullptr;
  }
  j["degenerate"] = mv.degenerate_names();
}

inline void from_json(const nlohmann::json& j, MetricVector& mv) {
  mv = MetricVector{};
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    const auto key = std::string(kMetricNames[i]);
    if (j.contains(key) && !j.at(key).is_null())
      mv.set(static_cast<Metric>(i), j.at(key).get<double>());
  }
  if (j.contains("degenerate"))
    for (const auto& name : j.at("degenerate")) {
      auto m = metric_from_name(name.get<std::string>());
      if (m) mv.set_degenerate(*m);
    }
}

inline void to_json(nlohmann::json& j, const RunRecord& rec) {
  j = nlohmann::json{{"variant", rec.variant},
                     {"p_target", rec.p_target},
                     {"technique", rec.technique},
                     {"fold", rec.fold},
                     {"metrics", rec.metrics}};
}

inline void from_json(const nlohmann::json& j, RunRecord& rec) {
  rec.variant = j.at("variant").get<std::size_t>();
  rec.p_target = j.at("p_target").get<double>();
  rec.technique = j.at("technique").get<std::string>();
  rec.fold = j.at("fold").get<std::size_t>();
  rec.metrics = j.at("metrics").get<MetricVector>();
}

inline void to_json(nlohmann::json& j, const GaussianParams& g) {
  j = nlohmann::json{{"a", g.a}, {"b", g.b}, {"c", g.c}};
}

inline void from_json(const nlohmann::json& j, GaussianParams& g) {
  g.a = j.value("a", g.a);
  g.b = j.value("b", g.b);
  g.c = j.value("c", g.c);
}

inline nlohmann::json dataset_summary(const Dataset& d) {
  const ClassStats stats = class_stats(d);
  return nlohmann::json{{"n", d.n_rows()},
                        {"n_min", stats.n_min},
                        {"n_maj", stats.n_maj},
                        {"p_min", stats.p_min},
                        {"ir", stats.ir},
                        {"features", d.feature_names()},
                        {"positive_label", d.positive_label()},
                        {"rows_dropped_missing", d.rows_dropped()}};
}

inline void to_json(nlohmann::json& j, const AgreementMatrix& matrix) {
  j = nlohmann::json::object();
  nlohmann::json metric_names = nlohmann::json::array();
  for (Metric m : matrix.metrics) metric_names.push_back(std::string(metric_name(m)));
  j["metrics"] = std::move(metric_names);
  j["techniques"] = matrix.techniques;
  j["n_experiments"] = matrix.n_experiments;
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t i = 0; i < matrix.metrics.size(); ++i)
    for (std::size_t k = i; k < matrix.metrics.size(); ++k) {
      const auto& cell = matrix.cell(i, k);
      cells.push_back({{"i", i},
                       {"j", k},
                       {"metric_i", std::string(metric_name(matrix.metrics[i]))},
                       {"metric_j", std::string(metric_name(matrix.metrics[k]))},
                       {"agreement", cell.agreement},
                       {"shares", cell.shares}});
    }
  j["cells"] = std::move(cells);
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw Error(Errc::io_error, "failed writing '" + path + "'");
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::io_error, "invalid JSON in '" + path + "': " + e.what());
  }
  return j;
}

}  // namespace film
