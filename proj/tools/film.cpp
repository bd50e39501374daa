#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "film/film.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitValidation = 2;

struct CsvFlags {
  std::string path;
  std::string target;
  std::string positive_label;
  std::string delimiter = ",";
};

void add_csv_flags(CLI::App* cmd, CsvFlags& flags, bool need_target) {
  cmd->add_option("--csv", flags.path, "input CSV file")->required();
  auto* target = cmd->add_option("--target", flags.target, "name of the label column");
  if (need_target) target->required();
  cmd->add_option("--positive-label", flags.positive_label,
                  "label value treated as positive (default: the minority class)");
  cmd->add_option("--delimiter", flags.delimiter, "field delimiter (default ',')");
}

film::Dataset load_from_flags(const CsvFlags& flags) {
  if (flags.delimiter.size() != 1)
    throw film::Error(film::Errc::bad_config, "delimiter must be a single character");
  film::LoadOptions opt;
  opt.target_column = flags.target;
  opt.delimiter = flags.delimiter[0];
  if (!flags.positive_label.empty()) opt.positive_label = flags.positive_label;
  return film::load_csv(flags.path, opt);
}

int cmd_ingest(const CsvFlags& flags) {
  film::Dataset d = load_from_flags(flags);
  std::cout << film::dataset_summary(d).dump(2) << "\n";
  return kExitOk;
}

int cmd_experiment(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
                   std::optional<int> jobs_flag, std::optional<std::string> out_flag) {
  film::ExperimentConfig cfg;
  film::from_json(film::read_json_file(config_path), cfg);
  // precedence: config file < FILM_SEED < --seed
  if (const char* env = std::getenv("FILM_SEED")) cfg.master_seed = std::strtoull(env, nullptr, 10);
  if (seed_flag) cfg.master_seed = *seed_flag;
  if (jobs_flag) cfg.jobs = *jobs_flag;
  if (out_flag) cfg.out_dir = *out_flag;
  if (cfg.out_dir.empty())
    throw film::Error(film::Errc::bad_config, "an output directory is required (--out or \"out\")");
  if (cfg.dataset_path.empty() || cfg.target_column.empty())
    throw film::Error(film::Errc::bad_config, "config must name dataset.path and dataset.target");

  film::LoadOptions opt;
  opt.target_column = cfg.target_column;
  opt.positive_label = cfg.positive_label;
  opt.delimiter = cfg.delimiter;
  film::Dataset d = film::load_csv(cfg.dataset_path, opt);

  film::ExperimentResult result = film::run_experiment(d, cfg);
  film::write_experiment_outputs(result, cfg);
  for (const auto& [cell, message] : result.errors)
    std::cerr << "cell " << cell << " failed: " << message << "\n";
  std::cout << "completed " << result.records.size() << "/" << result.cells.size()
            << " cells -> " << cfg.out_dir << "\n";
  return result.errors.empty() ? kExitOk : kExitRunFailure;
}

int cmd_report(const std::string& records_path, const std::string& out_dir,
               std::optional<double> ga, std::optional<double> gb, std::optional<double> gc) {
  const nlohmann::json j = film::read_json_file(records_path);
  if (j.value("format", "") != "film.records")
    throw film::Error(film::Errc::bad_config, "not a film.records document");
  std::vector<film::RunRecord> records;
  for (const auto& cell : j.at("cells")) records.push_back(cell.get<film::RunRecord>());
  const auto p_min_vector = j.at("p_min_vector").get<std::vector<double>>();
  const auto techniques = j.at("techniques").get<std::vector<std::string>>();
  film::GaussianParams gaussian = j.value("gaussian", film::GaussianParams{});
  if (ga) gaussian.a = *ga;
  if (gb) gaussian.b = *gb;
  if (gc) gaussian.c = *gc;
  gaussian.validate();

  std::filesystem::create_directories(out_dir);
  film::ReportBundle bundle = film::build_reports(records, p_min_vector, techniques, gaussian);
  const std::filesystem::path out(out_dir);
  film::write_text_file((out / "uic_report.json").string(),
                        film::uic_report_json(bundle, gaussian).dump(2) + "\n");
  film::write_text_file((out / "bias_profile.csv").string(), film::bias_profile_csv(bundle));
  film::write_text_file((out / "concordance.json").string(),
                        film::concordance_json(bundle).dump(2) + "\n");
  film::write_text_file((out / "concordance.svg").string(),
                        film::render_concordance_svg(bundle.agreement));
  film::write_text_file((out / "win_ratios.csv").string(),
                        film::win_ratios_csv(bundle.agreement));
  std::cout << "reports written to " << out_dir << " (winner: " << bundle.uic.winner << ")\n";
  return kExitOk;
}

struct IpipTrainFlags {
  CsvFlags csv;
  std::string learner = "logistic";
  std::string out;
  std::uint64_t seed = 0;
  int jobs = 1;
  film::IpipConfig cfg;
  int bs_override = 0;
  int be_override = 0;
  std::string selection_metric = "kappa";
};

film::LearnerSpec make_spec(const std::string& learner) {
  film::LearnerSpec spec;
  spec.kind = film::learner_kind_from_name(learner);
  return spec;
}

int cmd_ipip_train(IpipTrainFlags& flags) {
  if (flags.bs_override > 0) flags.cfg.b_s_override = flags.bs_override;
  if (flags.be_override > 0) flags.cfg.b_e_override = flags.be_override;
  auto metric = film::metric_from_name(flags.selection_metric);
  if (!metric)
    throw film::Error(film::Errc::bad_config,
                      "unknown selection metric '" + flags.selection_metric + "'");
  flags.cfg.selection_metric = *metric;
  flags.cfg.n_threads = std::max(1, flags.jobs);

  film::Dataset d = load_from_flags(flags.csv);
  film::IpipModel model = film::train_ipip(d, make_spec(flags.learner), flags.cfg, flags.seed);

  nlohmann::json file{{"format", "film.ipip_file"}, {"version", 1}};
  nlohmann::json schema = nlohmann::json::array();
  for (const auto& col : d.schema()) schema.push_back({{"name", col.name}, {"levels", col.levels}});
  file["schema"] = std::move(schema);
  file["positive_label"] = d.positive_label();
  file["negative_label"] = d.negative_label();
  file["model"] = model.to_json();
  film::write_text_file(flags.out, file.dump(2) + "\n");

  std::size_t n_models = 0;
  for (const auto& e : model.ensembles()) n_models += e.models.size();
  std::cout << "trained " << model.ensembles().size() << " ensembles (" << n_models
            << " models, b_s=" << model.b_s() << ", b_e=" << model.b_e() << ") -> " << flags.out
            << "\n";
  return kExitOk;
}

int cmd_ipip_predict(const std::string& model_path, const CsvFlags& csv,
                     const std::string& out_path) {
  const nlohmann::json file = film::read_json_file(model_path);
  if (file.value("format", "") != "film.ipip_file")
    throw film::Error(film::Errc::bad_config, "not a film.ipip_file document");
  film::IpipModel model = film::IpipModel::from_json(file.at("model"));
  std::vector<film::ColumnSchema> schema;
  for (const auto& col : file.at("schema"))
    schema.push_back({col.at("name").get<std::string>(),
                      col.at("levels").get<std::vector<std::string>>()});
  const std::string positive = file.value("positive_label", "positive");
  const std::string negative = file.value("negative_label", "negative");

  if (csv.delimiter.size() != 1)
    throw film::Error(film::Errc::bad_config, "delimiter must be a single character");
  std::ifstream in(csv.path, std::ios::binary);
  if (!in) throw film::Error(film::Errc::io_error, "cannot open '" + csv.path + "'");
  std::size_t n_rows = 0, dropped = 0;
  std::vector<double> values =
      film::encode_with_schema(in, schema, csv.delimiter[0], n_rows, dropped);
  if (n_rows == 0)
    throw film::Error(film::Errc::empty_after_cleaning, "no usable rows in the input");

  film::MatrixView rows{values.data(), n_rows, model.n_features()};
  film::IpipPrediction pred = film::predict_ipip(model, rows);

  std::ostringstream csv_out;
  csv_out << "row_index,label,ensemble_votes,model_votes_per_ensemble\n";
  for (std::size_t i = 0; i < n_rows; ++i) {
    csv_out << i << "," << (pred.labels[i] == film::Label::positive ? positive : negative) << ","
            << pred.ensemble_votes_positive[i] << ",";
    for (std::size_t e = 0; e < pred.model_votes_positive[i].size(); ++e) {
      if (e) csv_out << ";";
      csv_out << pred.model_votes_positive[i][e];
    }
    csv_out << "\n";
  }
  if (out_path.empty())
    std::cout << csv_out.str();
  else
    film::write_text_file(out_path, csv_out.str());
  if (dropped > 0) std::cerr << dropped << " rows dropped for missing values\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FILM: imbalance-aware evaluation and ensemble toolkit"};
  app.require_subcommand(1);

  CsvFlags ingest_flags;
  auto* ingest = app.add_subcommand("ingest", "load a CSV and print the dataset summary");
  add_csv_flags(ingest, ingest_flags, true);

  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> jobs_flag;
  std::optional<std::string> out_flag;
  auto* experiment = app.add_subcommand("experiment", "run the full evaluation pipeline");
  experiment->add_option("--config", config_path, "experiment config JSON")->required();
  experiment->add_option("--seed", seed_flag, "master seed (overrides config and FILM_SEED)");
  experiment->add_option("--jobs", jobs_flag, "worker count (0: all logical CPUs)");
  experiment->add_option("--out", out_flag, "output directory");

  auto* ipip = app.add_subcommand("ipip", "train or apply an ensemble-of-ensembles model");
  ipip->require_subcommand(1);

  IpipTrainFlags train_flags;
  auto* ipip_train = ipip->add_subcommand("train", "train a model on a CSV");
  add_csv_flags(ipip_train, train_flags.csv, true);
  ipip_train->add_option("--learner", train_flags.learner, "logistic | forest");
  ipip_train->add_option("--out", train_flags.out, "model file to write")->required();
  ipip_train->add_option("--seed", train_flags.seed, "training seed");
  ipip_train->add_option("--jobs", train_flags.jobs, "parallel subset builders");
  ipip_train->add_option("--alpha", train_flags.cfg.alpha, "coverage confidence");
  ipip_train->add_option("--n-min-fraction", train_flags.cfg.n_min_fraction,
                         "minority draw fraction");
  ipip_train->add_option("--p-subset", train_flags.cfg.p_subset, "outer subset proportion");
  ipip_train->add_option("--p-inner", train_flags.cfg.p_inner, "inner resample proportion");
  ipip_train->add_option("--p-holdout", train_flags.cfg.p_holdout, "internal train share");
  ipip_train->add_option("--bs", train_flags.bs_override, "override the subset count");
  ipip_train->add_option("--be", train_flags.be_override, "override the ensemble size cap");
  ipip_train->add_option("--intra-threshold", train_flags.cfg.intra_vote_threshold,
                         "within-ensemble majority share");
  ipip_train->add_option("--inter-threshold", train_flags.cfg.inter_vote_threshold,
                         "across-ensemble majority share");
  ipip_train->add_option("--selection-metric", train_flags.selection_metric,
                         "metric guiding ensemble growth");

  std::string model_path, predict_out;
  CsvFlags predict_flags;
  auto* ipip_predict = ipip->add_subcommand("predict", "predict with a saved model");
  ipip_predict->add_option("--model", model_path, "model file")->required();
  add_csv_flags(ipip_predict, predict_flags, false);
  ipip_predict->add_option("--out", predict_out, "predictions CSV (default: stdout)");

  std::string records_path, report_out;
  std::optional<double> ga, gb, gc;
  auto* report = app.add_subcommand("report", "rebuild reports from a records file");
  report->add_option("--records", records_path, "records.json from an experiment run")->required();
  report->add_option("--out", report_out, "output directory")->required();
  report->add_option("--gaussian-a", ga, "weight curve max height");
  report->add_option("--gaussian-b", gb, "weight curve centre");
  report->add_option("--gaussian-c", gc, "weight curve width");

  try {
    app.parse(argc, argv);
    if (*ingest) return cmd_ingest(ingest_flags);
    if (*experiment) return cmd_experiment(config_path, seed_flag, jobs_flag, out_flag);
    if (*ipip_train) return cmd_ipip_train(train_flags);
    if (*ipip_predict) return cmd_ipip_predict(model_path, predict_flags, predict_out);
    if (*report) return cmd_report(records_path, report_out, ga, gb, gc);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  } catch (const film::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_runtime() ? kExitRunFailure : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailure;
  }
  return kExitValidation;
}
