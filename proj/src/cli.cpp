#include "gmocat/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmocat/config.hpp"
#include "gmocat/data.hpp"
#include "gmocat/errors.hpp"
#include "gmocat/graphs.hpp"
#include "gmocat/metrics.hpp"
#include "gmocat/model.hpp"
#include "gmocat/session.hpp"
#include "gmocat/sim.hpp"

namespace gmocat::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using config::ExperimentConfig;

namespace {

DatasetBundle load_bundle(const ExperimentConfig& cfg) {
  if (cfg.dataset_source == "synthetic") {
    return sim::generate(cfg.world_config()).bundle;
  }
  data::LoadOptions opts;
  opts.min_records = cfg.min_records;
  return data::load_dataset(cfg.records_path, cfg.question_concepts_path, opts);
}

fs::path run_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out_dir) / "runs" / (cfg.experiment_hash() + "-s" + std::to_string(seed));
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void write_manifest(const fs::path& dir, const ExperimentConfig& cfg, std::uint64_t seed,
                    const std::string& command, const std::vector<std::string>& artifacts) {
  json j;
  j["schema_version"] = 1;
  j["command"] = command;
  j["config_hash"] = cfg.experiment_hash();
  j["seed"] = seed;
  j["seeds"] = cfg.seeds;
  json files = json::array();
  for (const std::string& a : artifacts) {
    if (!fs::exists(dir / a)) {
      throw DataError("manifest artifact missing: " + (dir / a).string());
    }
    files.push_back(a);
  }
  j["artifacts"] = files;
  j["timestamp"] = timestamp_utc();
  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << "\n";
}

struct SeedPipeline {
  DatasetBundle bundle;
  data::StudentPartition partition;
  graphs::CorrelationGraph correlation;
  graphs::PrerequisiteGraph prerequisite;
  bool prerequisite_shipped = false;
  PopularSet popular;
};

std::vector<StudentLog> collect_logs(const DatasetBundle& bundle, std::span<const int> idx) {
  std::vector<StudentLog> logs;
  logs.reserve(idx.size());
  for (int i : idx) logs.push_back(bundle.logs[i]);
  return logs;
}

SeedPipeline build_pipeline(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedPipeline p;
  p.bundle = load_bundle(cfg);
  p.partition = data::split_students(p.bundle, {cfg.train_ratio, cfg.val_ratio, cfg.test_ratio},
                                     seed);
  p.correlation =
      graphs::build_correlation_graph(p.bundle.question_concepts, p.bundle.concept_count);

  const std::vector<StudentLog> train_logs = collect_logs(p.bundle, p.partition.train);
  if (!cfg.prerequisite_edges_path.empty()) {
    const auto edges = data::load_prerequisite_edges(cfg.prerequisite_edges_path, p.bundle);
    p.prerequisite = graphs::prerequisite_from_edges(edges, p.bundle.concept_count);
    p.prerequisite_shipped = true;
  } else {
    const Eigen::MatrixXd counts =
        graphs::count_transitions(train_logs, p.bundle.concept_count);
    const graphs::InductionMatrices matrices = graphs::induction_matrices(counts);
    if (matrices.degenerate) {
      std::cerr << "warning: degenerate induction normalization; prerequisite graph is empty\n";
    }
    p.prerequisite = graphs::induce_prerequisite_graph(matrices);
  }
  p.popular =
      data::compute_popular_set(train_logs, cfg.popularity_fraction, p.bundle.question_count);
  return p;
}

int cmd_ingest(const ExperimentConfig& cfg) {
  const DatasetBundle bundle = load_bundle(cfg);
  std::size_t records = 0;
  std::size_t correct = 0;
  for (const StudentLog& log : bundle.logs) {
    records += log.records.size();
    for (const ResponseRecord& r : log.records) correct += static_cast<std::size_t>(r.correct);
  }
  double concepts_per_question = 0.0;
  for (const auto& cs : bundle.question_concepts) {
    concepts_per_question += static_cast<double>(cs.size());
  }
  if (bundle.question_count > 0) concepts_per_question /= bundle.question_count;

  json j;
  j["students"] = bundle.logs.size();
  j["questions"] = bundle.question_count;
  j["concepts"] = bundle.concept_count;
  j["records"] = records;
  j["concepts_per_question"] = concepts_per_question;
  j["positive_label_rate"] = records > 0 ? static_cast<double>(correct) / records : 0.0;
  j["min_records"] = cfg.min_records;

  fs::create_directories(cfg.out_dir);
  std::ofstream out(fs::path(cfg.out_dir) / "ingest_summary.json");
  out << j.dump(2) << "\n";
  std::cout << j.dump(2) << std::endl;
  return kExitOk;
}

int cmd_induce_graph(const ExperimentConfig& cfg) {
  for (std::uint64_t seed : cfg.seeds) {
    const SeedPipeline p = build_pipeline(cfg, seed);
    const fs::path dir = run_dir(cfg, seed);
    fs::create_directories(dir);
    graphs::export_edges((dir / "edges.csv").string(), &p.correlation, &p.prerequisite);

    std::size_t correlation_edges = 0;
    for (const auto& nb : p.correlation.question_neighbors) correlation_edges += nb.size();
    std::cout << "seed " << seed << ": " << correlation_edges << " correlation edges, "
              << p.prerequisite.edges.size() << " prerequisite edges"
              << (p.prerequisite_shipped ? " (shipped)" : " (induced)") << " -> "
              << (dir / "edges.csv").string() << std::endl;
    write_manifest(dir, cfg, seed, "induce-graph", {"edges.csv"});
  }
  return kExitOk;
}

int cmd_calibrate(const ExperimentConfig& cfg) {
  for (std::uint64_t seed : cfg.seeds) {
    const SeedPipeline p = build_pipeline(cfg, seed);
    const std::vector<StudentLog> train_logs = collect_logs(p.bundle, p.partition.train);
    const cdm::CalibrationResult result =
        cdm::calibrate(train_logs, p.bundle.question_count, cfg.two_pl);

    const fs::path dir = run_dir(cfg, seed);
    fs::create_directories(dir);
    cdm::save_item_params((dir / "items.csv").string(), result.items);
    std::cout << "seed " << seed << ": calibrated " << p.bundle.question_count << " items";
    if (!result.unanswered.empty()) {
      std::cout << " (" << result.unanswered.size() << " unanswered, defaulted to a=1,b=0)";
    }
    std::cout << " -> " << (dir / "items.csv").string() << std::endl;
    write_manifest(dir, cfg, seed, "calibrate", {"items.csv"});
  }
  return kExitOk;
}

void write_curves(const fs::path& path, const session::TrainResult& result) {
  std::ofstream out(path);
  out << "epoch,mean_return,val_auc,val_acc,actor_loss,critic_loss\n";
  char buf[200];
  for (const session::EpochStats& s : result.curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g", s.epoch, s.mean_return,
                  s.val_auc, s.val_acc, s.actor_loss, s.critic_loss);
    out << buf << "\n";
  }
}

int cmd_train(const ExperimentConfig& cfg) {
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = run_dir(cfg, seed);
    const fs::path items_path = dir / "items.csv";
    if (!fs::exists(items_path)) {
      throw DataError("calibration artifact missing: " + items_path.string() +
                      " (run `gmocat calibrate` first)");
    }
    const SeedPipeline p = build_pipeline(cfg, seed);
    const cdm::TwoPlModel cdm_model(
        cdm::load_item_params(items_path.string(), p.bundle.question_count), cfg.two_pl);

    model::GmocatModel m = model::GmocatModel::init(
        cfg.model_config(p.bundle.question_count, p.bundle.concept_count), seed);
    model::AdamState adam(m);

    session::TrainResult result;
    try {
      result = session::train_loop(p.bundle, p.partition.train, p.partition.val, m, adam,
                                   cdm_model, p.correlation, p.prerequisite, p.popular,
                                   cfg.train_loop_config(seed));
    } catch (const TrainingDivergence& e) {
      fs::create_directories(dir);
      std::ofstream diag(dir / "divergence.txt");
      diag << e.what() << "\n";
      throw;
    }

    fs::create_directories(dir);
    m.save((dir / "checkpoint.txt").string());
    write_curves(dir / "curves.csv", result);
    write_manifest(dir, cfg, seed, "train", {"checkpoint.txt", "curves.csv", "items.csv"});
    std::cout << "seed " << seed << ": trained " << cfg.epochs << " epochs, best epoch "
              << result.best_epoch << " -> " << (dir / "checkpoint.txt").string() << std::endl;
  }
  return kExitOk;
}

int cmd_evaluate(const ExperimentConfig& cfg) {
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = run_dir(cfg, seed);
    const fs::path items_path = dir / "items.csv";
    if (!fs::exists(items_path)) {
      throw DataError("calibration artifact missing: " + items_path.string() +
                      " (run `gmocat calibrate` first)");
    }
    const SeedPipeline p = build_pipeline(cfg, seed);
    const cdm::TwoPlModel cdm_model(
        cdm::load_item_params(items_path.string(), p.bundle.question_count), cfg.two_pl);

    std::unique_ptr<session::Selector> selector;
    std::unique_ptr<model::GmocatModel> m;  // must outlive the selector
    if (cfg.selector == "policy") {
      fs::path checkpoint = cfg.checkpoint_path.empty() ? dir / "checkpoint.txt"
                                                        : fs::path(cfg.checkpoint_path);
      if (!fs::exists(checkpoint)) {
        throw DataError("checkpoint missing: " + checkpoint.string() +
                        " (run `gmocat train` first)");
      }
      m = std::make_unique<model::GmocatModel>(model::GmocatModel::load(
          checkpoint.string(),
          cfg.model_config(p.bundle.question_count, p.bundle.concept_count)));
      selector = std::make_unique<session::PolicySelector>(
          *m, p.correlation, p.prerequisite,
          cfg.eval_mode == "argmax" ? policy::ActionMode::kArgmax : policy::ActionMode::kSample);
    } else if (cfg.selector == "random") {
      selector = std::make_unique<session::RandomSelector>();
    } else if (cfg.selector == "mfi") {
      selector = std::make_unique<session::MfiSelector>(cdm_model);
    } else {
      selector = std::make_unique<session::KliSelector>(cdm_model, cfg.kli);
    }

    session::EvaluateOptions opts;
    opts.session = cfg.session_config();
    opts.candidate_fraction = cfg.candidate_fraction;
    opts.seed = seed;
    opts.jobs = cfg.jobs;
    session::EvaluationResult result =
        session::evaluate(p.bundle, p.partition.test, *selector, cdm_model, p.popular, opts);
    result.report.config_hash = cfg.experiment_hash();

    fs::create_directories(dir);
    const std::string report_name = "report_" + cfg.selector + ".json";
    const std::string traces_name = "traces_" + cfg.selector + ".csv";
    metrics::save_report((dir / report_name).string(), result.report);
    session::write_session_traces((dir / traces_name).string(), result.sessions);
    write_manifest(dir, cfg, seed, "evaluate", {report_name, traces_name});

    std::cout << "seed " << seed << " " << cfg.selector;
    for (std::size_t c = 0; c < result.report.checkpoint_steps.size(); ++c) {
      std::cout << " auc@" << result.report.checkpoint_steps[c] << "="
                << result.report.auc[c];
    }
    std::cout << " cov@" << cfg.max_steps << "=" << result.report.cov_curve.back()
              << " overlap=" << result.report.overlap << std::endl;
  }
  return kExitOk;
}

int cmd_report(const ExperimentConfig& cfg) {
  std::vector<metrics::MetricReport> reports;
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path path = run_dir(cfg, seed) / ("report_" + cfg.selector + ".json");
    if (!fs::exists(path)) {
      throw DataError("missing report: " + path.string() + " (run `gmocat evaluate` first)");
    }
    reports.push_back(metrics::load_report(path.string()));
  }
  const std::string aggregate = metrics::aggregate_reports_json(reports);
  const fs::path out_path = fs::path(cfg.out_dir) /
                            ("report_aggregate_" + cfg.selector + "_" + cfg.experiment_hash() +
                             ".json");
  fs::create_directories(cfg.out_dir);
  std::ofstream out(out_path);
  out << aggregate << "\n";
  std::cout << aggregate << std::endl;
  return kExitOk;
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "Experiment config file (INI sections)");
  cmd->add_option("--set", args.overrides,
                  "Override a config key: section.key=value (repeatable, wins over the file)");
  // Convenience flags that mirror frequently used config keys.
  cmd->add_option_function<std::string>(
      "--seed", [&args](const std::string& v) { args.overrides.push_back("run.seeds=" + v); },
      "Run seed(s), comma separated (mirrors run.seeds)");
  cmd->add_option_function<std::string>(
      "--out", [&args](const std::string& v) { args.overrides.push_back("run.out_dir=" + v); },
      "Output root directory (mirrors run.out_dir)");
  cmd->add_option_function<std::string>(
      "--jobs", [&args](const std::string& v) { args.overrides.push_back("run.jobs=" + v); },
      "Concurrent rollout cap (mirrors run.jobs)");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"gmocat: multi-objective computerized adaptive testing engine"};
  app.require_subcommand(1);

  CommonArgs ingest_args, induce_args, calibrate_args, train_args, evaluate_args, report_args;

  CLI::App* ingest = app.add_subcommand("ingest", "Load the dataset and report its statistics");
  add_common(ingest, ingest_args);

  CLI::App* induce =
      app.add_subcommand("induce-graph", "Build relation graphs and export the edge list");
  add_common(induce, induce_args);

  CLI::App* calibrate =
      app.add_subcommand("calibrate", "Calibrate 2PL item parameters on the training split");
  add_common(calibrate, calibrate_args);

  CLI::App* train = app.add_subcommand("train", "Train the policy with MOPPO");
  add_common(train, train_args);
  train->add_option_function<std::string>(
      "--epochs",
      [&train_args](const std::string& v) { train_args.overrides.push_back("train.epochs=" + v); },
      "Training epochs (mirrors train.epochs)");
  train->add_option_function<std::string>(
      "--w", [&train_args](const std::string& v) { train_args.overrides.push_back("train.w=" + v); },
      "Scalarization weights, e.g. 1,1,0 (mirrors train.w)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate a selector on the test students");
  add_common(evaluate, evaluate_args);
  evaluate->add_option_function<std::string>(
      "--selector",
      [&evaluate_args](const std::string& v) {
        evaluate_args.overrides.push_back("eval.selector=" + v);
      },
      "policy | random | mfi | kli (mirrors eval.selector)");
  evaluate->add_option_function<std::string>(
      "--checkpoint",
      [&evaluate_args](const std::string& v) {
        evaluate_args.overrides.push_back("eval.checkpoint=" + v);
      },
      "Checkpoint path (mirrors eval.checkpoint)");

  CLI::App* report = app.add_subcommand("report", "Aggregate per-seed evaluation reports");
  add_common(report, report_args);
  report->add_option_function<std::string>(
      "--selector",
      [&report_args](const std::string& v) {
        report_args.overrides.push_back("eval.selector=" + v);
      },
      "Selector whose reports to aggregate (mirrors eval.selector)");

  std::vector<std::string> argv_storage;
  argv_storage.push_back("gmocat");
  for (const std::string& a : args) argv_storage.push_back(a);
  std::vector<const char*> argv;
  for (const std::string& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  try {
    if (ingest->parsed()) {
      return cmd_ingest(ExperimentConfig::load(ingest_args.config_path, ingest_args.overrides));
    }
    if (induce->parsed()) {
      return cmd_induce_graph(
          ExperimentConfig::load(induce_args.config_path, induce_args.overrides));
    }
    if (calibrate->parsed()) {
      return cmd_calibrate(
          ExperimentConfig::load(calibrate_args.config_path, calibrate_args.overrides));
    }
    if (train->parsed()) {
      return cmd_train(ExperimentConfig::load(train_args.config_path, train_args.overrides));
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(
          ExperimentConfig::load(evaluate_args.config_path, evaluate_args.overrides));
    }
    if (report->parsed()) {
      return cmd_report(ExperimentConfig::load(report_args.config_path, report_args.overrides));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return kExitDataError;
  } catch (const TrainingDivergence& e) {
    std::cerr << "training diverged: " << e.what() << std::endl;
    return kExitTrainingDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return kExitConfigError;
}

}  // namespace gmocat::cli
