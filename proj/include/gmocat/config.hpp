#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmocat/cdm.hpp"
#include "gmocat/model.hpp"
#include "gmocat/policy.hpp"
#include "gmocat/rewards.hpp"
#include "gmocat/session.hpp"
#include "gmocat/sim.hpp"

namespace gmocat::config {

/// Fully resolved experiment configuration. Parsed from an INI-style file
/// (one flat [section] per module), with profile defaults below file keys and
/// command-line overrides above them. Unknown sections or keys are rejected.
struct ExperimentConfig {
  // [dataset]
  std::string dataset_source = "synthetic";  // synthetic | files
  std::string records_path;
  std::string question_concepts_path;
  std::string prerequisite_edges_path;  // empty: induce from training logs
  int min_records = 40;
  int synthetic_students = 200;
  int synthetic_questions = 100;
  int synthetic_concepts = 8;
  std::uint64_t synthetic_seed = 1;

  // [split]
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  double candidate_fraction = 0.8;

  // [popularity]
  double popularity_fraction = 0.1;

  // [cdm]
  cdm::TwoPlConfig two_pl;
  cdm::KliConfig kli;

  // [model]
  int embedding_dim = 32;
  double dropout = 0.1;
  double leaky_relu_slope = 0.2;
  bool use_relation_aggregator = true;  // false: GMOCAT-R
  bool scalar_critic = false;           // true: GMOCAT-S

  // [train]
  double gamma = 0.5;
  double clip_epsilon = 0.2;
  double alpha = 1.0;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int ppo_epochs = 2;
  int epochs = 30;
  bool normalize_advantage = false;
  rewards::ScalarizationWeights weights;

  // [session]
  int max_steps = 20;
  std::vector<int> checkpoints{5, 10, 20};

  // [eval]
  std::string selector = "policy";  // policy | random | mfi | kli
  std::string eval_mode = "sample";  // sample | argmax
  std::string checkpoint_path;       // empty: the matching train run directory

  // [run]
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out_dir = "gmocat_out";
  int jobs = 1;
  std::string profile = "desk";  // desk | paper

  /// Loads and validates. `path` may be empty (defaults only); `overrides`
  /// are `section.key=value` entries applied after the file.
  static ExperimentConfig load(const std::string& path,
                               const std::vector<std::string>& overrides = {});

  void validate() const;

  /// Canonical text of the experiment-defining sections (everything except
  /// [eval] and [run]); its hash names run directories.
  std::string canonical_experiment_string() const;
  std::string experiment_hash() const;  // 16 hex chars

  // Assembled module configurations.
  model::ModelConfig model_config(int question_count, int concept_count) const;
  policy::TrainConfig train_config() const;
  session::SessionConfig session_config() const;
  session::TrainLoopConfig train_loop_config(std::uint64_t seed) const;
  sim::WorldConfig world_config() const;
};

}  // namespace gmocat::config
