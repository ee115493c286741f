#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gmocat/cdm.hpp"
#include "gmocat/graphs.hpp"
#include "gmocat/metrics.hpp"
#include "gmocat/model.hpp"
#include "gmocat/policy.hpp"
#include "gmocat/prng.hpp"
#include "gmocat/rewards.hpp"
#include "gmocat/types.hpp"

namespace gmocat::session {

struct SessionConfig {
  int max_steps = 20;
  std::vector<int> checkpoints{5, 10, 20};

  void validate() const;
};

/// Everything a selector may look at when choosing the next question.
struct EpisodeContext {
  std::span<const ResponseRecord> history;
  const cdm::AbilityEstimate& ability;
  const std::vector<std::uint8_t>& mask;  // allowed questions
  int step = 1;                           // 1-based
  prng::Engine& rng;
};

/// Filled by the policy selector so the runner can assemble a training trace.
struct SelectionExtras {
  bool has = false;
  double log_prob = 0.0;
  policy::RowVec state;
};

class Selector {
 public:
  virtual ~Selector() = default;
  virtual std::string name() const = 0;
  /// Must return a question allowed by ctx.mask.
  virtual QuestionId select(const EpisodeContext& ctx, SelectionExtras* extras) = 0;
};

class RandomSelector : public Selector {
 public:
  std::string name() const override { return "random"; }
  QuestionId select(const EpisodeContext& ctx, SelectionExtras* extras) override;
};

class MfiSelector : public Selector {
 public:
  explicit MfiSelector(const cdm::CognitiveModel& model);
  std::string name() const override { return "mfi"; }
  QuestionId select(const EpisodeContext& ctx, SelectionExtras* extras) override;

 private:
  const cdm::TwoPlModel* irt_;
};

class KliSelector : public Selector {
 public:
  KliSelector(const cdm::CognitiveModel& model, cdm::KliConfig cfg = {});
  std::string name() const override { return "kli"; }
  QuestionId select(const EpisodeContext& ctx, SelectionExtras* extras) override;

 private:
  const cdm::TwoPlModel* irt_;
  cdm::KliConfig cfg_;
};

/// Frozen-parameter policy inference: relation-aware (or raw) tables are
/// computed once at construction, record rows are memoized per
/// (question, correctness).
class PolicySelector : public Selector {
 public:
  PolicySelector(const model::GmocatModel& m, const graphs::CorrelationGraph& correlation,
                 const graphs::PrerequisiteGraph& prerequisite, policy::ActionMode mode);
  std::string name() const override { return "policy"; }
  QuestionId select(const EpisodeContext& ctx, SelectionExtras* extras) override;

 private:
  const model::GmocatModel* model_;
  Eigen::MatrixXd question_table_;
  Eigen::MatrixXd concept_table_;
  policy::ActionMode mode_;
  std::unordered_map<std::uint64_t, policy::RowVec> row_cache_;
};

/// Record of one CAT episode: what was asked, how the ability estimate moved,
/// and the per-step reward vectors.
struct CatSession {
  StudentId student = -1;
  std::vector<QuestionId> chosen;
  std::vector<std::vector<ConceptId>> chosen_concepts;
  std::vector<int> correct;                 // revealed logged responses
  std::vector<double> theta_trajectory;     // theta_0 .. theta_n
  std::vector<cdm::MetaEvaluation> evals;   // per step
  std::vector<rewards::RewardVector> rewards;

  int steps() const { return static_cast<int>(chosen.size()); }
};

struct EpisodeOptions {
  SessionConfig session;
  rewards::ScalarizationWeights weights;  // collapse weights in scalar-reward mode
  bool scalar_reward = false;             // store w^T r instead of the vector
};

struct EpisodeResult {
  CatSession session;
  std::optional<policy::EpisodeTrace> trace;  // present when the selector reports extras
};

/// Replays one student: select from the candidate set, reveal the logged
/// response, update the ability estimate, evaluate the meta set, emit the
/// reward vector, and mask the chosen question. Runs for
/// min(max_steps, |candidates|) steps.
EpisodeResult run_episode(const StudentLog& log, const StudentSplit& split, Selector& selector,
                          const cdm::CognitiveModel& model, const PopularSet& popular,
                          const EpisodeOptions& opts, std::uint64_t episode_seed);

struct TrainLoopConfig {
  policy::TrainConfig train;
  SessionConfig session;
  rewards::ScalarizationWeights weights;  // three-entry weights
  bool scalar_reward = false;             // GMOCAT-S
  int epochs = 30;
  double candidate_fraction = 0.8;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct EpochStats {
  int epoch = 0;
  double mean_return = 0.0;  // mean episodic w^T return on the collected rollouts
  double val_auc = 0.0;
  double val_acc = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> curve;
  int best_epoch = -1;  // by validation AUC; model is left at this epoch's parameters
};

/// Fresh candidate/meta splits every epoch, batched rollouts against frozen
/// parameters, one MOPPO update per batch, validation metrics per epoch.
/// The model ends at the best-validation-AUC parameters.
TrainResult train_loop(const DatasetBundle& bundle, std::span<const int> train_students,
                       std::span<const int> val_students, model::GmocatModel& m,
                       model::AdamState& adam, const cdm::CognitiveModel& cdm_model,
                       const graphs::CorrelationGraph& correlation,
                       const graphs::PrerequisiteGraph& prerequisite, const PopularSet& popular,
                       const TrainLoopConfig& cfg);

struct EvaluateOptions {
  SessionConfig session;
  double candidate_fraction = 0.8;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct EvaluationResult {
  metrics::MetricReport report;
  std::vector<CatSession> sessions;
};

/// Fixed candidate/meta split per (student, seed); selector parameters are
/// never mutated. Reports AUC/ACC at the configured checkpoints, the coverage
/// curve, exposure rates and mean overlap at the final step.
EvaluationResult evaluate(const DatasetBundle& bundle, std::span<const int> students,
                          Selector& selector, const cdm::CognitiveModel& cdm_model,
                          const PopularSet& popular, const EvaluateOptions& opts);

/// One CSV row per step: student_id,step,question_id,correct,r_qua,r_div,r_nov,acc_meta.
void write_session_traces(const std::string& path, std::span<const CatSession> sessions);
std::vector<CatSession> read_session_traces(const std::string& path);

}  // namespace gmocat::session
