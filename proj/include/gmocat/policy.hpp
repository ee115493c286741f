#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gmocat/autodiff.hpp"
#include "gmocat/encoder.hpp"
#include "gmocat/graphs.hpp"
#include "gmocat/model.hpp"
#include "gmocat/prng.hpp"
#include "gmocat/types.hpp"

namespace gmocat::policy {

using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;
using Vec = Eigen::VectorXd;

enum class ActionMode { kSample, kArgmax };

struct TrainConfig {
  double gamma = 0.5;
  double clip_epsilon = 0.2;
  double alpha = 1.0;  // critic-loss trade-off
  model::AdamConfig adam;
  int batch_size = 32;
  int ppo_epochs = 2;
  Vec w;  // scalarization weights; width must match the critic
  bool normalize_advantage = false;

  void validate(int objective_count) const;
};

/// One acted step of a policy episode: the revealed record, the behavior
/// log-probability, the reward vector, the candidate mask at decision time,
/// and the rollout state (for advantage computation at update time).
struct StepRecord {
  ResponseRecord revealed;
  double log_prob_old = 0.0;
  Vec reward;
  std::vector<std::uint8_t> mask;
  RowVec state;
};

struct EpisodeTrace {
  StudentId student = -1;
  std::vector<StepRecord> steps;
};

struct ActionSample {
  QuestionId question = -1;
  double log_prob = 0.0;
};

RowVec actor_logits_plain(const model::GmocatModel& m, const RowVec& state);
Vec critic_value_plain(const model::GmocatModel& m, const RowVec& state);

/// Masked softmax over logits; disallowed questions get probability exactly 0.
std::vector<double> masked_probs(const RowVec& logits,
                                 const std::vector<std::uint8_t>& mask);

/// Samples (or argmaxes) a question from the masked policy. Returns nullopt
/// when the mask is empty, which callers treat as episode termination.
std::optional<ActionSample> act(const model::GmocatModel& m, const RowVec& state,
                                const std::vector<std::uint8_t>& mask, ActionMode mode,
                                prng::Engine& rng);

/// G_t = sum_{t' >= t} gamma^(t'-t) r_t', elementwise; one row per step.
Mat discounted_returns(const EpisodeTrace& trace, double gamma);

// The loss formulas on plain numbers (also used by tests as the contract).
double surrogate_term(double ratio, double scalarized_advantage, double eps);
double actor_loss_value(std::span<const double> ratios,
                        std::span<const double> scalarized_advantages, double eps);
double critic_loss_value(const Mat& values, const Mat& returns, const Vec& w);

/// Per-batch constants for the PPO epochs: returns and advantages are
/// computed once from the stored rollout states and the critic at entry,
/// then held fixed (the surrogate treats them as constants).
struct FrozenBatch {
  std::vector<Mat> returns;                              // per trace: steps x m
  std::vector<std::vector<double>> scalarized_advantage;  // w^T (G - V)
  int total_steps = 0;
};
FrozenBatch freeze_batch(const model::GmocatModel& m, std::span<const EpisodeTrace> traces,
                         const TrainConfig& cfg);

struct LossVars {
  model::Binding binding;
  ad::Var actor_loss;
  ad::Var critic_loss;
  ad::Var total_loss;
};

/// Builds L = L1 + alpha * L2 on `tape`, recomputing every state through the
/// relation aggregator (or raw tables) and the encoder so gradients reach all
/// parameter tensors. `dropout` may be null (eval-mode forward).
LossVars build_loss(ad::Tape& tape, const model::GmocatModel& m,
                    const graphs::CorrelationGraph& correlation,
                    const graphs::PrerequisiteGraph& prerequisite,
                    std::span<const EpisodeTrace> traces, const FrozenBatch& frozen,
                    const TrainConfig& cfg, encoder::DropoutContext* dropout);

/// Loss value with dropout off; the finite-difference checks differentiate
/// exactly this function.
double loss_value(const model::GmocatModel& m, const graphs::CorrelationGraph& correlation,
                  const graphs::PrerequisiteGraph& prerequisite,
                  std::span<const EpisodeTrace> traces, const FrozenBatch& frozen,
                  const TrainConfig& cfg);

/// Loss and gradients (params() order) with dropout off.
std::pair<double, std::vector<Mat>> loss_and_gradients(
    const model::GmocatModel& m, const graphs::CorrelationGraph& correlation,
    const graphs::PrerequisiteGraph& prerequisite, std::span<const EpisodeTrace> traces,
    const FrozenBatch& frozen, const TrainConfig& cfg);

struct TrainStepReport {
  std::vector<double> actor_loss;   // per PPO epoch
  std::vector<double> critic_loss;
  std::vector<double> total_loss;
};

/// One MOPPO update: freezes advantages, then runs cfg.ppo_epochs epochs of
/// build_loss + backward + one Adam step each (whole batch per epoch).
/// Throws TrainingDivergence on a non-finite loss.
TrainStepReport train_step(model::GmocatModel& m, model::AdamState& adam,
                           const graphs::CorrelationGraph& correlation,
                           const graphs::PrerequisiteGraph& prerequisite,
                           std::span<const EpisodeTrace> traces, const TrainConfig& cfg,
                           std::uint64_t dropout_seed);

}  // namespace gmocat::policy
