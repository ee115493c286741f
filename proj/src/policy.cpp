#include "gmocat/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "gmocat/errors.hpp"
#include "gmocat/relagg.hpp"

namespace gmocat::policy {

void TrainConfig::validate(int objective_count) const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1]");
  if (!(clip_epsilon > 0.0)) throw ConfigError("clip epsilon must be positive");
  if (!(alpha > 0.0)) throw ConfigError("loss trade-off alpha must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (ppo_epochs < 1) throw ConfigError("ppo epochs must be >= 1");
  if (w.size() != objective_count) {
    throw ConfigError("scalarization width " + std::to_string(w.size()) +
                      " does not match objective count " + std::to_string(objective_count));
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) < 0) throw ConfigError("scalarization weights must be non-negative");
    total += w(i);
  }
  if (total == 0.0) throw ConfigError("at least one scalarization weight must be nonzero");
}

RowVec actor_logits_plain(const model::GmocatModel& m, const RowVec& state) {
  return state * m.actor_w + m.actor_b.row(0);
}

Vec critic_value_plain(const model::GmocatModel& m, const RowVec& state) {
  return (state * m.critic_w + m.critic_b.row(0)).transpose();
}

std::vector<double> masked_probs(const RowVec& logits,
                                 const std::vector<std::uint8_t>& mask) {
  if (static_cast<std::size_t>(logits.cols()) != mask.size()) {
    throw ContractViolation("masked_probs: logits and mask differ in length");
  }
  double max_allowed = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (mask[j]) max_allowed = std::max(max_allowed, logits(static_cast<Eigen::Index>(j)));
  }
  std::vector<double> probs(mask.size(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (!mask[j]) continue;  // masked questions keep probability exactly 0
    probs[j] = std::exp(logits(static_cast<Eigen::Index>(j)) - max_allowed);
    total += probs[j];
  }
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (mask[j]) probs[j] /= total;
  }
  return probs;
}

std::optional<ActionSample> act(const model::GmocatModel& m, const RowVec& state,
                                const std::vector<std::uint8_t>& mask, ActionMode mode,
                                prng::Engine& rng) {
  bool any = false;
  for (std::uint8_t allowed : mask) {
    if (allowed) {
      any = true;
      break;
    }
  }
  if (!any) return std::nullopt;

  const RowVec logits = actor_logits_plain(m, state);
  const std::vector<double> probs = masked_probs(logits, mask);

  QuestionId chosen = -1;
  if (mode == ActionMode::kArgmax) {
    double best = -1.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
      if (mask[j] && probs[j] > best) {
        best = probs[j];
        chosen = static_cast<QuestionId>(j);
      }
    }
  } else {
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
      if (!mask[j]) continue;
      cum += probs[j];
      chosen = static_cast<QuestionId>(j);  // the last allowed id absorbs rounding
      if (u < cum) break;
    }
  }
  return ActionSample{chosen, std::log(probs[chosen])};
}

Mat discounted_returns(const EpisodeTrace& trace, double gamma) {
  const int n = static_cast<int>(trace.steps.size());
  if (n == 0) return Mat(0, 0);
  const Eigen::Index m = trace.steps.front().reward.size();
  Mat returns(n, m);
  Vec running = Vec::Zero(m);
  for (int t = n - 1; t >= 0; --t) {
    running = trace.steps[t].reward + gamma * running;
    returns.row(t) = running.transpose();
  }
  return returns;
}

double surrogate_term(double ratio, double scalarized_advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * scalarized_advantage, clipped * scalarized_advantage);
}

double actor_loss_value(std::span<const double> ratios,
                        std::span<const double> scalarized_advantages, double eps) {
  if (ratios.size() != scalarized_advantages.size() || ratios.empty()) {
    throw ContractViolation("actor_loss_value: mismatched or empty inputs");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    total += surrogate_term(ratios[i], scalarized_advantages[i], eps);
  }
  return -total / static_cast<double>(ratios.size());
}

double critic_loss_value(const Mat& values, const Mat& returns, const Vec& w) {
  if (values.rows() != returns.rows() || values.cols() != returns.cols() ||
      values.cols() != w.size() || values.rows() == 0) {
    throw ContractViolation("critic_loss_value: shape mismatch");
  }
  const Mat diff = values - returns;
  double total = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    total += w(k) * diff.col(k).squaredNorm() / static_cast<double>(values.rows());
  }
  return 0.5 * total;
}

FrozenBatch freeze_batch(const model::GmocatModel& m, std::span<const EpisodeTrace> traces,
                         const TrainConfig& cfg) {
  FrozenBatch frozen;
  for (const EpisodeTrace& trace : traces) {
    if (trace.steps.empty()) throw ContractViolation("freeze_batch: empty trace");
    Mat returns = discounted_returns(trace, cfg.gamma);
    std::vector<double> adv(trace.steps.size());
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
      if (trace.steps[t].reward.size() != cfg.w.size()) {
        throw ContractViolation("freeze_batch: reward width does not match weights");
      }
      const Vec value = critic_value_plain(m, trace.steps[t].state);
      const Vec advantage = returns.row(static_cast<Eigen::Index>(t)).transpose() - value;
      adv[t] = cfg.w.dot(advantage);
    }
    frozen.total_steps += static_cast<int>(trace.steps.size());
    frozen.returns.push_back(std::move(returns));
    frozen.scalarized_advantage.push_back(std::move(adv));
  }

  if (cfg.normalize_advantage && frozen.total_steps > 1) {
    double mean = 0.0;
    for (const auto& adv : frozen.scalarized_advantage) {
      for (double a : adv) mean += a;
    }
    mean /= frozen.total_steps;
    double var = 0.0;
    for (const auto& adv : frozen.scalarized_advantage) {
      for (double a : adv) var += (a - mean) * (a - mean);
    }
    const double sd = std::sqrt(var / frozen.total_steps) + 1e-8;
    for (auto& adv : frozen.scalarized_advantage) {
      for (double& a : adv) a = (a - mean) / sd;
    }
  }
  return frozen;
}

LossVars build_loss(ad::Tape& tape, const model::GmocatModel& m,
                    const graphs::CorrelationGraph& correlation,
                    const graphs::PrerequisiteGraph& prerequisite,
                    std::span<const EpisodeTrace> traces, const FrozenBatch& frozen,
                    const TrainConfig& cfg, encoder::DropoutContext* dropout) {
  if (traces.empty()) throw ContractViolation("build_loss: empty batch");
  if (frozen.returns.size() != traces.size()) {
    throw ContractViolation("build_loss: frozen batch does not match traces");
  }

  LossVars out{model::Binding::bind(tape, m), {}, {}, {}};

  std::unique_ptr<relagg::NodeEmbeddingSource> nodes;
  if (m.cfg.use_relation_aggregator) {
    nodes = std::make_unique<relagg::RelationEmbedder>(tape, out.binding, correlation,
                                                       prerequisite, m.cfg.leaky_relu_slope);
  } else {
    nodes = std::make_unique<relagg::RawEmbedder>(tape, out.binding);
  }

  std::vector<ad::Var> ratio_vars;
  std::vector<double> advantage_consts;
  std::vector<ad::Var> value_rows;
  Mat returns_all(frozen.total_steps, cfg.w.size());
  Eigen::Index pooled = 0;

  for (std::size_t k = 0; k < traces.size(); ++k) {
    const EpisodeTrace& trace = traces[k];
    std::vector<ad::Var> history_rows;
    history_rows.reserve(trace.steps.size());
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
      const StepRecord& step = trace.steps[t];
      ad::Var state = encoder::encode_history(tape, out.binding, history_rows, dropout);

      ad::Var logits = ad::add(ad::matmul(state, out.binding.actor_w), out.binding.actor_b);
      ad::Var log_probs = ad::masked_log_softmax_row(logits, step.mask);
      ad::Var log_prob = ad::entry(log_probs, 0, step.revealed.question);
      ratio_vars.push_back(ad::exp_op(ad::add_scalar(log_prob, -step.log_prob_old)));
      advantage_consts.push_back(frozen.scalarized_advantage[k][t]);

      value_rows.push_back(
          ad::add(ad::matmul(state, out.binding.critic_w), out.binding.critic_b));
      returns_all.row(pooled++) = frozen.returns[k].row(static_cast<Eigen::Index>(t));

      history_rows.push_back(encoder::record_embed(tape, out.binding, *nodes, step.revealed));
    }
  }

  // L1: clipped scalarized surrogate, averaged over all pooled steps.
  ad::Var ratio_row = ad::hcat(ratio_vars);  // 1 x N
  Mat adv_row(1, static_cast<Eigen::Index>(advantage_consts.size()));
  for (std::size_t i = 0; i < advantage_consts.size(); ++i) {
    adv_row(0, static_cast<Eigen::Index>(i)) = advantage_consts[i];
  }
  ad::Var surrogate = ad::hadamard_const(ratio_row, adv_row);
  ad::Var clipped = ad::hadamard_const(
      ad::clamp_op(ratio_row, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon), adv_row);
  out.actor_loss = ad::scale(ad::mean_all(ad::min2(surrogate, clipped)), -1.0);

  // L2: weighted squared error of the vector critic against the returns.
  ad::Var values = ad::vstack(value_rows);                    // N x m
  ad::Var diff = ad::sub(values, tape.leaf(returns_all, false));
  ad::Var channel_mse = ad::mean_rows(ad::hadamard(diff, diff));  // 1 x m
  Mat w_row = cfg.w.transpose();
  out.critic_loss = ad::scale(ad::sum_all(ad::hadamard_const(channel_mse, w_row)), 0.5);

  out.total_loss = ad::add(out.actor_loss, ad::scale(out.critic_loss, cfg.alpha));
  return out;
}

double loss_value(const model::GmocatModel& m, const graphs::CorrelationGraph& correlation,
                  const graphs::PrerequisiteGraph& prerequisite,
                  std::span<const EpisodeTrace> traces, const FrozenBatch& frozen,
                  const TrainConfig& cfg) {
  ad::Tape tape;
  LossVars vars = build_loss(tape, m, correlation, prerequisite, traces, frozen, cfg, nullptr);
  return tape.value(vars.total_loss)(0, 0);
}

std::pair<double, std::vector<Mat>> loss_and_gradients(
    const model::GmocatModel& m, const graphs::CorrelationGraph& correlation,
    const graphs::PrerequisiteGraph& prerequisite, std::span<const EpisodeTrace> traces,
    const FrozenBatch& frozen, const TrainConfig& cfg) {
  ad::Tape tape;
  LossVars vars = build_loss(tape, m, correlation, prerequisite, traces, frozen, cfg, nullptr);
  tape.backward_scalar(vars.total_loss);
  std::vector<Mat> grads;
  for (ad::Var v : vars.binding.vars()) grads.push_back(tape.grad(v));
  return {tape.value(vars.total_loss)(0, 0), std::move(grads)};
}

TrainStepReport train_step(model::GmocatModel& m, model::AdamState& adam,
                           const graphs::CorrelationGraph& correlation,
                           const graphs::PrerequisiteGraph& prerequisite,
                           std::span<const EpisodeTrace> traces, const TrainConfig& cfg,
                           std::uint64_t dropout_seed) {
  if (traces.empty()) throw ContractViolation("train_step: empty batch");
  cfg.validate(m.cfg.objective_count());

  const FrozenBatch frozen = freeze_batch(m, traces, cfg);
  TrainStepReport report;

  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    ad::Tape tape;
    prng::Engine dropout_rng(
        prng::derive(dropout_seed, {prng::kDropout, static_cast<std::uint64_t>(epoch)}));
    encoder::DropoutContext dropout{m.cfg.dropout, &dropout_rng};
    encoder::DropoutContext* dropout_ptr = m.cfg.dropout > 0.0 ? &dropout : nullptr;

    LossVars vars =
        build_loss(tape, m, correlation, prerequisite, traces, frozen, cfg, dropout_ptr);
    const double actor = tape.value(vars.actor_loss)(0, 0);
    const double critic = tape.value(vars.critic_loss)(0, 0);
    const double total = tape.value(vars.total_loss)(0, 0);
    if (!std::isfinite(total)) {
      std::ostringstream msg;
      msg << "non-finite loss at ppo epoch " << epoch << " (actor=" << actor
          << ", critic=" << critic << ")";
      throw TrainingDivergence(msg.str());
    }

    tape.backward_scalar(vars.total_loss);
    std::vector<Mat> grads;
    for (ad::Var v : vars.binding.vars()) grads.push_back(tape.grad(v));
    adam.step(m, grads, cfg.adam);

    report.actor_loss.push_back(actor);
    report.critic_loss.push_back(critic);
    report.total_loss.push_back(total);
  }
  return report;
}

}  // namespace gmocat::policy
