#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmocat/autodiff.hpp"

namespace gmocat::model {

using Mat = Eigen::MatrixXd;

struct ModelConfig {
  int question_count = 0;
  int concept_count = 0;
  int embedding_dim = 32;          // d
  double dropout = 0.1;            // on attention outputs, train mode only
  double leaky_relu_slope = 0.2;
  bool use_relation_aggregator = true;  // false: raw embeddings feed the encoder
  bool scalar_critic = false;           // true: rewards scalarized at storage, critic 1-wide

  int state_dim() const { return 3 * embedding_dim; }
  int objective_count() const { return scalar_critic ? 1 : 3; }
  /// Architecture fingerprint; checkpoints refuse to load across a mismatch.
  std::uint64_t fingerprint() const;
};

struct NamedParam {
  std::string name;
  Mat* value;
};

/// Every trainable tensor of the recommender: embedding tables, the relation
/// aggregator, the state encoder, and the actor/critic heads.
struct GmocatModel {
  ModelConfig cfg;

  Mat question_table;  // Q x d
  Mat concept_table;   // K x d
  Mat response_table;  // 2 x d

  Mat w_pre, w_cor;        // d x d
  Mat att_pre, att_cor;    // 2d x 1
  Mat fusion_p;            // d x 1
  Mat fusion_w;            // d x d
  Mat fusion_b;            // 1 x d

  Mat wq, wk, wv;          // D x D, D = 3d
  Mat ln_gain, ln_bias;    // 1 x D
  Mat start_state;         // 1 x D, the empty-history state

  Mat actor_w;             // D x Q
  Mat actor_b;             // 1 x Q
  Mat critic_w;            // D x m
  Mat critic_b;            // 1 x m

  static GmocatModel init(const ModelConfig& cfg, std::uint64_t seed);

  /// Stable-order parameter list (same order as checkpoints and Adam slots).
  std::vector<NamedParam> params();
  std::vector<NamedParam> params() const;

  void save(const std::string& path) const;
  static GmocatModel load(const std::string& path, const ModelConfig& expected);
};

/// Tape leaves for every model parameter, in params() order.
struct Binding {
  ad::Var question_table, concept_table, response_table;
  ad::Var w_pre, w_cor, att_pre, att_cor, fusion_p, fusion_w, fusion_b;
  ad::Var wq, wk, wv, ln_gain, ln_bias, start_state;
  ad::Var actor_w, actor_b, critic_w, critic_b;

  static Binding bind(ad::Tape& tape, const GmocatModel& model);
  std::vector<ad::Var> vars() const;  // params() order
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  explicit AdamState(const GmocatModel& model);
  /// One first-order step; `grads` must be in params() order.
  void step(GmocatModel& model, const std::vector<Mat>& grads, const AdamConfig& cfg);
  int steps_taken() const { return t_; }

 private:
  std::vector<Mat> m_, v_;
  int t_ = 0;
};

}  // namespace gmocat::model
