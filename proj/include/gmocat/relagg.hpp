#pragma once

#include <optional>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "gmocat/autodiff.hpp"
#include "gmocat/graphs.hpp"
#include "gmocat/model.hpp"
#include "gmocat/types.hpp"

namespace gmocat::relagg {

using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

/// Source of per-node embeddings for the state encoder; either relation-aware
/// (graph aggregation) or raw table rows (the aggregator ablation).
class NodeEmbeddingSource {
 public:
  virtual ~NodeEmbeddingSource() = default;
  virtual ad::Var embed_question(QuestionId q) = 0;
  virtual ad::Var embed_concept(ConceptId c) = 0;
};

/// Raw table rows, memoized per node (the GMOCAT-R configuration).
class RawEmbedder : public NodeEmbeddingSource {
 public:
  RawEmbedder(ad::Tape& tape, const model::Binding& binding);
  ad::Var embed_question(QuestionId q) override;
  ad::Var embed_concept(ConceptId c) override;

 private:
  ad::Tape* tape_;
  const model::Binding* binding_;
  std::unordered_map<QuestionId, ad::Var> questions_;
  std::unordered_map<ConceptId, ad::Var> concepts_;
};

/// Relation-aware embeddings by attention-weighted neighbor aggregation over
/// the prerequisite and correlation graphs, with softmax fusion of the two
/// channels on the concept side. Results are memoized, so only nodes that a
/// batch actually references are computed.
class RelationEmbedder : public NodeEmbeddingSource {
 public:
  RelationEmbedder(ad::Tape& tape, const model::Binding& binding,
                   const graphs::CorrelationGraph& correlation,
                   const graphs::PrerequisiteGraph& prerequisite, double leaky_slope);

  ad::Var embed_question(QuestionId q) override;
  ad::Var embed_concept(ConceptId c) override;

 private:
  ad::Var transformed_concept(ConceptId c, bool pre_channel);
  ad::Var transformed_question(QuestionId q);
  /// Attention-weighted sum of transformed neighbor rows against the center's
  /// transformed row; empty neighborhoods fall back to the center itself.
  ad::Var aggregate(ad::Var center_transformed, const std::vector<ad::Var>& neighbor_rows,
                    ad::Var att_vector);

  ad::Tape* tape_;
  const model::Binding* binding_;
  const graphs::CorrelationGraph* correlation_;
  const graphs::PrerequisiteGraph* prerequisite_;
  double leaky_slope_;
  std::unordered_map<QuestionId, ad::Var> questions_;
  std::unordered_map<ConceptId, ad::Var> concepts_;
  std::unordered_map<ConceptId, ad::Var> concept_pre_rows_;
  std::unordered_map<ConceptId, ad::Var> concept_cor_rows_;
  std::unordered_map<QuestionId, ad::Var> question_cor_rows_;
};

/// Plain (gradient-free) forward pass with every intermediate exposed.
struct ConceptForward {
  RowVec pre_embedding;   // g_pre
  RowVec cor_embedding;   // g_cor
  double mu_pre = 0.0;
  double mu_cor = 0.0;
  RowVec out;             // relation-aware embedding
  std::vector<double> pre_weights;  // attention over prerequisite neighbors
  std::vector<double> cor_weights;  // attention over correlated questions
  bool pre_fallback = false;
  bool cor_fallback = false;
};

struct QuestionForward {
  RowVec out;
  std::vector<double> cor_weights;
};

ConceptForward concept_forward(const model::GmocatModel& m,
                               const graphs::CorrelationGraph& correlation,
                               const graphs::PrerequisiteGraph& prerequisite, ConceptId c);
QuestionForward question_forward(const model::GmocatModel& m,
                                 const graphs::CorrelationGraph& correlation, QuestionId q);

/// Full-table plain forward used by rollouts and evaluation.
struct RelationTables {
  Mat questions;  // Q x d
  Mat concepts;   // K x d
};
RelationTables compute_tables(const model::GmocatModel& m,
                              const graphs::CorrelationGraph& correlation,
                              const graphs::PrerequisiteGraph& prerequisite);

/// Attention weights over neighbor scores: softmax of LeakyReLU-scored
/// concatenations. Exposed for the oracle tests.
std::vector<double> attention_weights(const RowVec& center_transformed,
                                      const std::vector<RowVec>& neighbor_transformed,
                                      const Eigen::VectorXd& att_vector, double leaky_slope);

}  // namespace gmocat::relagg
