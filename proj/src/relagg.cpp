#include "gmocat/relagg.hpp"

#include <cmath>

#include "gmocat/errors.hpp"

namespace gmocat::relagg {

RawEmbedder::RawEmbedder(ad::Tape& tape, const model::Binding& binding)
    : tape_(&tape), binding_(&binding) {}

ad::Var RawEmbedder::embed_question(QuestionId q) {
  auto it = questions_.find(q);
  if (it != questions_.end()) return it->second;
  ad::Var v = ad::row(binding_->question_table, q);
  questions_.emplace(q, v);
  return v;
}

ad::Var RawEmbedder::embed_concept(ConceptId c) {
  auto it = concepts_.find(c);
  if (it != concepts_.end()) return it->second;
  ad::Var v = ad::row(binding_->concept_table, c);
  concepts_.emplace(c, v);
  return v;
}

RelationEmbedder::RelationEmbedder(ad::Tape& tape, const model::Binding& binding,
                                   const graphs::CorrelationGraph& correlation,
                                   const graphs::PrerequisiteGraph& prerequisite,
                                   double leaky_slope)
    : tape_(&tape),
      binding_(&binding),
      correlation_(&correlation),
      prerequisite_(&prerequisite),
      leaky_slope_(leaky_slope) {}

ad::Var RelationEmbedder::transformed_concept(ConceptId c, bool pre_channel) {
  auto& cache = pre_channel ? concept_pre_rows_ : concept_cor_rows_;
  auto it = cache.find(c);
  if (it != cache.end()) return it->second;
  ad::Var v = ad::matmul(ad::row(binding_->concept_table, c),
                         pre_channel ? binding_->w_pre : binding_->w_cor);
  cache.emplace(c, v);
  return v;
}

ad::Var RelationEmbedder::transformed_question(QuestionId q) {
  auto it = question_cor_rows_.find(q);
  if (it != question_cor_rows_.end()) return it->second;
  ad::Var v = ad::matmul(ad::row(binding_->question_table, q), binding_->w_cor);
  question_cor_rows_.emplace(q, v);
  return v;
}

ad::Var RelationEmbedder::aggregate(ad::Var center_transformed,
                                    const std::vector<ad::Var>& neighbor_rows,
                                    ad::Var att_vector) {
  if (neighbor_rows.empty()) return center_transformed;  // self-loop fallback
  std::vector<ad::Var> scores;
  scores.reserve(neighbor_rows.size());
  for (ad::Var nb : neighbor_rows) {
    std::array<ad::Var, 2> pair{center_transformed, nb};
    ad::Var cat = ad::hcat(pair);
    scores.push_back(ad::leaky_relu(ad::matmul(cat, att_vector), leaky_slope_));
  }
  ad::Var score_row = ad::hcat(scores);            // 1 x N
  ad::Var weights = ad::softmax_rows(score_row);   // 1 x N
  ad::Var stacked = ad::vstack(neighbor_rows);     // N x d
  return ad::matmul(weights, stacked);             // 1 x d
}

ad::Var RelationEmbedder::embed_concept(ConceptId c) {
  auto it = concepts_.find(c);
  if (it != concepts_.end()) return it->second;

  ad::Var center_pre = transformed_concept(c, /*pre_channel=*/true);
  std::vector<ad::Var> pre_rows;
  for (ConceptId nb : graphs::neighbors(*prerequisite_, c)) {
    pre_rows.push_back(transformed_concept(nb, /*pre_channel=*/true));
  }
  ad::Var g_pre = aggregate(center_pre, pre_rows, binding_->att_pre);

  ad::Var center_cor = transformed_concept(c, /*pre_channel=*/false);
  std::vector<ad::Var> cor_rows;
  for (QuestionId nb : graphs::neighbors_of_concept(*correlation_, c)) {
    cor_rows.push_back(transformed_question(nb));
  }
  ad::Var g_cor = aggregate(center_cor, cor_rows, binding_->att_cor);

  // Channel fusion: softmax over P^T tanh(W g + b) per channel.
  auto fusion_logit = [&](ad::Var g) {
    ad::Var h = ad::tanh_op(
        ad::add(ad::matmul(g, binding_->fusion_w), binding_->fusion_b));
    return ad::matmul(h, binding_->fusion_p);  // 1 x 1
  };
  std::array<ad::Var, 2> logits{fusion_logit(g_pre), fusion_logit(g_cor)};
  ad::Var mu = ad::softmax_rows(ad::hcat(logits));  // 1 x 2
  std::array<ad::Var, 2> gs{g_pre, g_cor};
  ad::Var out = ad::matmul(mu, ad::vstack(gs));     // 1 x d

  concepts_.emplace(c, out);
  return out;
}

ad::Var RelationEmbedder::embed_question(QuestionId q) {
  auto it = questions_.find(q);
  if (it != questions_.end()) return it->second;

  ad::Var center = transformed_question(q);
  std::vector<ad::Var> rows;
  for (ConceptId nb : graphs::neighbors(*correlation_, q)) {
    rows.push_back(transformed_concept(nb, /*pre_channel=*/false));
  }
  ad::Var out = aggregate(center, rows, binding_->att_cor);
  questions_.emplace(q, out);
  return out;
}

std::vector<double> attention_weights(const RowVec& center_transformed,
                                      const std::vector<RowVec>& neighbor_transformed,
                                      const Eigen::VectorXd& att_vector, double leaky_slope) {
  if (neighbor_transformed.empty()) {
    throw ContractViolation("attention_weights: no neighbors; caller must apply the fallback");
  }
  const Eigen::Index d = center_transformed.cols();
  std::vector<double> scores(neighbor_transformed.size());
  for (std::size_t i = 0; i < neighbor_transformed.size(); ++i) {
    double s = center_transformed.dot(att_vector.head(d)) +
               neighbor_transformed[i].dot(att_vector.tail(d));
    scores[i] = s > 0 ? s : leaky_slope * s;
  }
  double max_score = scores[0];
  for (double s : scores) max_score = std::max(max_score, s);
  double total = 0.0;
  for (double& s : scores) {
    s = std::exp(s - max_score);
    total += s;
  }
  for (double& s : scores) s /= total;
  return scores;
}

namespace {

RowVec aggregate_plain(const RowVec& center, const std::vector<RowVec>& neighbors,
                       const Eigen::VectorXd& att, double slope, std::vector<double>* weights_out,
                       bool* fallback_out) {
  if (neighbors.empty()) {
    if (fallback_out) *fallback_out = true;
    return center;
  }
  std::vector<double> w = attention_weights(center, neighbors, att, slope);
  RowVec out = RowVec::Zero(center.cols());
  for (std::size_t i = 0; i < neighbors.size(); ++i) out += w[i] * neighbors[i];
  if (weights_out) *weights_out = std::move(w);
  return out;
}

}  // namespace

ConceptForward concept_forward(const model::GmocatModel& m,
                               const graphs::CorrelationGraph& correlation,
                               const graphs::PrerequisiteGraph& prerequisite, ConceptId c) {
  const double slope = m.cfg.leaky_relu_slope;
  ConceptForward fwd;

  const RowVec center_pre = m.concept_table.row(c) * m.w_pre;
  std::vector<RowVec> pre_rows;
  for (ConceptId nb : graphs::neighbors(prerequisite, c)) {
    pre_rows.emplace_back(m.concept_table.row(nb) * m.w_pre);
  }
  fwd.pre_embedding = aggregate_plain(center_pre, pre_rows, m.att_pre.col(0), slope,
                                      &fwd.pre_weights, &fwd.pre_fallback);

  const RowVec center_cor = m.concept_table.row(c) * m.w_cor;
  std::vector<RowVec> cor_rows;
  for (QuestionId nb : graphs::neighbors_of_concept(correlation, c)) {
    cor_rows.emplace_back(m.question_table.row(nb) * m.w_cor);
  }
  fwd.cor_embedding = aggregate_plain(center_cor, cor_rows, m.att_cor.col(0), slope,
                                      &fwd.cor_weights, &fwd.cor_fallback);

  auto fusion_logit = [&](const RowVec& g) {
    const RowVec h = ((g * m.fusion_w) + m.fusion_b.row(0)).array().tanh();
    return h.dot(m.fusion_p.col(0));
  };
  const double l_pre = fusion_logit(fwd.pre_embedding);
  const double l_cor = fusion_logit(fwd.cor_embedding);
  const double mx = std::max(l_pre, l_cor);
  const double e_pre = std::exp(l_pre - mx);
  const double e_cor = std::exp(l_cor - mx);
  fwd.mu_pre = e_pre / (e_pre + e_cor);
  fwd.mu_cor = e_cor / (e_pre + e_cor);
  fwd.out = fwd.mu_pre * fwd.pre_embedding + fwd.mu_cor * fwd.cor_embedding;
  return fwd;
}

QuestionForward question_forward(const model::GmocatModel& m,
                                 const graphs::CorrelationGraph& correlation, QuestionId q) {
  QuestionForward fwd;
  const RowVec center = m.question_table.row(q) * m.w_cor;
  std::vector<RowVec> rows;
  for (ConceptId nb : graphs::neighbors(correlation, q)) {
    rows.emplace_back(m.concept_table.row(nb) * m.w_cor);
  }
  bool fallback = false;
  fwd.out = aggregate_plain(center, rows, m.att_cor.col(0), m.cfg.leaky_relu_slope,
                            &fwd.cor_weights, &fallback);
  return fwd;
}

RelationTables compute_tables(const model::GmocatModel& m,
                              const graphs::CorrelationGraph& correlation,
                              const graphs::PrerequisiteGraph& prerequisite) {
  RelationTables tables;
  tables.questions.resize(m.cfg.question_count, m.cfg.embedding_dim);
  tables.concepts.resize(m.cfg.concept_count, m.cfg.embedding_dim);
  for (QuestionId q = 0; q < m.cfg.question_count; ++q) {
    tables.questions.row(q) = question_forward(m, correlation, q).out;
  }
  for (ConceptId c = 0; c < m.cfg.concept_count; ++c) {
    tables.concepts.row(c) = concept_forward(m, correlation, prerequisite, c).out;
  }
  return tables;
}

}  // namespace gmocat::relagg
