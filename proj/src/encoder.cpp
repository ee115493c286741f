#include "gmocat/encoder.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "gmocat/errors.hpp"

namespace gmocat::encoder {

ad::Var record_embed(ad::Tape& /*tape*/, const model::Binding& binding,
                     relagg::NodeEmbeddingSource& nodes, const ResponseRecord& record) {
  if (record.concepts.empty()) {
    throw ContractViolation("record_embed: record has no concepts");
  }
  ad::Var q_part = nodes.embed_question(record.question);

  ad::Var c_part;
  if (record.concepts.size() == 1) {
    c_part = nodes.embed_concept(record.concepts.front());
  } else {
    std::vector<ad::Var> rows;
    rows.reserve(record.concepts.size());
    for (ConceptId c : record.concepts) rows.push_back(nodes.embed_concept(c));
    c_part = ad::mean_rows(ad::vstack(rows));
  }

  ad::Var y_part = ad::row(binding.response_table, record.correct);
  std::array<ad::Var, 3> parts{q_part, c_part, y_part};
  return ad::hcat(parts);
}

ad::Var encode_history(ad::Tape& tape, const model::Binding& binding,
                       std::span<const ad::Var> record_rows, DropoutContext* dropout) {
  if (record_rows.empty()) return binding.start_state;

  ad::Var stacked = ad::vstack(record_rows);  // t x D
  const Eigen::Index dim = tape.value(stacked).cols();

  ad::Var queries = ad::matmul(stacked, binding.wq);
  ad::Var keys = ad::matmul(stacked, binding.wk);
  ad::Var values = ad::matmul(stacked, binding.wv);
  ad::Var scores = ad::scale(ad::matmul_nt(queries, keys),
                             1.0 / std::sqrt(static_cast<double>(dim)));
  ad::Var attention = ad::matmul(ad::softmax_rows(scores), values);

  if (dropout != nullptr && dropout->active()) {
    const double keep_prob = 1.0 - dropout->rate;
    Mat keep(tape.value(attention).rows(), tape.value(attention).cols());
    for (Eigen::Index i = 0; i < keep.rows(); ++i) {
      for (Eigen::Index j = 0; j < keep.cols(); ++j) {
        keep(i, j) = dropout->rng->uniform() < keep_prob ? 1.0 : 0.0;
      }
    }
    attention = ad::dropout_mask(attention, keep, keep_prob);
  }

  ad::Var normed = ad::layer_norm_rows(ad::add(attention, stacked), binding.ln_gain,
                                       binding.ln_bias);
  return ad::mean_rows(normed);
}

RowVec record_embed_plain(const model::GmocatModel& m, const Mat& question_table,
                          const Mat& concept_table, const ResponseRecord& record) {
  if (record.concepts.empty()) {
    throw ContractViolation("record_embed: record has no concepts");
  }
  const int d = m.cfg.embedding_dim;
  RowVec out(3 * d);
  out.segment(0, d) = question_table.row(record.question);
  RowVec mean = RowVec::Zero(d);
  for (ConceptId c : record.concepts) mean += concept_table.row(c);
  out.segment(d, d) = mean / static_cast<double>(record.concepts.size());
  out.segment(2 * d, d) = m.response_table.row(record.correct);
  return out;
}

RowVec encode_history_plain(const model::GmocatModel& m, std::span<const RowVec> record_rows) {
  const int dim = m.cfg.state_dim();
  if (record_rows.empty()) return m.start_state.row(0);

  const Eigen::Index t = static_cast<Eigen::Index>(record_rows.size());
  Mat stacked(t, dim);
  for (Eigen::Index i = 0; i < t; ++i) stacked.row(i) = record_rows[i];

  const Mat queries = stacked * m.wq;
  const Mat keys = stacked * m.wk;
  const Mat values = stacked * m.wv;
  Mat scores = queries * keys.transpose() / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index i = 0; i < t; ++i) {
    const double mx = scores.row(i).maxCoeff();
    Eigen::ArrayXd e = (scores.row(i).array() - mx).exp();
    scores.row(i) = (e / e.sum()).matrix();
  }
  const Mat residual = scores * values + stacked;

  RowVec pooled = RowVec::Zero(dim);
  constexpr double kEps = 1e-5;
  for (Eigen::Index i = 0; i < t; ++i) {
    const double mu = residual.row(i).mean();
    const double var = (residual.row(i).array() - mu).square().mean();
    const double inv_std = 1.0 / std::sqrt(var + kEps);
    pooled += (((residual.row(i).array() - mu) * inv_std) * m.ln_gain.row(0).array() +
               m.ln_bias.row(0).array())
                  .matrix();
  }
  return pooled / static_cast<double>(t);
}

}  // namespace gmocat::encoder
