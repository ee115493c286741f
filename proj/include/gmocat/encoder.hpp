#pragma once

#include <span>

#include <Eigen/Dense>

#include "gmocat/autodiff.hpp"
#include "gmocat/model.hpp"
#include "gmocat/prng.hpp"
#include "gmocat/relagg.hpp"
#include "gmocat/types.hpp"

namespace gmocat::encoder {

using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

/// Dropout on the attention output, drawn from the given engine; only active
/// in train mode.
struct DropoutContext {
  double rate = 0.0;
  prng::Engine* rng = nullptr;

  bool active() const { return rate > 0.0 && rng != nullptr; }
};

/// One record row: relation-aware question embedding, mean of the record's
/// relation-aware concept embeddings, and the raw response embedding,
/// concatenated to 1 x 3d.
ad::Var record_embed(ad::Tape& tape, const model::Binding& binding,
                     relagg::NodeEmbeddingSource& nodes, const ResponseRecord& record);

/// Stacks record rows, applies scaled dot-product self-attention, dropout
/// (train mode), the post-norm residual, and mean pooling. Empty histories
/// return the learned start state.
ad::Var encode_history(ad::Tape& tape, const model::Binding& binding,
                       std::span<const ad::Var> record_rows, DropoutContext* dropout = nullptr);

// Gradient-free mirror used by rollouts and evaluation (eval mode only).
RowVec record_embed_plain(const model::GmocatModel& m, const Mat& question_table,
                          const Mat& concept_table, const ResponseRecord& record);
RowVec encode_history_plain(const model::GmocatModel& m, std::span<const RowVec> record_rows);

}  // namespace gmocat::encoder
