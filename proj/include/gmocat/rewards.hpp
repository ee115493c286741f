#pragma once

#include <unordered_set>
#include <vector>

#include "gmocat/errors.hpp"
#include "gmocat/types.hpp"

namespace gmocat::rewards {

/// Per-step reward vector [r_qua, r_div, r_nov]: meta-accuracy gain, binary
/// new-concept indicator, binary not-over-popular indicator.
struct RewardVector {
  double quality = 0.0;
  double diversity = 0.0;
  double novelty = 0.0;
};

struct ScalarizationWeights {
  double quality = 1.0;
  double diversity = 1.0;
  double novelty = 1.0;

  void validate() const {
    if (quality < 0 || diversity < 0 || novelty < 0) {
      throw ConfigError("scalarization weights must be non-negative");
    }
    if (quality == 0 && diversity == 0 && novelty == 0) {
      throw ConfigError("at least one scalarization weight must be nonzero");
    }
  }

  double dot(const RewardVector& r) const {
    return quality * r.quality + diversity * r.diversity + novelty * r.novelty;
  }
};

inline double quality_reward(double acc_now, double acc_prev) {
  return acc_now - acc_prev;
}

/// 1 iff the question introduces at least one unseen concept.
inline double diversity_reward(const std::unordered_set<ConceptId>& seen_concepts,
                               const std::vector<ConceptId>& question_concepts) {
  if (question_concepts.empty()) {
    throw DataError("diversity_reward: question has no concepts");
  }
  for (ConceptId c : question_concepts) {
    if (seen_concepts.count(c) == 0) return 1.0;
  }
  return 0.0;
}

/// 1 iff the question is outside the fixed popular set.
inline double novelty_reward(QuestionId question, const PopularSet& popular) {
  return popular.contains(question) ? 0.0 : 1.0;
}

inline RewardVector reward_vector(double acc_now, double acc_prev,
                                  const std::unordered_set<ConceptId>& seen_concepts,
                                  const std::vector<ConceptId>& question_concepts,
                                  QuestionId question, const PopularSet& popular) {
  RewardVector r;
  r.quality = quality_reward(acc_now, acc_prev);
  r.diversity = diversity_reward(seen_concepts, question_concepts);
  r.novelty = novelty_reward(question, popular);
  return r;
}

}  // namespace gmocat::rewards
