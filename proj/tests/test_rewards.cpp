#include <doctest.h>

#include <unordered_set>

#include "gmocat/errors.hpp"
#include "gmocat/prng.hpp"
#include "gmocat/rewards.hpp"

using namespace gmocat;

namespace {

PopularSet popular_of(std::vector<QuestionId> members, int question_count) {
  PopularSet p;
  p.members = std::move(members);
  p.is_member.assign(question_count, 0);
  for (QuestionId q : p.members) p.is_member[q] = 1;
  return p;
}

}  // namespace

TEST_CASE("quality reward is the accuracy delta") {
  CHECK(rewards::quality_reward(0.75, 0.70) == doctest::Approx(0.05));
  CHECK(rewards::quality_reward(0.6, 0.6) == 0.0);
  CHECK(rewards::quality_reward(0.6, 0.8) == doctest::Approx(-0.2));
}

TEST_CASE("diversity reward fires on any new concept") {
  std::unordered_set<ConceptId> empty;
  CHECK(rewards::diversity_reward(empty, {3}) == 1.0);

  std::unordered_set<ConceptId> seen{1, 2};
  CHECK(rewards::diversity_reward(seen, {2}) == 0.0);

  std::unordered_set<ConceptId> seen_one{1};
  CHECK(rewards::diversity_reward(seen_one, {1, 4}) == 1.0);

  CHECK_THROWS_AS(rewards::diversity_reward(seen, {}), DataError);
}

TEST_CASE("novelty reward fires outside the popular set") {
  const PopularSet popular = popular_of({2, 5}, 8);
  CHECK(rewards::novelty_reward(2, popular) == 0.0);
  CHECK(rewards::novelty_reward(3, popular) == 1.0);

  const PopularSet none = popular_of({}, 8);
  for (QuestionId q = 0; q < 8; ++q) CHECK(rewards::novelty_reward(q, none) == 1.0);
}

TEST_CASE("reward_vector composes the three components") {
  const PopularSet popular = popular_of({7}, 10);
  std::unordered_set<ConceptId> empty;
  const rewards::RewardVector r = rewards::reward_vector(0.7, 0.6, empty, {0}, 3, popular);
  CHECK(r.quality == doctest::Approx(0.1));
  CHECK(r.diversity == 1.0);
  CHECK(r.novelty == 1.0);

  std::unordered_set<ConceptId> seen{0};
  const rewards::RewardVector zero = rewards::reward_vector(0.5, 0.5, seen, {0}, 7, popular);
  CHECK(zero.quality == 0.0);
  CHECK(zero.diversity == 0.0);
  CHECK(zero.novelty == 0.0);
}

TEST_CASE("reward_vector equals componentwise recomputation on random inputs") {
  prng::Engine rng(77);
  const PopularSet popular = popular_of({0, 4, 9}, 16);
  for (int trial = 0; trial < 200; ++trial) {
    const double acc_now = rng.uniform();
    const double acc_prev = rng.uniform();
    std::unordered_set<ConceptId> seen;
    for (int c = 0; c < 6; ++c) {
      if (rng.bernoulli(0.4)) seen.insert(c);
    }
    std::vector<ConceptId> question_concepts{static_cast<ConceptId>(rng.below(6))};
    if (rng.bernoulli(0.5)) question_concepts.push_back(static_cast<ConceptId>(rng.below(6)));
    const QuestionId q = static_cast<QuestionId>(rng.below(16));

    const rewards::RewardVector r =
        rewards::reward_vector(acc_now, acc_prev, seen, question_concepts, q, popular);
    CHECK(r.quality == rewards::quality_reward(acc_now, acc_prev));
    CHECK(r.diversity == rewards::diversity_reward(seen, question_concepts));
    CHECK(r.novelty == rewards::novelty_reward(q, popular));

    // Purity: identical inputs give identical outputs.
    const rewards::RewardVector again =
        rewards::reward_vector(acc_now, acc_prev, seen, question_concepts, q, popular);
    CHECK(r.quality == again.quality);
    CHECK(r.diversity == again.diversity);
    CHECK(r.novelty == again.novelty);
  }
}

TEST_CASE("scalarization weights validate and dot") {
  rewards::ScalarizationWeights w{1, 0.5, 0};
  w.validate();
  CHECK(w.dot({0.2, 1, 1}) == doctest::Approx(0.7));

  rewards::ScalarizationWeights negative{1, -0.1, 0};
  CHECK_THROWS_AS(negative.validate(), ConfigError);
  rewards::ScalarizationWeights zero{0, 0, 0};
  CHECK_THROWS_AS(zero.validate(), ConfigError);
}
