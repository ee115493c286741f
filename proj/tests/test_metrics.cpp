#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "gmocat/errors.hpp"
#include <json.hpp>

#include "gmocat/metrics.hpp"
#include "gmocat/prng.hpp"
#include "test_util.hpp"

using namespace gmocat;

namespace {

// Exhaustive pair enumeration, ties 0.5.
double auc_oracle(const std::vector<int>& labels, const std::vector<double>& scores) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("auc: trivial cases and the exhaustive-pair oracle") {
  SUBCASE("perfect ranking") {
    std::vector<int> labels{0, 0, 1, 1};
    std::vector<double> scores{0.1, 0.2, 0.8, 0.9};
    CHECK(metrics::auc(labels, scores).value == doctest::Approx(1.0));
  }
  SUBCASE("all scores equal -> 0.5 through ties") {
    std::vector<int> labels{0, 1, 0, 1};
    std::vector<double> scores{0.5, 0.5, 0.5, 0.5};
    const metrics::AucResult r = metrics::auc(labels, scores);
    CHECK(r.value == doctest::Approx(0.5));
    CHECK_FALSE(r.degenerate);
  }
  SUBCASE("degenerate label sets flagged and reported as 0.5") {
    std::vector<int> labels{1, 1, 1};
    std::vector<double> scores{0.1, 0.2, 0.3};
    const metrics::AucResult r = metrics::auc(labels, scores);
    CHECK(r.value == 0.5);
    CHECK(r.degenerate);
  }
  SUBCASE("length mismatch is an error") {
    std::vector<int> labels{1, 0};
    std::vector<double> scores{0.5};
    CHECK_THROWS_AS(metrics::auc(labels, scores), DataError);
  }
  SUBCASE("random instances with ties match the O(n^2) oracle") {
    prng::Engine rng(7);
    for (int trial = 0; trial < 60; ++trial) {
      const int n = rng.uniform_int(5, 30);
      std::vector<int> labels(n);
      std::vector<double> scores(n);
      bool has_pos = false, has_neg = false;
      for (int i = 0; i < n; ++i) {
        labels[i] = rng.bernoulli(0.5);
        scores[i] = static_cast<double>(rng.below(8)) / 8.0;  // grid scores force ties
        has_pos |= labels[i] == 1;
        has_neg |= labels[i] == 0;
      }
      if (!has_pos || !has_neg) continue;
      CHECK(metrics::auc(labels, scores).value ==
            doctest::Approx(auc_oracle(labels, scores)).epsilon(1e-12));
    }
  }
  SUBCASE("score negation flips AUC when there are no ties") {
    prng::Engine rng(8);
    std::vector<int> labels;
    std::vector<double> scores, negated;
    for (int i = 0; i < 25; ++i) {
      labels.push_back(rng.bernoulli(0.4));
      scores.push_back(rng.uniform());  // continuous, ties have measure zero
      negated.push_back(-scores.back());
    }
    labels[0] = 1;
    labels[1] = 0;
    CHECK(metrics::auc(labels, scores).value + metrics::auc(labels, negated).value ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("accuracy thresholds at 0.5") {
  std::vector<int> labels{1, 0, 1, 0};
  std::vector<double> scores{0.9, 0.1, 0.4, 0.6};
  CHECK(metrics::accuracy(labels, scores) == doctest::Approx(0.5));
  CHECK(metrics::accuracy(labels, scores, 0.35) == doctest::Approx(0.75));
}

TEST_CASE("coverage: ratio of covered concepts") {
  SUBCASE("half of 86 covered") {
    std::vector<std::vector<ConceptId>> selected;
    for (ConceptId c = 0; c < 43; ++c) selected.push_back({c});
    CHECK(metrics::coverage(selected, 86) == doctest::Approx(0.5));
  }
  SUBCASE("no selections") {
    CHECK(metrics::coverage({}, 10) == 0.0);
  }
  SUBCASE("matches a set-union oracle and is monotone in t") {
    prng::Engine rng(9);
    std::vector<std::vector<ConceptId>> selected;
    double prev = 0.0;
    std::set<ConceptId> covered;
    for (int t = 0; t < 30; ++t) {
      std::vector<ConceptId> cs{static_cast<ConceptId>(rng.below(12))};
      if (rng.bernoulli(0.3)) cs.push_back(static_cast<ConceptId>(rng.below(12)));
      covered.insert(cs.begin(), cs.end());
      selected.push_back(cs);
      const double cov = metrics::coverage(selected, 12);
      CHECK(cov == doctest::Approx(covered.size() / 12.0));
      CHECK(cov >= prev);
      prev = cov;
    }
  }
}

TEST_CASE("exposure rates and the tail fraction") {
  SUBCASE("chosen by 3 of 10") {
    std::vector<std::vector<QuestionId>> sessions(10);
    sessions[0] = {4};
    sessions[3] = {4};
    sessions[7] = {4};
    for (auto& s : sessions) {
      if (s.empty()) s = {1};
    }
    const std::vector<double> rates = metrics::exposure_rates(sessions, 6);
    CHECK(rates[4] == doctest::Approx(0.3));
    CHECK(rates[5] == 0.0);
  }
  SUBCASE("random sessions match a direct tally and conserve counts") {
    prng::Engine rng(10);
    std::vector<std::vector<QuestionId>> sessions(20);
    std::vector<int> tally(15, 0);
    for (auto& s : sessions) {
      std::set<QuestionId> chosen;
      while (chosen.size() < 5) chosen.insert(static_cast<QuestionId>(rng.below(15)));
      s.assign(chosen.begin(), chosen.end());
      for (QuestionId q : s) ++tally[q];
    }
    const std::vector<double> rates = metrics::exposure_rates(sessions, 15);
    double total = 0.0;
    for (int q = 0; q < 15; ++q) {
      CHECK(rates[q] == doctest::Approx(tally[q] / 20.0));
      total += rates[q] * 20.0;
    }
    CHECK(total == doctest::Approx(20.0 * 5));  // sum N_q = sessions * steps
  }
  SUBCASE("tail fraction above the cutoff") {
    std::vector<double> rates(100, 0.0);
    CHECK(metrics::exposure_tail(rates) == 0.0);
    rates[17] = 0.35;
    CHECK(metrics::exposure_tail(rates) == doctest::Approx(0.01));
    rates[20] = 0.2;  // boundary is strict
    CHECK(metrics::exposure_tail(rates) == doctest::Approx(0.01));
  }
}

TEST_CASE("mean overlap over session pairs") {
  SUBCASE("two sessions sharing five questions") {
    std::vector<std::vector<QuestionId>> sessions{{0, 1, 2, 3, 4, 9}, {0, 1, 2, 3, 4, 8}};
    CHECK(metrics::mean_overlap(sessions) == doctest::Approx(5.0));
  }
  SUBCASE("three sessions with pair overlaps 4, 2, 0") {
    // (0,1) share {0,1,2,3}; (0,2) share {4,5}; (1,2) share nothing.
    std::vector<std::vector<QuestionId>> sessions{
        {0, 1, 2, 3, 4, 5}, {0, 1, 2, 3, 8, 9}, {4, 5, 30, 31}};
    CHECK(metrics::mean_overlap(sessions) == doctest::Approx(2.0));
  }
  SUBCASE("identical sessions overlap by their length") {
    std::vector<std::vector<QuestionId>> sessions{{5, 6, 7}, {5, 6, 7}};
    CHECK(metrics::mean_overlap(sessions) == doctest::Approx(3.0));
  }
  SUBCASE("random sessions match the exhaustive oracle") {
    prng::Engine rng(12);
    std::vector<std::vector<QuestionId>> sessions(15);
    for (auto& s : sessions) {
      std::set<QuestionId> chosen;
      while (chosen.size() < 6) chosen.insert(static_cast<QuestionId>(rng.below(25)));
      s.assign(chosen.begin(), chosen.end());
    }
    double oracle = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      for (std::size_t j = i + 1; j < sessions.size(); ++j) {
        ++pairs;
        for (QuestionId q : sessions[i]) {
          oracle += std::count(sessions[j].begin(), sessions[j].end(), q);
        }
      }
    }
    CHECK(metrics::mean_overlap(sessions) == doctest::Approx(oracle / pairs));
  }
  SUBCASE("fewer than two sessions is an error") {
    std::vector<std::vector<QuestionId>> sessions{{1, 2}};
    CHECK_THROWS_AS(metrics::mean_overlap(sessions), DataError);
  }
}

TEST_CASE("metric report JSON round trip and aggregation") {
  metrics::MetricReport r;
  r.selector = "random";
  r.seed = 3;
  r.config_hash = "abc";
  r.checkpoint_steps = {5, 10, 20};
  r.auc = {0.6, 0.65, 0.7};
  r.acc = {0.55, 0.6, 0.62};
  r.cov_curve = {0.1, 0.2, 0.3};
  r.exposure = {0.0, 0.5};
  r.exposure_tail = 0.5;
  r.overlap = 2.5;
  r.sessions = 4;
  r.max_steps = 3;

  testutil::TempDir dir("report");
  metrics::save_report(dir.file("r.json"), r);
  const metrics::MetricReport loaded = metrics::load_report(dir.file("r.json"));
  CHECK(loaded.selector == r.selector);
  CHECK(loaded.auc == r.auc);
  CHECK(loaded.cov_curve == r.cov_curve);
  CHECK(loaded.overlap == r.overlap);

  metrics::MetricReport r2 = r;
  r2.seed = 4;
  r2.auc = {0.7, 0.75, 0.8};
  std::vector<metrics::MetricReport> reports{r, r2};
  const std::string agg = metrics::aggregate_reports_json(reports);
  const nlohmann::json parsed = nlohmann::json::parse(agg);
  CHECK(parsed.at("runs").get<int>() == 2);
  CHECK(parsed.at("auc")[0].at("mean").get<double>() == doctest::Approx(0.65));
  CHECK(parsed.at("auc")[0].at("std").get<double>() ==
        doctest::Approx(std::sqrt(2.0) * 0.05).epsilon(1e-9));
}
