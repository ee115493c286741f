#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gmocat/cdm.hpp"
#include "gmocat/errors.hpp"
#include "gmocat/prng.hpp"
#include "gmocat/sim.hpp"
#include "test_util.hpp"

using namespace gmocat;

namespace {

cdm::ItemParams items_of(std::vector<double> a, std::vector<double> b) {
  cdm::ItemParams items;
  items.discrimination = Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
  items.difficulty = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  return items;
}

double sigma(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("predict_prob: logistic values and monotonicity") {
  CHECK(cdm::predict_prob(1.3, 2.0, 1.3) == doctest::Approx(0.5));
  CHECK(cdm::predict_prob(0.0, 1.0, 0.0) == doctest::Approx(0.5));
  CHECK(cdm::predict_prob(2.0, 1.5, 0.5) == doctest::Approx(0.90465).epsilon(1e-4));
  CHECK(cdm::predict_prob(2.0, 1.5, 0.5) == doctest::Approx(sigma(1.5 * 1.5)));

  prng::Engine rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = rng.uniform(0.2, 3.0);
    const double b = rng.uniform(-3.0, 3.0);
    const double t1 = rng.uniform(-4.0, 4.0);
    const double t2 = t1 + rng.uniform(0.01, 2.0);
    CHECK(cdm::predict_prob(t2, a, b) > cdm::predict_prob(t1, a, b));
  }
}

TEST_CASE("fisher_info: closed-form values and the finite-difference identity") {
  CHECK(cdm::fisher_info(0.7, 2.0, 0.7) == doctest::Approx(1.0));  // a^2/4
  CHECK(cdm::fisher_info(0.0, 1.0, 0.0) == doctest::Approx(0.25));
  CHECK(cdm::fisher_info(1.0, 2.0, 0.0) == doctest::Approx(0.41997).epsilon(1e-4));

  // I(theta) = -E[d^2/dtheta^2 log likelihood], by central second differences.
  prng::Engine rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = rng.uniform(0.3, 2.5);
    const double b = rng.uniform(-2.0, 2.0);
    const double theta = rng.uniform(-2.0, 2.0);
    const double h = 1e-3;
    auto ll = [&](double t, int y) {
      const double p = cdm::predict_prob(t, a, b);
      return y == 1 ? std::log(p) : std::log(1.0 - p);
    };
    const double p = cdm::predict_prob(theta, a, b);
    double expected = 0.0;
    for (int y : {0, 1}) {
      const double second = (ll(theta + h, y) - 2.0 * ll(theta, y) + ll(theta - h, y)) / (h * h);
      expected += (y == 1 ? p : 1.0 - p) * (-second);
    }
    CHECK(cdm::fisher_info(theta, a, b) == doctest::Approx(expected).epsilon(1e-5));
  }
}

TEST_CASE("kl_info: quadrature against a high-resolution trapezoid oracle") {
  cdm::KliConfig cfg;
  cfg.interval_constant = 1.0;  // delta_1 = 1
  cfg.quadrature_points = 101;
  const double a = 1.0, b = 0.0, theta = 0.0;
  const double value = cdm::kl_info(theta, a, b, cfg, 1);

  auto kl = [&](double u) {
    const double p = sigma(a * (theta - b));
    const double q = sigma(a * (u - b));
    return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  };
  const int n = 10001;
  const double h = 2.0 / (n - 1);
  double oracle = 0.5 * (kl(theta - 1.0) + kl(theta + 1.0));
  for (int k = 1; k < n - 1; ++k) oracle += kl(theta - 1.0 + h * k);
  oracle *= h;
  CHECK(value == doctest::Approx(oracle).epsilon(1e-6));

  SUBCASE("vanishes as the interval shrinks") {
    cdm::KliConfig tiny = cfg;
    tiny.interval_constant = 1e-3;
    CHECK(cdm::kl_info(0.0, 1.0, 0.0, tiny, 1) < 1e-8);
    CHECK(cdm::kl_info(0.0, 1.0, 0.0, tiny, 1) >= 0.0);
  }
  SUBCASE("symmetric item at theta=b: integral equals twice the half interval") {
    const int half_n = 5001;
    const double hh = 1.0 / (half_n - 1);
    double half = 0.5 * (kl(0.0) + kl(1.0));
    for (int k = 1; k < half_n - 1; ++k) half += kl(hh * k);
    half *= hh;
    CHECK(value == doctest::Approx(2.0 * half).epsilon(1e-6));
  }
  SUBCASE("interval shrinks with the step count") {
    const double at_t4 = cdm::kl_info(theta, a, b, cfg, 4);  // delta = 1/2
    CHECK(at_t4 < value);
    CHECK_THROWS_AS(cdm::kl_info(theta, a, b, cfg, 0), ContractViolation);
  }
}

TEST_CASE("update_ability: prior mean, monotone response, simulator recovery") {
  cdm::TwoPlModel model(items_of({1.0, 1.5, 0.8}, {0.0, 0.5, -0.4}));

  SUBCASE("zero records returns the prior mean") {
    const cdm::AbilityEstimate est = model.update_ability({}, {});
    CHECK(est.theta == 0.0);
    CHECK(est.step == 0);
  }
  SUBCASE("a single correct answer pushes theta up") {
    std::vector<ResponseRecord> recs{{0, {0}, 1, 0}};
    CHECK(model.update_ability(recs, {}).theta > 0.0);
    recs[0].correct = 0;
    CHECK(model.update_ability(recs, {}).theta < 0.0);
  }
  SUBCASE("estimate is invariant to record ordering, bit-exactly") {
    std::vector<ResponseRecord> recs{{0, {0}, 1, 0}, {1, {0}, 0, 1}, {2, {0}, 1, 2},
                                     {0, {0}, 1, 3}};
    const double theta = model.update_ability(recs, {}).theta;
    std::reverse(recs.begin(), recs.end());
    CHECK(model.update_ability(recs, {}).theta == theta);
  }
  SUBCASE("20 simulated responses recover theta* = 1.2 within 0.4 on average") {
    prng::Engine rng(17);
    const double theta_star = 1.2;
    double total_abs_err = 0.0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
      std::vector<double> a(20), b(20);
      std::vector<ResponseRecord> recs;
      for (int q = 0; q < 20; ++q) {
        a[q] = rng.uniform(0.8, 2.0);
        b[q] = rng.uniform(-2.0, 2.0);
        recs.push_back({q, {0}, rng.bernoulli(sigma(a[q] * (theta_star - b[q]))), q});
      }
      cdm::TwoPlModel m(items_of(a, b));
      total_abs_err += std::abs(m.update_ability(recs, {}).theta - theta_star);
    }
    CHECK(total_abs_err / trials <= 0.4);
  }
}

TEST_CASE("eval_meta: trivial endpoints and the pairwise oracle") {
  cdm::TwoPlModel model(items_of({1, 1, 1, 1, 1, 1, 1, 1}, {-2, -1, -0.5, 0, 0.5, 1, 1.5, 2}));
  cdm::AbilityEstimate ability;
  ability.theta = 0.0;

  SUBCASE("predictions on the correct side give ACC 1") {
    // theta=0: easy items (b<0) predicted correct, hard ones incorrect.
    std::vector<ResponseRecord> meta{{0, {0}, 1, 0}, {1, {0}, 1, 1}, {6, {0}, 0, 2},
                                     {7, {0}, 0, 3}};
    const cdm::MetaEvaluation eval = model.eval_meta(ability, meta);
    CHECK(eval.acc == doctest::Approx(1.0));
    CHECK(eval.auc == doctest::Approx(1.0));  // perfectly separating scores
  }
  SUBCASE("all-same labels flag the AUC") {
    std::vector<ResponseRecord> meta{{0, {0}, 1, 0}, {1, {0}, 1, 1}};
    const cdm::MetaEvaluation eval = model.eval_meta(ability, meta);
    CHECK(eval.auc == 0.5);
    CHECK(eval.auc_degenerate);
  }
  SUBCASE("8-item meta set equals exhaustive pair enumeration") {
    std::vector<ResponseRecord> meta;
    prng::Engine rng(19);
    for (int q = 0; q < 8; ++q) meta.push_back({q, {0}, rng.bernoulli(0.5), q});
    const cdm::MetaEvaluation eval = model.eval_meta(ability, meta);

    double wins = 0.0;
    long pairs = 0;
    for (const auto& pos : meta) {
      if (pos.correct != 1) continue;
      for (const auto& neg : meta) {
        if (neg.correct != 0) continue;
        ++pairs;
        const double sp = model.predict(ability, pos.question);
        const double sn = model.predict(ability, neg.question);
        wins += sp > sn ? 1.0 : (sp == sn ? 0.5 : 0.0);
      }
    }
    if (pairs > 0) {
      CHECK(eval.auc == doctest::Approx(wins / pairs).epsilon(1e-12));
    }
    CHECK(eval.acc >= 0.0);
    CHECK(eval.acc <= 1.0);
  }
  SUBCASE("empty meta set is an error") {
    CHECK_THROWS_AS(model.eval_meta(ability, {}), DataError);
  }
}

TEST_CASE("calibrate: symmetry, degenerate items, quick recovery check") {
  SUBCASE("statistically identical items calibrate identically") {
    prng::Engine rng(23);
    std::vector<StudentLog> logs;
    for (int s = 0; s < 60; ++s) {
      StudentLog log;
      log.student = s;
      const int y = rng.bernoulli(0.6);
      log.records.push_back({0, {0}, y, 0});
      log.records.push_back({1, {0}, y, 1});  // same response pattern as item 0
      logs.push_back(log);
    }
    const cdm::CalibrationResult result = cdm::calibrate(logs, 2, {});
    CHECK(result.items.discrimination(0) ==
          doctest::Approx(result.items.discrimination(1)).epsilon(1e-6));
    CHECK(result.items.difficulty(0) == doctest::Approx(result.items.difficulty(1)).epsilon(1e-6));
  }
  SUBCASE("an all-correct item is clamped at the difficulty bound, no divergence") {
    prng::Engine rng(24);
    std::vector<StudentLog> logs;
    for (int s = 0; s < 300; ++s) {
      StudentLog log;
      log.student = s;
      const double theta = rng.normal();
      log.records.push_back({0, {0}, 1, 0});  // everyone right
      for (int q = 1; q <= 6; ++q) {          // anchor items spread in difficulty
        const double b = -2.0 + 0.7 * q;
        log.records.push_back({q, {0}, rng.bernoulli(sigma(theta - b)), q});
      }
      logs.push_back(log);
    }
    cdm::TwoPlConfig cfg;
    const cdm::CalibrationResult result = cdm::calibrate(logs, 7, cfg);
    CHECK(result.items.difficulty(0) == cfg.b_min);
    CHECK(std::isfinite(result.items.discrimination(0)));
    CHECK(result.items.discrimination(0) >= cfg.a_min);
    CHECK(result.items.discrimination(0) <= cfg.a_max);
  }
  SUBCASE("unanswered questions fall back to defaults with a warning") {
    std::vector<StudentLog> logs;
    StudentLog log;
    log.student = 0;
    log.records.push_back({0, {0}, 1, 0});
    logs.push_back(log);
    const cdm::CalibrationResult result = cdm::calibrate(logs, 3, {});
    CHECK(result.unanswered == std::vector<QuestionId>{1, 2});
    CHECK(result.items.discrimination(1) == 1.0);
    CHECK(result.items.difficulty(2) == 0.0);
  }
  SUBCASE("difficulty recovery on a small simulated world") {
    sim::WorldConfig wc;
    wc.students = 250;
    wc.questions = 30;
    wc.concepts = 4;
    wc.min_answers = 25;
    wc.max_answers = 30;
    wc.seed = 99;
    wc.low_a_min = 0.7;  // difficulty is weakly identified below this
    wc.low_a_max = 1.2;
    const sim::World world = sim::generate(wc);
    const cdm::CalibrationResult result = cdm::calibrate(world.bundle.logs, wc.questions, {});
    double mae = 0.0;
    for (int q = 0; q < wc.questions; ++q) {
      mae += std::abs(result.items.difficulty(q) - world.true_b(q));
    }
    mae /= wc.questions;
    CHECK(mae <= 0.3);
  }
}

TEST_CASE("item parameter table: 9-significant-digit round trip") {
  testutil::TempDir dir("items");
  cdm::ItemParams items = items_of({1.23456789012345, 0.2, 3.999999999},
                                   {-0.000123456789, 4.0, -3.33333333333});
  cdm::save_item_params(dir.file("items.csv"), items);
  const cdm::ItemParams loaded = cdm::load_item_params(dir.file("items.csv"), 3);
  cdm::save_item_params(dir.file("items2.csv"), loaded);
  CHECK(testutil::read_file(dir.file("items.csv")) == testutil::read_file(dir.file("items2.csv")));

  CHECK_THROWS_AS(cdm::load_item_params(dir.file("items.csv"), 5), DataError);
  testutil::write_file(dir.file("bad.csv"), "question_id,a,b\n0,1.0\n");
  CHECK_THROWS_AS(cdm::load_item_params(dir.file("bad.csv")), DataError);
}
