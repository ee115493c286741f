#include "gmocat/sim.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "gmocat/errors.hpp"
#include "gmocat/prng.hpp"

namespace gmocat::sim {

World generate(const WorldConfig& cfg) {
  if (cfg.questions < cfg.concepts || cfg.concepts < 1) {
    throw ConfigError("synthetic world needs at least one question per concept");
  }
  if (cfg.min_answers < 2 || cfg.max_answers > cfg.questions ||
      cfg.min_answers > cfg.max_answers) {
    throw ConfigError("synthetic world answer range is invalid");
  }
  prng::Engine rng(prng::derive(cfg.seed, {prng::kWorld}));

  World world;
  world.true_a.resize(cfg.questions);
  world.true_b.resize(cfg.questions);
  world.informative.assign(cfg.questions, 0);

  // Half the pool is informative, assigned at random.
  std::vector<int> ids(cfg.questions);
  std::iota(ids.begin(), ids.end(), 0);
  rng.shuffle(ids);
  for (int i = 0; i < cfg.questions / 2; ++i) world.informative[ids[i]] = 1;

  for (int q = 0; q < cfg.questions; ++q) {
    world.true_a(q) = world.informative[q] ? rng.uniform(cfg.high_a_min, cfg.high_a_max)
                                           : rng.uniform(cfg.low_a_min, cfg.low_a_max);
    world.true_b(q) = rng.uniform(cfg.b_min, cfg.b_max);
  }

  // Skewed concept frequencies; informative questions lean toward the common
  // concepts and weak ones toward the rare concepts, so breadth of coverage
  // costs estimation quality.
  std::vector<double> weights(cfg.concepts);
  for (int c = 0; c < cfg.concepts; ++c) weights[c] = std::pow(0.65, c);
  auto sample_concept = [&](bool reversed) {
    double total = 0.0;
    for (int c = 0; c < cfg.concepts; ++c) total += reversed ? weights[cfg.concepts - 1 - c] : weights[c];
    double u = rng.uniform() * total;
    for (int c = 0; c < cfg.concepts; ++c) {
      const double w = reversed ? weights[cfg.concepts - 1 - c] : weights[c];
      if (u < w) return c;
      u -= w;
    }
    return cfg.concepts - 1;
  };

  world.bundle.question_concepts.resize(cfg.questions);
  for (int q = 0; q < cfg.questions; ++q) {
    int primary;
    if (q < cfg.concepts) {
      primary = q;  // guarantees every concept is covered and pins dense ids
    } else {
      primary = sample_concept(!world.informative[q]);
    }
    std::vector<ConceptId> concepts{primary};
    if (rng.uniform() < 0.3) {
      const int second = sample_concept(!world.informative[q]);
      if (second != primary) concepts.push_back(second);
    }
    std::sort(concepts.begin(), concepts.end());
    world.bundle.question_concepts[q] = std::move(concepts);
  }

  world.bundle.question_count = cfg.questions;
  world.bundle.concept_count = cfg.concepts;
  for (int q = 0; q < cfg.questions; ++q) {
    world.bundle.question_names.push_back(std::to_string(q));
  }
  for (int c = 0; c < cfg.concepts; ++c) {
    world.bundle.concept_names.push_back(std::to_string(c));
  }

  // Students: latent ability from a standard normal; answered questions are a
  // weighted sample so informative questions become the popular ones.
  world.true_theta.resize(cfg.students);
  for (int s = 0; s < cfg.students; ++s) {
    const double theta = rng.normal();
    world.true_theta(s) = theta;

    const int n_answers = rng.uniform_int(cfg.min_answers, cfg.max_answers);
    std::vector<int> remaining(cfg.questions);
    std::iota(remaining.begin(), remaining.end(), 0);
    std::vector<int> chosen;
    chosen.reserve(n_answers);
    for (int k = 0; k < n_answers; ++k) {
      double total = 0.0;
      for (int q : remaining) {
        total += world.informative[q] ? cfg.informative_answer_bias : 1.0;
      }
      double u = rng.uniform() * total;
      std::size_t pick = remaining.size() - 1;
      for (std::size_t i = 0; i < remaining.size(); ++i) {
        const double w = world.informative[remaining[i]] ? cfg.informative_answer_bias : 1.0;
        if (u < w) {
          pick = i;
          break;
        }
        u -= w;
      }
      chosen.push_back(remaining[pick]);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    StudentLog log;
    log.student = s;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const int q = chosen[i];
      const double p = 1.0 / (1.0 + std::exp(-world.true_a(q) * (theta - world.true_b(q))));
      ResponseRecord rec;
      rec.question = q;
      rec.concepts = world.bundle.question_concepts[q];
      rec.correct = rng.bernoulli(p);
      rec.position = static_cast<int>(i);
      log.records.push_back(std::move(rec));
    }
    world.bundle.logs.push_back(std::move(log));
    world.bundle.student_names.push_back(std::to_string(s));
  }
  return world;
}

void write_files(const World& world, const std::string& records_path,
                 const std::string& question_concepts_path) {
  {
    std::ofstream out(question_concepts_path);
    if (!out) throw DataError(question_concepts_path + ": cannot open for writing");
    out << "question_id,concept_ids\n";
    for (int q = 0; q < world.bundle.question_count; ++q) {
      out << q << ",";
      const auto& concepts = world.bundle.question_concepts[q];
      for (std::size_t i = 0; i < concepts.size(); ++i) {
        if (i > 0) out << ";";
        out << concepts[i];
      }
      out << "\n";
    }
  }
  {
    std::ofstream out(records_path);
    if (!out) throw DataError(records_path + ": cannot open for writing");
    out << "student_id,question_id,correct\n";
    for (const StudentLog& log : world.bundle.logs) {
      for (const ResponseRecord& rec : log.records) {
        out << log.student << "," << rec.question << "," << rec.correct << "\n";
      }
    }
  }
}

}  // namespace gmocat::sim
