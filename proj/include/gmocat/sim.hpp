#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmocat/types.hpp"

namespace gmocat::sim {

/// Synthetic 2PL world for desk-scale experiments and tests. Half of the
/// question pool is highly informative, half is weak, so item choice matters;
/// informative questions are answered more often, so popularity correlates
/// with quality; concept frequencies are skewed so coverage is not free.
struct WorldConfig {
  int students = 200;
  int questions = 100;
  int concepts = 8;
  int min_answers = 60;
  int max_answers = 80;
  std::uint64_t seed = 1;

  double low_a_min = 0.2, low_a_max = 0.6;    // weak half
  double high_a_min = 1.4, high_a_max = 2.8;  // informative half
  double b_min = -2.2, b_max = 2.2;
  double informative_answer_bias = 2.0;  // answer-probability multiplier for informative items
};

struct World {
  DatasetBundle bundle;
  Eigen::VectorXd true_theta;  // per student (after any filtering; none at these sizes)
  Eigen::VectorXd true_a;
  Eigen::VectorXd true_b;
  std::vector<std::uint8_t> informative;  // per question
};

World generate(const WorldConfig& cfg);

/// Writes the generated world to the standard records / question-concept CSV
/// files so the file-based loaders replay it.
void write_files(const World& world, const std::string& records_path,
                 const std::string& question_concepts_path);

}  // namespace gmocat::sim
