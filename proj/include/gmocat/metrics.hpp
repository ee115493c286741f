#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gmocat/types.hpp"

namespace gmocat::metrics {

struct AucResult {
  double value = 0.5;
  bool degenerate = false;  // fewer than one positive or one negative label
};

/// Pairwise-ranking AUC, ties counted 0.5. Computed with a rank-sum over the
/// sorted scores. Degenerate label sets report 0.5 with a flag.
AucResult auc(std::span<const int> labels, std::span<const double> scores);

/// Fraction of labels matched by thresholding scores at `threshold`.
double accuracy(std::span<const int> labels, std::span<const double> scores,
                double threshold = 0.5);

/// |union of selected concept sets| / concept_count.
double coverage(std::span<const std::vector<ConceptId>> selected_concepts,
                int concept_count);

/// Per-question fraction of sessions that selected the question.
std::vector<double> exposure_rates(std::span<const std::vector<QuestionId>> sessions,
                                   int question_count);

/// Mean |Q_i intersect Q_j| over all unordered session pairs. Needs >= 2 sessions.
double mean_overlap(std::span<const std::vector<QuestionId>> sessions);

/// Fraction of questions whose exposure rate strictly exceeds the cutoff.
double exposure_tail(std::span<const double> rates, double cutoff = 0.2);

/// Everything the evaluation protocol reports for one selector on one seed.
struct MetricReport {
  int schema_version = 1;
  std::string selector;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<int> checkpoint_steps;
  std::vector<double> auc;  // per checkpoint
  std::vector<double> acc;  // per checkpoint
  std::vector<double> cov_curve;  // mean coverage after step t, t = 1..max_steps
  std::vector<double> exposure;   // per question
  double exposure_tail = 0.0;     // fraction of questions with rate > 0.2
  double overlap = 0.0;
  int sessions = 0;
  int max_steps = 0;
};

std::string to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& json_text);
void save_report(const std::string& path, const MetricReport& report);
MetricReport load_report(const std::string& path);

/// Mean and standard deviation of every numeric field across seeds
/// (reports must agree on selector, checkpoints and shapes).
std::string aggregate_reports_json(std::span<const MetricReport> reports);

}  // namespace gmocat::metrics
