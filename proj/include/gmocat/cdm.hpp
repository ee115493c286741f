#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmocat/types.hpp"

namespace gmocat::cdm {

/// Per-question two-parameter-logistic item parameters.
struct ItemParams {
  Eigen::VectorXd discrimination;  // a > 0
  Eigen::VectorXd difficulty;      // b

  int size() const { return static_cast<int>(discrimination.size()); }
};

struct AbilityEstimate {
  double theta = 0.0;
  int step = 0;
  bool clamped = false;  // a non-finite intermediate was clamped during the update
};

struct MetaEvaluation {
  double acc = 0.0;
  double auc = 0.5;
  bool auc_degenerate = false;  // meta labels all identical; AUC reported as 0.5
};

struct TwoPlConfig {
  double a_min = 0.2, a_max = 4.0;
  double b_min = -4.0, b_max = 4.0;
  double theta_max = 6.0;
  double prior_variance = 1.0;     // Gaussian prior on theta, mean 0
  int newton_iterations = 20;      // damped second-order ascent steps
  int calibration_rounds = 8;      // alternating ability/item sweeps
  double item_ridge = 1e-3;        // L2 pull of a toward 1 and b toward 0
};

struct KliConfig {
  double interval_constant = 3.0;  // delta_t = c / sqrt(t)
  int quadrature_points = 101;     // composite Simpson, odd, >= 3
};

/// p = sigma(a * (theta - b)).
double predict_prob(double theta, double a, double b);

/// 2PL Fisher information I(theta) = a^2 p (1 - p).
double fisher_info(double theta, double a, double b);

/// Integral over [theta - delta_t, theta + delta_t] of
/// KL(Bern(p(theta)) || Bern(p(u))) du with delta_t = c / sqrt(t),
/// by composite Simpson quadrature. Requires t >= 1.
double kl_info(double theta, double a, double b, const KliConfig& cfg, int step);

class TwoPlModel;

/// Pluggable cognitive-diagnosis contract: predict a response probability,
/// refresh the ability estimate from the answered records, and score the
/// estimate on a meta set. Sessions own one AbilityEstimate each; the model
/// itself is immutable and safe to share.
class CognitiveModel {
 public:
  virtual ~CognitiveModel() = default;
  virtual double predict(const AbilityEstimate& ability, QuestionId q) const = 0;
  virtual AbilityEstimate update_ability(std::span<const ResponseRecord> answered,
                                         const AbilityEstimate& prior) const = 0;
  virtual MetaEvaluation eval_meta(const AbilityEstimate& ability,
                                   std::span<const ResponseRecord> meta) const = 0;
  /// Non-null when the model exposes IRT item parameters (MFI/KLI need them).
  virtual const TwoPlModel* as_two_pl() const { return nullptr; }
};

class TwoPlModel : public CognitiveModel {
 public:
  TwoPlModel(ItemParams items, TwoPlConfig cfg = {});

  double predict(const AbilityEstimate& ability, QuestionId q) const override;
  AbilityEstimate update_ability(std::span<const ResponseRecord> answered,
                                 const AbilityEstimate& prior) const override;
  MetaEvaluation eval_meta(const AbilityEstimate& ability,
                           std::span<const ResponseRecord> meta) const override;
  const TwoPlModel* as_two_pl() const override { return this; }

  double fisher(const AbilityEstimate& ability, QuestionId q) const;
  double kl(const AbilityEstimate& ability, QuestionId q, const KliConfig& cfg, int step) const;

  const ItemParams& items() const { return items_; }
  const TwoPlConfig& config() const { return cfg_; }

 private:
  ItemParams items_;
  TwoPlConfig cfg_;
};

struct CalibrationResult {
  ItemParams items;
  std::vector<QuestionId> unanswered;  // fell back to a=1, b=0
};

/// Joint penalized maximum likelihood over abilities and items by alternating
/// damped Newton sweeps, parameters clamped to the configured bounds.
/// Deterministic for fixed inputs.
CalibrationResult calibrate(std::span<const StudentLog> train_logs, int question_count,
                            const TwoPlConfig& cfg = {});

/// Text table `question_id,a,b` at 9 significant digits; save/load/save is
/// byte-identical.
void save_item_params(const std::string& path, const ItemParams& items);
ItemParams load_item_params(const std::string& path, int expected_count = -1);

}  // namespace gmocat::cdm
