#include "gmocat/cdm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gmocat/errors.hpp"
#include "gmocat/metrics.hpp"

namespace gmocat::cdm {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(sigma(z)) = -log1p(exp(-z)), stable for both tails.
double log_sigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

double clamp(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

}  // namespace

double predict_prob(double theta, double a, double b) {
  return sigmoid(a * (theta - b));
}

double fisher_info(double theta, double a, double b) {
  const double z = a * (theta - b);
  return a * a * sigmoid(z) * sigmoid(-z);
}

double kl_info(double theta, double a, double b, const KliConfig& cfg, int step) {
  if (step < 1) throw ContractViolation("kl_info: step must be >= 1");
  if (cfg.quadrature_points < 3 || cfg.quadrature_points % 2 == 0) {
    throw ConfigError("kl_info: quadrature point count must be odd and >= 3");
  }
  if (!(cfg.interval_constant > 0)) {
    throw ConfigError("kl_info: interval constant must be positive");
  }
  const double delta = cfg.interval_constant / std::sqrt(static_cast<double>(step));
  const double z0 = a * (theta - b);
  const double p = sigmoid(z0);
  const double q0 = sigmoid(-z0);  // 1 - p without cancellation

  // KL(Bern(p(theta)) || Bern(p(u))), evaluated through log-sigmoids so the
  // tails stay finite.
  auto integrand = [&](double u) {
    const double z1 = a * (u - b);
    return p * (log_sigmoid(z0) - log_sigmoid(z1)) +
           q0 * (log_sigmoid(-z0) - log_sigmoid(-z1));
  };

  const int n = cfg.quadrature_points;
  const double h = 2.0 * delta / static_cast<double>(n - 1);
  double sum = integrand(theta - delta) + integrand(theta + delta);
  for (int k = 1; k < n - 1; ++k) {
    const double u = theta - delta + h * static_cast<double>(k);
    sum += (k % 2 == 1 ? 4.0 : 2.0) * integrand(u);
  }
  return sum * h / 3.0;
}

TwoPlModel::TwoPlModel(ItemParams items, TwoPlConfig cfg)
    : items_(std::move(items)), cfg_(cfg) {
  if (items_.discrimination.size() != items_.difficulty.size()) {
    throw DataError("item parameter vectors differ in length");
  }
  for (int q = 0; q < items_.size(); ++q) {
    if (!(items_.discrimination[q] > 0) || !std::isfinite(items_.discrimination[q]) ||
        !std::isfinite(items_.difficulty[q])) {
      throw DataError("item " + std::to_string(q) + " has invalid parameters");
    }
  }
}

double TwoPlModel::predict(const AbilityEstimate& ability, QuestionId q) const {
  return predict_prob(ability.theta, items_.discrimination(q), items_.difficulty(q));
}

AbilityEstimate TwoPlModel::update_ability(std::span<const ResponseRecord> answered,
                                           const AbilityEstimate& prior) const {
  AbilityEstimate out;
  out.step = prior.step + 1;
  if (answered.empty()) {
    out.theta = 0.0;  // prior mean
    out.step = 0;
    return out;
  }

  // Sort a copy so the estimate is bit-identical under record permutation.
  std::vector<ResponseRecord> records(answered.begin(), answered.end());
  std::sort(records.begin(), records.end(), [](const ResponseRecord& l, const ResponseRecord& r) {
    if (l.question != r.question) return l.question < r.question;
    return l.correct < r.correct;
  });

  const double inv_prior_var = 1.0 / cfg_.prior_variance;
  double theta = clamp(prior.theta, -cfg_.theta_max, cfg_.theta_max);
  for (int it = 0; it < cfg_.newton_iterations; ++it) {
    double grad = -theta * inv_prior_var;
    double curvature = -inv_prior_var;
    for (const ResponseRecord& rec : records) {
      const double a = items_.discrimination(rec.question);
      const double b = items_.difficulty(rec.question);
      const double z = a * (theta - b);
      const double p = sigmoid(z);
      grad += a * (static_cast<double>(rec.correct) - p);
      curvature -= a * a * p * sigmoid(-z);
    }
    double step = -grad / curvature;
    if (!std::isfinite(step)) {
      out.clamped = true;
      step = 0.0;
    }
    step = clamp(step, -1.0, 1.0);  // damping
    theta = clamp(theta + step, -cfg_.theta_max, cfg_.theta_max);
  }
  out.theta = theta;
  return out;
}

MetaEvaluation TwoPlModel::eval_meta(const AbilityEstimate& ability,
                                     std::span<const ResponseRecord> meta) const {
  if (meta.empty()) throw DataError("eval_meta: meta set is empty");
  std::vector<int> labels(meta.size());
  std::vector<double> scores(meta.size());
  for (std::size_t i = 0; i < meta.size(); ++i) {
    labels[i] = meta[i].correct;
    scores[i] = predict(ability, meta[i].question);
  }
  MetaEvaluation eval;
  eval.acc = metrics::accuracy(labels, scores, 0.5);
  const metrics::AucResult auc = metrics::auc(labels, scores);
  eval.auc = auc.value;
  eval.auc_degenerate = auc.degenerate;
  return eval;
}

double TwoPlModel::fisher(const AbilityEstimate& ability, QuestionId q) const {
  return fisher_info(ability.theta, items_.discrimination(q), items_.difficulty(q));
}

double TwoPlModel::kl(const AbilityEstimate& ability, QuestionId q, const KliConfig& cfg,
                      int step) const {
  return kl_info(ability.theta, items_.discrimination(q), items_.difficulty(q), cfg, step);
}

CalibrationResult calibrate(std::span<const StudentLog> train_logs, int question_count,
                            const TwoPlConfig& cfg) {
  struct Response {
    int student;
    int correct;
  };
  std::vector<std::vector<Response>> by_question(question_count);
  for (std::size_t s = 0; s < train_logs.size(); ++s) {
    for (const ResponseRecord& rec : train_logs[s].records) {
      by_question.at(rec.question).push_back({static_cast<int>(s), rec.correct});
    }
  }

  CalibrationResult result;
  result.items.discrimination = Eigen::VectorXd::Ones(question_count);
  result.items.difficulty = Eigen::VectorXd::Zero(question_count);
  for (QuestionId q = 0; q < question_count; ++q) {
    if (by_question[q].empty()) result.unanswered.push_back(q);
  }

  std::vector<double> theta(train_logs.size(), 0.0);
  const double inv_prior_var = 1.0 / cfg.prior_variance;

  for (int round = 0; round < cfg.calibration_rounds; ++round) {
    // Ability sweep.
    for (std::size_t s = 0; s < train_logs.size(); ++s) {
      double t = theta[s];
      for (int it = 0; it < cfg.newton_iterations; ++it) {
        double grad = -t * inv_prior_var;
        double curvature = -inv_prior_var;
        for (const ResponseRecord& rec : train_logs[s].records) {
          const double a = result.items.discrimination(rec.question);
          const double b = result.items.difficulty(rec.question);
          const double p = sigmoid(a * (t - b));
          grad += a * (static_cast<double>(rec.correct) - p);
          curvature -= a * a * p * (1.0 - p);
        }
        t = clamp(t + clamp(-grad / curvature, -1.0, 1.0), -cfg.theta_max, cfg.theta_max);
      }
      theta[s] = t;
    }

    // Identification: the 2PL metric is fixed by standardizing abilities to
    // mean 0, sd 1 each round; otherwise the prior compresses the scale and
    // discriminations inflate to compensate.
    if (theta.size() > 1) {
      double mean = 0.0;
      for (double t : theta) mean += t;
      mean /= static_cast<double>(theta.size());
      double var = 0.0;
      for (double t : theta) var += (t - mean) * (t - mean);
      var /= static_cast<double>(theta.size());
      if (var > 1e-12) {
        const double inv_sd = 1.0 / std::sqrt(var);
        for (double& t : theta) t = (t - mean) * inv_sd;
      }
    }

    // Item sweep. The item log-likelihood is concave in a and in b
    // separately, so damped coordinate-wise Newton is monotone where the
    // joint 2x2 step is not (its cross terms go indefinite on skewed items).
    // A small ridge pulls a toward 1 and b toward 0; bounds are projected
    // every step, which is what carries all-correct/all-wrong items.
    for (QuestionId q = 0; q < question_count; ++q) {
      if (by_question[q].empty()) continue;
      double a = result.items.discrimination(q);
      double b = result.items.difficulty(q);
      for (int it = 0; it < cfg.newton_iterations; ++it) {
        double gb = -2.0 * cfg.item_ridge * b;
        double hbb = -2.0 * cfg.item_ridge;
        for (const Response& resp : by_question[q]) {
          const double p = sigmoid(a * (theta[resp.student] - b));
          gb -= a * (static_cast<double>(resp.correct) - p);
          hbb -= p * (1.0 - p) * a * a;
        }
        b = clamp(b + clamp(-gb / hbb, -0.5, 0.5), cfg.b_min, cfg.b_max);

        double ga = -2.0 * cfg.item_ridge * (a - 1.0);
        double haa = -2.0 * cfg.item_ridge;
        for (const Response& resp : by_question[q]) {
          const double d = theta[resp.student] - b;
          const double p = sigmoid(a * d);
          ga += (static_cast<double>(resp.correct) - p) * d;
          haa -= p * (1.0 - p) * d * d;
        }
        a = clamp(a + clamp(-ga / haa, -0.5, 0.5), cfg.a_min, cfg.a_max);
      }
      result.items.discrimination(q) = a;
      result.items.difficulty(q) = b;
    }
  }
  return result;
}

void save_item_params(const std::string& path, const ItemParams& items) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "question_id,a,b\n";
  char buf[64];
  for (int q = 0; q < items.size(); ++q) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g", q, items.discrimination(q),
                  items.difficulty(q));
    out << buf << "\n";
  }
}

ItemParams load_item_params(const std::string& path, int expected_count) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open item parameter table");
  std::string line;
  if (!std::getline(in, line) || line != "question_id,a,b") {
    throw DataError(path + ":1: expected header 'question_id,a,b'");
  }
  std::vector<double> a, b;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    int q = -1;
    double av = 0.0, bv = 0.0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf", &q, &av, &bv) != 3 ||
        q != static_cast<int>(a.size())) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed item row");
    }
    a.push_back(av);
    b.push_back(bv);
  }
  if (expected_count >= 0 && static_cast<int>(a.size()) != expected_count) {
    throw DataError(path + ": expected " + std::to_string(expected_count) + " items, found " +
                    std::to_string(a.size()));
  }
  ItemParams items;
  items.discrimination = Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
  items.difficulty = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  return items;
}

}  // namespace gmocat::cdm
