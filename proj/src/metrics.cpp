#include "gmocat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "gmocat/errors.hpp"

namespace gmocat::metrics {

AucResult auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw DataError("auc: labels and scores differ in length (" +
                    std::to_string(labels.size()) + " vs " + std::to_string(scores.size()) + ")");
  }
  std::size_t positives = 0;
  for (int y : labels) positives += (y == 1);
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) return {0.5, true};

  // Rank-sum (Mann-Whitney U) with midranks for ties.
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) positive_rank_sum += midrank;
    }
    i = j;
  }
  const double u = positive_rank_sum -
                   static_cast<double>(positives) * (static_cast<double>(positives) + 1.0) / 2.0;
  return {u / (static_cast<double>(positives) * static_cast<double>(negatives)), false};
}

double accuracy(std::span<const int> labels, std::span<const double> scores,
                double threshold) {
  if (labels.size() != scores.size()) {
    throw DataError("accuracy: labels and scores differ in length");
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int predicted = scores[i] >= threshold ? 1 : 0;
    hits += (predicted == labels[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double coverage(std::span<const std::vector<ConceptId>> selected_concepts,
                int concept_count) {
  if (concept_count < 1) throw DataError("coverage: concept_count must be >= 1");
  std::unordered_set<ConceptId> covered;
  for (const auto& concepts : selected_concepts) {
    covered.insert(concepts.begin(), concepts.end());
  }
  return static_cast<double>(covered.size()) / static_cast<double>(concept_count);
}

std::vector<double> exposure_rates(std::span<const std::vector<QuestionId>> sessions,
                                   int question_count) {
  if (sessions.empty()) throw DataError("exposure_rates: need at least one session");
  std::vector<double> rates(question_count, 0.0);
  for (const auto& chosen : sessions) {
    for (QuestionId q : chosen) rates.at(q) += 1.0;
  }
  for (double& r : rates) r /= static_cast<double>(sessions.size());
  return rates;
}

double mean_overlap(std::span<const std::vector<QuestionId>> sessions) {
  if (sessions.size() < 2) throw DataError("mean_overlap: need at least two sessions");
  std::vector<std::unordered_set<QuestionId>> sets;
  sets.reserve(sessions.size());
  for (const auto& chosen : sessions) sets.emplace_back(chosen.begin(), chosen.end());

  double total = 0.0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j) {
      const auto& small = sets[i].size() <= sets[j].size() ? sets[i] : sets[j];
      const auto& large = sets[i].size() <= sets[j].size() ? sets[j] : sets[i];
      for (QuestionId q : small) total += large.count(q);
    }
  }
  const double pairs = static_cast<double>(sets.size()) *
                       (static_cast<double>(sets.size()) - 1.0) / 2.0;
  return total / pairs;
}

double exposure_tail(std::span<const double> rates, double cutoff) {
  if (rates.empty()) return 0.0;
  std::size_t above = 0;
  for (double r : rates) above += (r > cutoff);
  return static_cast<double>(above) / static_cast<double>(rates.size());
}

namespace {
using nlohmann::json;

json report_to_json_obj(const MetricReport& r) {
  json j;
  j["schema_version"] = r.schema_version;
  j["selector"] = r.selector;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  j["checkpoint_steps"] = r.checkpoint_steps;
  j["auc"] = r.auc;
  j["acc"] = r.acc;
  j["cov_curve"] = r.cov_curve;
  j["exposure"] = r.exposure;
  j["exposure_tail_gt_0p2"] = r.exposure_tail;
  j["overlap"] = r.overlap;
  j["sessions"] = r.sessions;
  j["max_steps"] = r.max_steps;
  return j;
}
}  // namespace

std::string to_json(const MetricReport& report) {
  return report_to_json_obj(report).dump(2);
}

MetricReport report_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  MetricReport r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != 1) {
    throw DataError("unsupported report schema version " + std::to_string(r.schema_version));
  }
  r.selector = j.at("selector").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.checkpoint_steps = j.at("checkpoint_steps").get<std::vector<int>>();
  r.auc = j.at("auc").get<std::vector<double>>();
  r.acc = j.at("acc").get<std::vector<double>>();
  r.cov_curve = j.at("cov_curve").get<std::vector<double>>();
  r.exposure = j.at("exposure").get<std::vector<double>>();
  r.exposure_tail = j.at("exposure_tail_gt_0p2").get<double>();
  r.overlap = j.at("overlap").get<double>();
  r.sessions = j.at("sessions").get<int>();
  r.max_steps = j.at("max_steps").get<int>();
  return r;
}

void save_report(const std::string& path, const MetricReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << to_json(report) << "\n";
}

MetricReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open report");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return report_from_json(text);
}

namespace {
json mean_std(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var = values.size() > 1 ? var / (n - 1.0) : 0.0;
  return json{{"mean", mean}, {"std", std::sqrt(var)}};
}
}  // namespace

std::string aggregate_reports_json(std::span<const MetricReport> reports) {
  if (reports.empty()) throw DataError("aggregate_reports: no reports");
  const MetricReport& first = reports.front();
  for (const MetricReport& r : reports) {
    if (r.selector != first.selector || r.checkpoint_steps != first.checkpoint_steps ||
        r.cov_curve.size() != first.cov_curve.size()) {
      throw DataError("aggregate_reports: reports are not comparable");
    }
  }

  json j;
  j["schema_version"] = 1;
  j["selector"] = first.selector;
  j["config_hash"] = first.config_hash;
  j["runs"] = reports.size();
  json seeds = json::array();
  for (const MetricReport& r : reports) seeds.push_back(r.seed);
  j["seeds"] = seeds;
  j["checkpoint_steps"] = first.checkpoint_steps;

  auto across = [&](auto getter) {
    std::vector<double> v;
    v.reserve(reports.size());
    for (const MetricReport& r : reports) v.push_back(getter(r));
    return mean_std(v);
  };

  json auc_entries = json::array();
  json acc_entries = json::array();
  for (std::size_t c = 0; c < first.checkpoint_steps.size(); ++c) {
    auc_entries.push_back(across([&](const MetricReport& r) { return r.auc[c]; }));
    acc_entries.push_back(across([&](const MetricReport& r) { return r.acc[c]; }));
  }
  j["auc"] = auc_entries;
  j["acc"] = acc_entries;

  json cov = json::array();
  for (std::size_t t = 0; t < first.cov_curve.size(); ++t) {
    cov.push_back(across([&](const MetricReport& r) { return r.cov_curve[t]; }));
  }
  j["cov_curve"] = cov;
  j["overlap"] = across([](const MetricReport& r) { return r.overlap; });
  j["exposure_tail_gt_0p2"] = across([](const MetricReport& r) { return r.exposure_tail; });
  return j.dump(2);
}

}  // namespace gmocat::metrics
