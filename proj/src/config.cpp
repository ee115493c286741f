#include "gmocat/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gmocat/errors.hpp"

namespace gmocat::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

using KeyValues = std::map<std::string, std::string>;  // "section.key" -> raw value

KeyValues parse_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  KeyValues out;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos || section.empty()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    out[section + "." + key] = trim(t.substr(eq + 1));
  }
  return out;
}

class Reader {
 public:
  explicit Reader(KeyValues values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void get(const std::string& key, std::string& out) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    out = it->second;
    consumed_.push_back(key);
  }

  void get(const std::string& key, double& out) {
    std::string raw;
    get(key, raw);
    if (raw.empty()) return;
    try {
      std::size_t pos = 0;
      out = std::stod(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument(raw);
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a number, got '" + raw + "'");
    }
  }

  void get(const std::string& key, int& out) {
    double v = static_cast<double>(out);
    get(key, v);
    if (v != std::floor(v)) throw ConfigError(key + ": expected an integer");
    out = static_cast<int>(v);
  }

  void get(const std::string& key, std::uint64_t& out) {
    std::string raw;
    get(key, raw);
    if (raw.empty()) return;
    try {
      out = std::stoull(raw);
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected an unsigned integer, got '" + raw + "'");
    }
  }

  void get(const std::string& key, bool& out) {
    std::string raw;
    get(key, raw);
    if (raw.empty()) return;
    if (raw == "true" || raw == "1") {
      out = true;
    } else if (raw == "false" || raw == "0") {
      out = false;
    } else {
      throw ConfigError(key + ": expected true/false, got '" + raw + "'");
    }
  }

  template <class T>
  void get_list(const std::string& key, std::vector<T>& out) {
    std::string raw;
    get(key, raw);
    if (raw.empty()) return;
    std::vector<T> parsed;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        if constexpr (std::is_same_v<T, int>) {
          parsed.push_back(std::stoi(item));
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          parsed.push_back(std::stoull(item));
        } else {
          parsed.push_back(std::stod(item));
        }
      } catch (const std::exception&) {
        throw ConfigError(key + ": malformed list entry '" + item + "'");
      }
    }
    out = std::move(parsed);
  }

  /// Every key must have been consumed by a get(); leftovers are unknown keys.
  void reject_unknown() const {
    for (const auto& [key, value] : values_) {
      if (std::find(consumed_.begin(), consumed_.end(), key) == consumed_.end()) {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  }

 private:
  KeyValues values_;
  std::vector<std::string> consumed_;
};

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  KeyValues raw;
  if (!path.empty()) raw = parse_ini(path);
  for (const std::string& ov : overrides) {
    const std::size_t eq = ov.find('=');
    if (eq == std::string::npos || ov.find('.') == std::string::npos ||
        ov.find('.') > eq) {
      throw ConfigError("override '" + ov + "' must look like section.key=value");
    }
    raw[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
  }

  ExperimentConfig cfg;

  // The profile sets scale defaults; explicit keys override them.
  auto profile_it = raw.find("run.profile");
  if (profile_it != raw.end()) cfg.profile = profile_it->second;
  if (cfg.profile == "paper") {
    cfg.embedding_dim = 128;
    cfg.batch_size = 128;
  } else if (cfg.profile != "desk") {
    throw ConfigError("run.profile must be 'desk' or 'paper'");
  }

  Reader reader(std::move(raw));
  reader.get("dataset.source", cfg.dataset_source);
  reader.get("dataset.records", cfg.records_path);
  reader.get("dataset.question_concepts", cfg.question_concepts_path);
  reader.get("dataset.prerequisite_edges", cfg.prerequisite_edges_path);
  reader.get("dataset.min_records", cfg.min_records);
  reader.get("dataset.synthetic_students", cfg.synthetic_students);
  reader.get("dataset.synthetic_questions", cfg.synthetic_questions);
  reader.get("dataset.synthetic_concepts", cfg.synthetic_concepts);
  reader.get("dataset.synthetic_seed", cfg.synthetic_seed);

  reader.get("split.train", cfg.train_ratio);
  reader.get("split.val", cfg.val_ratio);
  reader.get("split.test", cfg.test_ratio);
  reader.get("split.candidate_fraction", cfg.candidate_fraction);

  reader.get("popularity.fraction", cfg.popularity_fraction);

  reader.get("cdm.a_min", cfg.two_pl.a_min);
  reader.get("cdm.a_max", cfg.two_pl.a_max);
  reader.get("cdm.b_min", cfg.two_pl.b_min);
  reader.get("cdm.b_max", cfg.two_pl.b_max);
  reader.get("cdm.theta_max", cfg.two_pl.theta_max);
  reader.get("cdm.prior_variance", cfg.two_pl.prior_variance);
  reader.get("cdm.newton_iterations", cfg.two_pl.newton_iterations);
  reader.get("cdm.calibration_rounds", cfg.two_pl.calibration_rounds);
  reader.get("cdm.kli_constant", cfg.kli.interval_constant);
  reader.get("cdm.kli_points", cfg.kli.quadrature_points);

  reader.get("model.embedding_dim", cfg.embedding_dim);
  reader.get("model.dropout", cfg.dropout);
  reader.get("model.leaky_relu_slope", cfg.leaky_relu_slope);
  reader.get("model.use_relation_aggregator", cfg.use_relation_aggregator);
  reader.get("model.scalar_critic", cfg.scalar_critic);

  reader.get("train.gamma", cfg.gamma);
  reader.get("train.clip", cfg.clip_epsilon);
  reader.get("train.alpha", cfg.alpha);
  reader.get("train.learning_rate", cfg.learning_rate);
  reader.get("train.batch_size", cfg.batch_size);
  reader.get("train.ppo_epochs", cfg.ppo_epochs);
  reader.get("train.epochs", cfg.epochs);
  reader.get("train.normalize_advantage", cfg.normalize_advantage);
  std::vector<double> w{cfg.weights.quality, cfg.weights.diversity, cfg.weights.novelty};
  reader.get_list("train.w", w);
  if (w.size() != 3) throw ConfigError("train.w must have exactly 3 entries");
  cfg.weights = {w[0], w[1], w[2]};

  reader.get("session.max_steps", cfg.max_steps);
  reader.get_list("session.checkpoints", cfg.checkpoints);

  reader.get("eval.selector", cfg.selector);
  reader.get("eval.mode", cfg.eval_mode);
  reader.get("eval.checkpoint", cfg.checkpoint_path);

  reader.get_list("run.seeds", cfg.seeds);
  reader.get("run.out_dir", cfg.out_dir);
  reader.get("run.jobs", cfg.jobs);
  reader.get("run.profile", cfg.profile);

  reader.reject_unknown();
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (dataset_source != "synthetic" && dataset_source != "files") {
    throw ConfigError("dataset.source must be 'synthetic' or 'files'");
  }
  if (dataset_source == "files" && (records_path.empty() || question_concepts_path.empty())) {
    throw ConfigError("dataset.source=files requires dataset.records and dataset.question_concepts");
  }
  if (min_records < 0) throw ConfigError("dataset.min_records must be >= 0");
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  if (!(candidate_fraction > 0.0 && candidate_fraction < 1.0)) {
    throw ConfigError("split.candidate_fraction must lie in (0,1)");
  }
  if (!(popularity_fraction > 0.0 && popularity_fraction < 1.0)) {
    throw ConfigError("popularity.fraction must lie in (0,1)");
  }
  if (kli.quadrature_points < 3 || kli.quadrature_points % 2 == 0) {
    throw ConfigError("cdm.kli_points must be odd and >= 3");
  }
  if (!(kli.interval_constant > 0)) throw ConfigError("cdm.kli_constant must be positive");
  if (embedding_dim < 1) throw ConfigError("model.embedding_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0,1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("train.gamma must lie in [0,1]");
  if (!(clip_epsilon > 0.0)) throw ConfigError("train.clip must be positive");
  if (!(alpha > 0.0)) throw ConfigError("train.alpha must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (ppo_epochs < 1) throw ConfigError("train.ppo_epochs must be >= 1");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  weights.validate();
  if (max_steps < 1) throw ConfigError("session.max_steps must be >= 1");
  for (int cp : checkpoints) {
    if (cp < 1 || cp > max_steps) {
      throw ConfigError("session.checkpoints entries must lie in [1, max_steps]");
    }
  }
  if (selector != "policy" && selector != "random" && selector != "mfi" && selector != "kli") {
    throw ConfigError("eval.selector must be one of policy|random|mfi|kli");
  }
  if (eval_mode != "sample" && eval_mode != "argmax") {
    throw ConfigError("eval.mode must be 'sample' or 'argmax'");
  }
  if (seeds.empty()) throw ConfigError("run.seeds must not be empty");
  if (jobs < 1) throw ConfigError("run.jobs must be >= 1");
}

std::string ExperimentConfig::canonical_experiment_string() const {
  std::ostringstream out;
  out << "dataset.source=" << dataset_source << "\n";
  out << "dataset.records=" << records_path << "\n";
  out << "dataset.question_concepts=" << question_concepts_path << "\n";
  out << "dataset.prerequisite_edges=" << prerequisite_edges_path << "\n";
  out << "dataset.min_records=" << min_records << "\n";
  out << "dataset.synthetic_students=" << synthetic_students << "\n";
  out << "dataset.synthetic_questions=" << synthetic_questions << "\n";
  out << "dataset.synthetic_concepts=" << synthetic_concepts << "\n";
  out << "dataset.synthetic_seed=" << synthetic_seed << "\n";
  out << "split.train=" << fmt_double(train_ratio) << "\n";
  out << "split.val=" << fmt_double(val_ratio) << "\n";
  out << "split.test=" << fmt_double(test_ratio) << "\n";
  out << "split.candidate_fraction=" << fmt_double(candidate_fraction) << "\n";
  out << "popularity.fraction=" << fmt_double(popularity_fraction) << "\n";
  out << "cdm.a_min=" << fmt_double(two_pl.a_min) << "\n";
  out << "cdm.a_max=" << fmt_double(two_pl.a_max) << "\n";
  out << "cdm.b_min=" << fmt_double(two_pl.b_min) << "\n";
  out << "cdm.b_max=" << fmt_double(two_pl.b_max) << "\n";
  out << "cdm.theta_max=" << fmt_double(two_pl.theta_max) << "\n";
  out << "cdm.prior_variance=" << fmt_double(two_pl.prior_variance) << "\n";
  out << "cdm.newton_iterations=" << two_pl.newton_iterations << "\n";
  out << "cdm.calibration_rounds=" << two_pl.calibration_rounds << "\n";
  out << "cdm.kli_constant=" << fmt_double(kli.interval_constant) << "\n";
  out << "cdm.kli_points=" << kli.quadrature_points << "\n";
  out << "model.embedding_dim=" << embedding_dim << "\n";
  out << "model.dropout=" << fmt_double(dropout) << "\n";
  out << "model.leaky_relu_slope=" << fmt_double(leaky_relu_slope) << "\n";
  out << "model.use_relation_aggregator=" << (use_relation_aggregator ? "true" : "false") << "\n";
  out << "model.scalar_critic=" << (scalar_critic ? "true" : "false") << "\n";
  out << "train.gamma=" << fmt_double(gamma) << "\n";
  out << "train.clip=" << fmt_double(clip_epsilon) << "\n";
  out << "train.alpha=" << fmt_double(alpha) << "\n";
  out << "train.learning_rate=" << fmt_double(learning_rate) << "\n";
  out << "train.batch_size=" << batch_size << "\n";
  out << "train.ppo_epochs=" << ppo_epochs << "\n";
  out << "train.epochs=" << epochs << "\n";
  out << "train.normalize_advantage=" << (normalize_advantage ? "true" : "false") << "\n";
  out << "train.w=" << fmt_double(weights.quality) << "," << fmt_double(weights.diversity) << ","
      << fmt_double(weights.novelty) << "\n";
  out << "session.max_steps=" << max_steps << "\n";
  out << "session.checkpoints=";
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    out << (i ? "," : "") << checkpoints[i];
  }
  out << "\n";
  return out.str();
}

std::string ExperimentConfig::experiment_hash() const {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(canonical_experiment_string())));
  return buf;
}

model::ModelConfig ExperimentConfig::model_config(int question_count, int concept_count) const {
  model::ModelConfig mc;
  mc.question_count = question_count;
  mc.concept_count = concept_count;
  mc.embedding_dim = embedding_dim;
  mc.dropout = dropout;
  mc.leaky_relu_slope = leaky_relu_slope;
  mc.use_relation_aggregator = use_relation_aggregator;
  mc.scalar_critic = scalar_critic;
  return mc;
}

policy::TrainConfig ExperimentConfig::train_config() const {
  policy::TrainConfig tc;
  tc.gamma = gamma;
  tc.clip_epsilon = clip_epsilon;
  tc.alpha = alpha;
  tc.adam.learning_rate = learning_rate;
  tc.batch_size = batch_size;
  tc.ppo_epochs = ppo_epochs;
  tc.normalize_advantage = normalize_advantage;
  if (scalar_critic) {
    tc.w = Eigen::VectorXd::Ones(1);  // weights already applied at storage time
  } else {
    tc.w = Eigen::VectorXd(3);
    tc.w << weights.quality, weights.diversity, weights.novelty;
  }
  return tc;
}

session::SessionConfig ExperimentConfig::session_config() const {
  session::SessionConfig sc;
  sc.max_steps = max_steps;
  sc.checkpoints = checkpoints;
  return sc;
}

session::TrainLoopConfig ExperimentConfig::train_loop_config(std::uint64_t seed) const {
  session::TrainLoopConfig tl;
  tl.train = train_config();
  tl.session = session_config();
  tl.weights = weights;
  tl.scalar_reward = scalar_critic;
  tl.epochs = epochs;
  tl.candidate_fraction = candidate_fraction;
  tl.seed = seed;
  tl.jobs = jobs;
  return tl;
}

sim::WorldConfig ExperimentConfig::world_config() const {
  sim::WorldConfig wc;
  wc.students = synthetic_students;
  wc.questions = synthetic_questions;
  wc.concepts = synthetic_concepts;
  wc.seed = synthetic_seed;
  return wc;
}

}  // namespace gmocat::config
