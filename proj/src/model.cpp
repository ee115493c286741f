#include "gmocat/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gmocat/errors.hpp"
#include "gmocat/prng.hpp"

namespace gmocat::model {

std::uint64_t ModelConfig::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over the layout-relevant fields
  auto mix = [&h](std::uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(question_count));
  mix(static_cast<std::uint64_t>(concept_count));
  mix(static_cast<std::uint64_t>(embedding_dim));
  mix(use_relation_aggregator ? 1 : 0);
  mix(scalar_critic ? 1 : 0);
  return h;
}

namespace {

// Tables are scaled by their feature width, operators by their input width.
Mat uniform_init(prng::Engine& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

}  // namespace

GmocatModel GmocatModel::init(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.question_count < 1 || cfg.concept_count < 1 || cfg.embedding_dim < 1) {
    throw ConfigError("model: counts and embedding dimension must be positive");
  }
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) {
    throw ConfigError("model: dropout must lie in [0,1)");
  }
  const int d = cfg.embedding_dim;
  const int D = cfg.state_dim();
  const int Q = cfg.question_count;
  const int K = cfg.concept_count;
  const int m = cfg.objective_count();
  const double table_bound = 1.0 / std::sqrt(static_cast<double>(d));

  prng::Engine rng(prng::derive(seed, {prng::kInit}));
  GmocatModel model;
  model.cfg = cfg;
  model.question_table = uniform_init(rng, Q, d, table_bound);
  model.concept_table = uniform_init(rng, K, d, table_bound);
  model.response_table = uniform_init(rng, 2, d, table_bound);

  model.w_pre = uniform_init(rng, d, d, table_bound);
  model.w_cor = uniform_init(rng, d, d, table_bound);
  model.att_pre = uniform_init(rng, 2 * d, 1, 1.0 / std::sqrt(2.0 * d));
  model.att_cor = uniform_init(rng, 2 * d, 1, 1.0 / std::sqrt(2.0 * d));
  model.fusion_p = uniform_init(rng, d, 1, table_bound);
  model.fusion_w = uniform_init(rng, d, d, table_bound);
  model.fusion_b = Mat::Zero(1, d);

  const double op_bound = 1.0 / std::sqrt(static_cast<double>(D));
  model.wq = uniform_init(rng, D, D, op_bound);
  model.wk = uniform_init(rng, D, D, op_bound);
  model.wv = uniform_init(rng, D, D, op_bound);
  model.ln_gain = Mat::Ones(1, D);
  model.ln_bias = Mat::Zero(1, D);
  model.start_state = Mat::Zero(1, D);

  model.actor_w = uniform_init(rng, D, Q, op_bound);
  model.actor_b = Mat::Zero(1, Q);
  model.critic_w = uniform_init(rng, D, m, op_bound);
  model.critic_b = Mat::Zero(1, m);
  return model;
}

namespace {
template <class ModelT, class ParamT>
std::vector<ParamT> param_list(ModelT& m) {
  return {
      {"question_table", &m.question_table},
      {"concept_table", &m.concept_table},
      {"response_table", &m.response_table},
      {"w_pre", &m.w_pre},
      {"w_cor", &m.w_cor},
      {"att_pre", &m.att_pre},
      {"att_cor", &m.att_cor},
      {"fusion_p", &m.fusion_p},
      {"fusion_w", &m.fusion_w},
      {"fusion_b", &m.fusion_b},
      {"wq", &m.wq},
      {"wk", &m.wk},
      {"wv", &m.wv},
      {"ln_gain", &m.ln_gain},
      {"ln_bias", &m.ln_bias},
      {"start_state", &m.start_state},
      {"actor_w", &m.actor_w},
      {"actor_b", &m.actor_b},
      {"critic_w", &m.critic_w},
      {"critic_b", &m.critic_b},
  };
}
}  // namespace

std::vector<NamedParam> GmocatModel::params() { return param_list<GmocatModel, NamedParam>(*this); }

std::vector<NamedParam> GmocatModel::params() const {
  return param_list<GmocatModel, NamedParam>(const_cast<GmocatModel&>(*this));
}

void GmocatModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open checkpoint for writing");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(cfg.fingerprint()));
  out << "gmocat-checkpoint 1\n";
  out << "fingerprint " << buf << "\n";
  for (const NamedParam& p : params()) {
    out << "param " << p.name << " " << p.value->rows() << " " << p.value->cols() << "\n";
    for (Eigen::Index i = 0; i < p.value->rows(); ++i) {
      for (Eigen::Index j = 0; j < p.value->cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", (*p.value)(i, j));
        out << buf << (j + 1 == p.value->cols() ? "" : " ");
      }
      out << "\n";
    }
  }
  out << "end\n";
}

GmocatModel GmocatModel::load(const std::string& path, const ModelConfig& expected) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open checkpoint");
  std::string line;
  if (!std::getline(in, line) || line != "gmocat-checkpoint 1") {
    throw DataError(path + ": not a gmocat checkpoint");
  }
  char expected_fp[32];
  std::snprintf(expected_fp, sizeof(expected_fp), "%016llx",
                static_cast<unsigned long long>(expected.fingerprint()));
  if (!std::getline(in, line) || line != std::string("fingerprint ") + expected_fp) {
    throw DataError(path + ": checkpoint fingerprint does not match the configuration");
  }

  GmocatModel model = GmocatModel::init(expected, 0);
  for (NamedParam& p : model.params()) {
    if (!std::getline(in, line)) throw DataError(path + ": truncated checkpoint");
    std::istringstream header(line);
    std::string tag, name;
    Eigen::Index rows = 0, cols = 0;
    header >> tag >> name >> rows >> cols;
    if (tag != "param" || name != p.name || rows != p.value->rows() ||
        cols != p.value->cols()) {
      throw DataError(path + ": checkpoint shape mismatch at '" + p.name + "'");
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (!std::getline(in, line)) throw DataError(path + ": truncated checkpoint");
      std::istringstream row_in(line);
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (!(row_in >> (*p.value)(i, j))) {
          throw DataError(path + ": malformed row in '" + p.name + "'");
        }
      }
    }
  }
  if (!std::getline(in, line) || line != "end") {
    throw DataError(path + ": missing checkpoint terminator");
  }
  return model;
}

Binding Binding::bind(ad::Tape& tape, const GmocatModel& model) {
  Binding b;
  b.question_table = tape.leaf(model.question_table);
  b.concept_table = tape.leaf(model.concept_table);
  b.response_table = tape.leaf(model.response_table);
  b.w_pre = tape.leaf(model.w_pre);
  b.w_cor = tape.leaf(model.w_cor);
  b.att_pre = tape.leaf(model.att_pre);
  b.att_cor = tape.leaf(model.att_cor);
  b.fusion_p = tape.leaf(model.fusion_p);
  b.fusion_w = tape.leaf(model.fusion_w);
  b.fusion_b = tape.leaf(model.fusion_b);
  b.wq = tape.leaf(model.wq);
  b.wk = tape.leaf(model.wk);
  b.wv = tape.leaf(model.wv);
  b.ln_gain = tape.leaf(model.ln_gain);
  b.ln_bias = tape.leaf(model.ln_bias);
  b.start_state = tape.leaf(model.start_state);
  b.actor_w = tape.leaf(model.actor_w);
  b.actor_b = tape.leaf(model.actor_b);
  b.critic_w = tape.leaf(model.critic_w);
  b.critic_b = tape.leaf(model.critic_b);
  return b;
}

std::vector<ad::Var> Binding::vars() const {
  return {question_table, concept_table, response_table, w_pre,   w_cor,    att_pre,
          att_cor,        fusion_p,      fusion_w,       fusion_b, wq,       wk,
          wv,             ln_gain,       ln_bias,        start_state, actor_w, actor_b,
          critic_w,       critic_b};
}

AdamState::AdamState(const GmocatModel& model) {
  for (const NamedParam& p : model.params()) {
    m_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
    v_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
  }
}

void AdamState::step(GmocatModel& model, const std::vector<Mat>& grads, const AdamConfig& cfg) {
  std::vector<NamedParam> params = model.params();
  if (grads.size() != params.size()) {
    throw ContractViolation("adam: gradient list does not match parameter list");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t_);
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = cfg.beta1 * m_[k] + (1.0 - cfg.beta1) * grads[k];
    v_[k] = cfg.beta2 * v_[k] + (1.0 - cfg.beta2) * grads[k].cwiseProduct(grads[k]);
    const Mat m_hat = m_[k] / bc1;
    const Mat v_hat = v_[k] / bc2;
    *params[k].value -=
        cfg.learning_rate * (m_hat.array() / (v_hat.array().sqrt() + cfg.eps)).matrix();
  }
}

}  // namespace gmocat::model
