#include "gmocat/session.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "gmocat/data.hpp"
#include "gmocat/encoder.hpp"
#include "gmocat/errors.hpp"
#include "gmocat/relagg.hpp"

namespace gmocat::session {

void SessionConfig::validate() const {
  if (max_steps < 1) throw ConfigError("session max_steps must be >= 1");
  for (int cp : checkpoints) {
    if (cp < 1 || cp > max_steps) {
      throw ConfigError("checkpoint " + std::to_string(cp) + " outside [1, max_steps]");
    }
  }
}

namespace {

/// Runs fn(i) for i in [0, n); work is chunked across `jobs` threads. Results
/// must be written to per-index slots so the outcome is order-independent.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::atomic<int> next{0};
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&]() {
      int i;
      while ((i = next.fetch_add(1)) < n) fn(i);
    });
  }
  for (std::thread& t : workers) t.join();
}

std::vector<QuestionId> allowed_questions(const std::vector<std::uint8_t>& mask) {
  std::vector<QuestionId> out;
  for (std::size_t q = 0; q < mask.size(); ++q) {
    if (mask[q]) out.push_back(static_cast<QuestionId>(q));
  }
  return out;
}

}  // namespace

QuestionId RandomSelector::select(const EpisodeContext& ctx, SelectionExtras* extras) {
  if (extras) extras->has = false;
  const std::vector<QuestionId> allowed = allowed_questions(ctx.mask);
  if (allowed.empty()) throw ContractViolation("random_select: empty mask");
  return allowed[ctx.rng.below(allowed.size())];
}

MfiSelector::MfiSelector(const cdm::CognitiveModel& model) : irt_(model.as_two_pl()) {
  if (irt_ == nullptr) {
    throw CapabilityError("MFI selection requires an IRT cognitive model");
  }
}

QuestionId MfiSelector::select(const EpisodeContext& ctx, SelectionExtras* extras) {
  if (extras) extras->has = false;
  QuestionId best = -1;
  double best_info = -1.0;
  for (std::size_t q = 0; q < ctx.mask.size(); ++q) {
    if (!ctx.mask[q]) continue;
    const double info = irt_->fisher(ctx.ability, static_cast<QuestionId>(q));
    if (info > best_info) {  // strict: ties keep the lowest id
      best_info = info;
      best = static_cast<QuestionId>(q);
    }
  }
  if (best < 0) throw ContractViolation("mfi_select: empty mask");
  return best;
}

KliSelector::KliSelector(const cdm::CognitiveModel& model, cdm::KliConfig cfg)
    : irt_(model.as_two_pl()), cfg_(cfg) {
  if (irt_ == nullptr) {
    throw CapabilityError("KLI selection requires an IRT cognitive model");
  }
}

QuestionId KliSelector::select(const EpisodeContext& ctx, SelectionExtras* extras) {
  if (extras) extras->has = false;
  QuestionId best = -1;
  double best_info = -1.0;
  for (std::size_t q = 0; q < ctx.mask.size(); ++q) {
    if (!ctx.mask[q]) continue;
    const double info = irt_->kl(ctx.ability, static_cast<QuestionId>(q), cfg_, ctx.step);
    if (info > best_info) {
      best_info = info;
      best = static_cast<QuestionId>(q);
    }
  }
  if (best < 0) throw ContractViolation("kli_select: empty mask");
  return best;
}

PolicySelector::PolicySelector(const model::GmocatModel& m,
                               const graphs::CorrelationGraph& correlation,
                               const graphs::PrerequisiteGraph& prerequisite,
                               policy::ActionMode mode)
    : model_(&m), mode_(mode) {
  if (m.cfg.use_relation_aggregator) {
    relagg::RelationTables tables = relagg::compute_tables(m, correlation, prerequisite);
    question_table_ = std::move(tables.questions);
    concept_table_ = std::move(tables.concepts);
  } else {
    question_table_ = m.question_table;
    concept_table_ = m.concept_table;
  }
}

QuestionId PolicySelector::select(const EpisodeContext& ctx, SelectionExtras* extras) {
  std::vector<policy::RowVec> rows;
  rows.reserve(ctx.history.size());
  for (const ResponseRecord& rec : ctx.history) {
    const std::uint64_t key =
        (static_cast<std::uint64_t>(rec.question) << 1) | static_cast<std::uint64_t>(rec.correct);
    auto it = row_cache_.find(key);
    if (it == row_cache_.end()) {
      it = row_cache_
               .emplace(key, encoder::record_embed_plain(*model_, question_table_,
                                                         concept_table_, rec))
               .first;
    }
    rows.push_back(it->second);
  }
  const policy::RowVec state = encoder::encode_history_plain(*model_, rows);
  const std::optional<policy::ActionSample> sample =
      policy::act(*model_, state, ctx.mask, mode_, ctx.rng);
  if (!sample) throw ContractViolation("policy select: empty mask");
  if (extras) {
    extras->has = true;
    extras->log_prob = sample->log_prob;
    extras->state = state;
  }
  return sample->question;
}

EpisodeResult run_episode(const StudentLog& log, const StudentSplit& split, Selector& selector,
                          const cdm::CognitiveModel& model, const PopularSet& popular,
                          const EpisodeOptions& opts, std::uint64_t episode_seed) {
  opts.session.validate();
  if (split.candidate.empty()) {
    throw ContractViolation("run_episode: empty candidate set for student " +
                            std::to_string(log.student));
  }
  std::unordered_map<QuestionId, const ResponseRecord*> by_question;
  for (const ResponseRecord& rec : log.records) by_question.emplace(rec.question, &rec);

  std::size_t question_space = 0;
  for (const ResponseRecord& rec : log.records) {
    question_space = std::max(question_space, static_cast<std::size_t>(rec.question) + 1);
  }
  for (QuestionId q : split.candidate) {
    question_space = std::max(question_space, static_cast<std::size_t>(q) + 1);
  }
  if (popular.is_member.size() > question_space) question_space = popular.is_member.size();

  std::vector<std::uint8_t> mask(question_space, 0);
  for (QuestionId q : split.candidate) {
    if (!by_question.count(q)) {
      throw ContractViolation("run_episode: candidate question " + std::to_string(q) +
                              " was never answered by student " + std::to_string(log.student));
    }
    mask[q] = 1;
  }

  std::vector<ResponseRecord> meta;
  for (QuestionId q : split.meta) {
    auto it = by_question.find(q);
    if (it == by_question.end()) {
      throw ContractViolation("run_episode: meta question " + std::to_string(q) +
                              " was never answered by student " + std::to_string(log.student));
    }
    meta.push_back(*it->second);
  }
  if (meta.empty()) {
    throw ContractViolation("run_episode: empty meta set for student " +
                            std::to_string(log.student));
  }

  prng::Engine rng(episode_seed);
  EpisodeResult result;
  result.session.student = log.student;

  cdm::AbilityEstimate theta = model.update_ability({}, {});
  result.session.theta_trajectory.push_back(theta.theta);
  double acc_prev = model.eval_meta(theta, meta).acc;

  std::vector<ResponseRecord> history;
  std::unordered_set<ConceptId> seen;
  policy::EpisodeTrace trace;
  trace.student = log.student;

  const int steps = std::min<int>(opts.session.max_steps,
                                  static_cast<int>(split.candidate.size()));
  for (int t = 1; t <= steps; ++t) {
    SelectionExtras extras;
    EpisodeContext ctx{history, theta, mask, t, rng};
    const QuestionId q = selector.select(ctx, &extras);
    if (q < 0 || static_cast<std::size_t>(q) >= mask.size() || !mask[q]) {
      throw ContractViolation("selector '" + selector.name() + "' returned masked question " +
                              std::to_string(q));
    }
    const std::vector<std::uint8_t> mask_at_decision = mask;

    ResponseRecord revealed = *by_question.at(q);
    revealed.position = t - 1;
    history.push_back(revealed);

    theta = model.update_ability(history, theta);
    const cdm::MetaEvaluation eval = model.eval_meta(theta, meta);
    const rewards::RewardVector r = rewards::reward_vector(
        eval.acc, acc_prev, seen, revealed.concepts, q, popular);
    seen.insert(revealed.concepts.begin(), revealed.concepts.end());
    mask[q] = 0;

    result.session.chosen.push_back(q);
    result.session.chosen_concepts.push_back(revealed.concepts);
    result.session.correct.push_back(revealed.correct);
    result.session.theta_trajectory.push_back(theta.theta);
    result.session.evals.push_back(eval);
    result.session.rewards.push_back(r);

    if (extras.has) {
      policy::StepRecord step;
      step.revealed = revealed;
      step.log_prob_old = extras.log_prob;
      if (opts.scalar_reward) {
        step.reward = Eigen::VectorXd::Constant(1, opts.weights.dot(r));
      } else {
        step.reward = Eigen::VectorXd(3);
        step.reward << r.quality, r.diversity, r.novelty;
      }
      step.mask = mask_at_decision;
      step.state = extras.state;
      trace.steps.push_back(std::move(step));
    }
    acc_prev = eval.acc;
  }

  if (!trace.steps.empty()) result.trace = std::move(trace);
  return result;
}

namespace {

double episode_scalar_return(const CatSession& s, const rewards::ScalarizationWeights& w) {
  double total = 0.0;
  for (const rewards::RewardVector& r : s.rewards) total += w.dot(r);
  return total;
}

}  // namespace

TrainResult train_loop(const DatasetBundle& bundle, std::span<const int> train_students,
                       std::span<const int> val_students, model::GmocatModel& m,
                       model::AdamState& adam, const cdm::CognitiveModel& cdm_model,
                       const graphs::CorrelationGraph& correlation,
                       const graphs::PrerequisiteGraph& prerequisite, const PopularSet& popular,
                       const TrainLoopConfig& cfg) {
  cfg.session.validate();
  cfg.weights.validate();
  cfg.train.validate(m.cfg.objective_count());
  if (train_students.empty()) throw ConfigError("train_loop: no training students");

  TrainResult result;
  double best_val_auc = -1.0;
  std::vector<Eigen::MatrixXd> best_params;
  auto snapshot = [&]() {
    best_params.clear();
    for (const model::NamedParam& p : m.params()) best_params.push_back(*p.value);
  };
  auto restore = [&]() {
    if (best_params.empty()) return;
    std::vector<model::NamedParam> params = m.params();
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = best_params[i];
  };

  EpisodeOptions episode_opts;
  episode_opts.session = cfg.session;
  episode_opts.weights = cfg.weights;
  episode_opts.scalar_reward = cfg.scalar_reward;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order(train_students.begin(), train_students.end());
    prng::Engine order_rng(
        prng::derive(cfg.seed, {prng::kTrainOrder, static_cast<std::uint64_t>(epoch)}));
    order_rng.shuffle(order);

    double return_sum = 0.0;
    int return_count = 0;
    double actor_loss_sum = 0.0, critic_loss_sum = 0.0;
    int loss_count = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.train.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.train.batch_size));
      const int batch_n = static_cast<int>(end - start);

      PolicySelector selector(m, correlation, prerequisite, policy::ActionMode::kSample);
      std::vector<policy::EpisodeTrace> traces(batch_n);
      std::vector<CatSession> sessions(batch_n);
      parallel_for(batch_n, cfg.jobs, [&](int i) {
        const int student = order[start + static_cast<std::size_t>(i)];
        const StudentLog& log = bundle.logs[student];
        const StudentSplit split = data::split_candidate_meta(
            log, cfg.candidate_fraction,
            prng::derive(cfg.seed, {prng::kCandidateMeta, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(student)}));
        EpisodeResult episode = run_episode(
            log, split, selector, cdm_model, popular, episode_opts,
            prng::derive(cfg.seed, {prng::kEpisode, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(student)}));
        sessions[i] = std::move(episode.session);
        if (episode.trace) traces[i] = std::move(*episode.trace);
      });

      for (const CatSession& s : sessions) {
        return_sum += episode_scalar_return(s, cfg.weights);
        ++return_count;
      }

      const std::uint64_t dropout_seed =
          prng::derive(cfg.seed, {prng::kDropout, static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(start)});
      policy::TrainStepReport report =
          policy::train_step(m, adam, correlation, prerequisite, traces, cfg.train, dropout_seed);
      for (double v : report.actor_loss) actor_loss_sum += v;
      for (double v : report.critic_loss) critic_loss_sum += v;
      loss_count += static_cast<int>(report.actor_loss.size());
    }

    // Validation with frozen parameters and per-epoch seeds.
    double val_auc = 0.0, val_acc = 0.0;
    if (!val_students.empty()) {
      PolicySelector selector(m, correlation, prerequisite, policy::ActionMode::kSample);
      std::vector<double> aucs(val_students.size()), accs(val_students.size());
      parallel_for(static_cast<int>(val_students.size()), cfg.jobs, [&](int i) {
        const int student = val_students[i];
        const StudentLog& log = bundle.logs[student];
        const StudentSplit split = data::split_candidate_meta(
            log, cfg.candidate_fraction,
            prng::derive(cfg.seed, {prng::kEvalSplit, static_cast<std::uint64_t>(student)}));
        EpisodeResult episode = run_episode(
            log, split, selector, cdm_model, popular, episode_opts,
            prng::derive(cfg.seed, {prng::kValidation, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(student)}));
        aucs[i] = episode.session.evals.back().auc;
        accs[i] = episode.session.evals.back().acc;
      });
      val_auc = std::accumulate(aucs.begin(), aucs.end(), 0.0) / aucs.size();
      val_acc = std::accumulate(accs.begin(), accs.end(), 0.0) / accs.size();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_return = return_count > 0 ? return_sum / return_count : 0.0;
    stats.val_auc = val_auc;
    stats.val_acc = val_acc;
    stats.actor_loss = loss_count > 0 ? actor_loss_sum / loss_count : 0.0;
    stats.critic_loss = loss_count > 0 ? critic_loss_sum / loss_count : 0.0;
    result.curve.push_back(stats);

    if (val_students.empty() || val_auc >= best_val_auc) {
      best_val_auc = val_auc;
      result.best_epoch = epoch;
      snapshot();
    }
  }

  restore();
  return result;
}

EvaluationResult evaluate(const DatasetBundle& bundle, std::span<const int> students,
                          Selector& selector, const cdm::CognitiveModel& cdm_model,
                          const PopularSet& popular, const EvaluateOptions& opts) {
  opts.session.validate();
  if (students.empty()) throw ConfigError("evaluate: no students");

  EpisodeOptions episode_opts;
  episode_opts.session = opts.session;

  EvaluationResult result;
  result.sessions.resize(students.size());
  parallel_for(static_cast<int>(students.size()), opts.jobs, [&](int i) {
    const int student = students[i];
    const StudentLog& log = bundle.logs[student];
    const StudentSplit split = data::split_candidate_meta(
        log, opts.candidate_fraction,
        prng::derive(opts.seed, {prng::kEvalSplit, static_cast<std::uint64_t>(student)}));
    EpisodeResult episode = run_episode(
        log, split, selector, cdm_model, popular, episode_opts,
        prng::derive(opts.seed, {prng::kEpisode, static_cast<std::uint64_t>(student)}));
    result.sessions[i] = std::move(episode.session);
  });

  metrics::MetricReport& report = result.report;
  report.selector = selector.name();
  report.seed = opts.seed;
  report.checkpoint_steps = opts.session.checkpoints;
  report.sessions = static_cast<int>(result.sessions.size());
  report.max_steps = opts.session.max_steps;

  for (int cp : opts.session.checkpoints) {
    double auc_sum = 0.0, acc_sum = 0.0;
    for (const CatSession& s : result.sessions) {
      const int idx = std::min(cp, s.steps()) - 1;
      auc_sum += s.evals[idx].auc;
      acc_sum += s.evals[idx].acc;
    }
    report.auc.push_back(auc_sum / result.sessions.size());
    report.acc.push_back(acc_sum / result.sessions.size());
  }

  for (int t = 1; t <= opts.session.max_steps; ++t) {
    double cov_sum = 0.0;
    for (const CatSession& s : result.sessions) {
      const int prefix = std::min(t, s.steps());
      cov_sum += metrics::coverage(
          std::span<const std::vector<ConceptId>>(s.chosen_concepts.data(), prefix),
          bundle.concept_count);
    }
    report.cov_curve.push_back(cov_sum / result.sessions.size());
  }

  std::vector<std::vector<QuestionId>> selections;
  for (const CatSession& s : result.sessions) selections.push_back(s.chosen);
  report.exposure = metrics::exposure_rates(selections, bundle.question_count);
  report.exposure_tail = metrics::exposure_tail(report.exposure, 0.2);
  report.overlap = selections.size() >= 2 ? metrics::mean_overlap(selections) : 0.0;
  return result;
}

void write_session_traces(const std::string& path, std::span<const CatSession> sessions) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "student_id,step,question_id,correct,r_qua,r_div,r_nov,acc_meta\n";
  char buf[160];
  for (const CatSession& s : sessions) {
    for (int t = 0; t < s.steps(); ++t) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.9g,%.9g,%.9g,%.9g", s.student, t + 1,
                    s.chosen[t], s.correct[t], s.rewards[t].quality, s.rewards[t].diversity,
                    s.rewards[t].novelty, s.evals[t].acc);
      out << buf << "\n";
    }
  }
}

std::vector<CatSession> read_session_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open trace file");
  std::string line;
  if (!std::getline(in, line) ||
      line != "student_id,step,question_id,correct,r_qua,r_div,r_nov,acc_meta") {
    throw DataError(path + ":1: unexpected trace header");
  }
  std::vector<CatSession> sessions;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    int student, step, question, correct;
    double r_qua, r_div, r_nov, acc;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%d,%lf,%lf,%lf,%lf", &student, &step, &question,
                    &correct, &r_qua, &r_div, &r_nov, &acc) != 8) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed trace row");
    }
    if (sessions.empty() || sessions.back().student != student || step == 1) {
      if (sessions.empty() || sessions.back().student != student) {
        sessions.push_back(CatSession{});
        sessions.back().student = student;
      }
    }
    CatSession& s = sessions.back();
    s.chosen.push_back(question);
    s.correct.push_back(correct);
    s.rewards.push_back({r_qua, r_div, r_nov});
    cdm::MetaEvaluation eval;
    eval.acc = acc;
    s.evals.push_back(eval);
  }
  return sessions;
}

}  // namespace gmocat::session
