#include "gmocat/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "gmocat/errors.hpp"
#include "gmocat/prng.hpp"

namespace gmocat::data {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

struct CsvFile {
  std::string path;
  std::vector<std::string> lines;  // without the header
  int first_data_line = 2;         // 1-based line number of lines[0]
};

CsvFile read_csv(const std::string& path, const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open file");
  CsvFile file;
  file.path = path;
  std::string line;
  bool saw_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty()) continue;
    if (!saw_header) {
      if (t != expected_header) {
        throw DataError(path + ":" + std::to_string(line_no) + ": expected header '" +
                        expected_header + "', got '" + t + "'");
      }
      saw_header = true;
      file.first_data_line = line_no + 1;
      continue;
    }
    file.lines.push_back(t);
  }
  return file;  // empty file (no header at all) is a valid empty dataset
}

int parse_binary(const std::string& s, const std::string& where) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw DataError(where + ": 'correct' must be 0 or 1, got '" + s + "'");
}

}  // namespace

DatasetBundle load_dataset(const std::string& records_path,
                           const std::string& question_concepts_path,
                           const LoadOptions& opts) {
  DatasetBundle bundle;

  // Question-concept map first: it defines the question/concept index spaces.
  std::unordered_map<std::string, QuestionId> question_index;
  std::unordered_map<std::string, ConceptId> concept_index;
  CsvFile map_file = read_csv(question_concepts_path, "question_id,concept_ids");
  for (std::size_t i = 0; i < map_file.lines.size(); ++i) {
    const std::string where =
        question_concepts_path + ":" + std::to_string(map_file.first_data_line + static_cast<int>(i));
    auto fields = split(map_file.lines[i], ',');
    if (fields.size() != 2 || fields[0].empty()) {
      throw DataError(where + ": expected 'question_id,concept_ids'");
    }
    if (question_index.count(fields[0])) {
      throw DataError(where + ": duplicate question id '" + fields[0] + "'");
    }
    const QuestionId q = static_cast<QuestionId>(bundle.question_names.size());
    question_index.emplace(fields[0], q);
    bundle.question_names.push_back(fields[0]);

    std::vector<ConceptId> concepts;
    for (const std::string& cname : split(fields[1], ';')) {
      if (cname.empty()) continue;
      auto [it, inserted] = concept_index.try_emplace(
          cname, static_cast<ConceptId>(bundle.concept_names.size()));
      if (inserted) bundle.concept_names.push_back(cname);
      concepts.push_back(it->second);
    }
    if (concepts.empty()) {
      throw DataError(where + ": question '" + fields[0] + "' has no concepts");
    }
    std::sort(concepts.begin(), concepts.end());
    concepts.erase(std::unique(concepts.begin(), concepts.end()), concepts.end());
    bundle.question_concepts.push_back(std::move(concepts));
  }
  bundle.question_count = static_cast<int>(bundle.question_names.size());
  bundle.concept_count = static_cast<int>(bundle.concept_names.size());

  // Response records, grouped per student in file order.
  std::unordered_map<std::string, StudentId> student_index;
  std::vector<std::unordered_set<QuestionId>> seen_questions;
  CsvFile rec_file = read_csv(records_path, "student_id,question_id,correct");
  for (std::size_t i = 0; i < rec_file.lines.size(); ++i) {
    const std::string where =
        records_path + ":" + std::to_string(rec_file.first_data_line + static_cast<int>(i));
    auto fields = split(rec_file.lines[i], ',');
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw DataError(where + ": expected 'student_id,question_id,correct'");
    }
    auto qit = question_index.find(fields[1]);
    if (qit == question_index.end()) {
      throw DataError(where + ": question '" + fields[1] + "' has no concept mapping");
    }
    const int correct = parse_binary(fields[2], where);

    auto [sit, inserted] =
        student_index.try_emplace(fields[0], static_cast<StudentId>(bundle.logs.size()));
    if (inserted) {
      bundle.logs.push_back(StudentLog{sit->second, {}});
      bundle.student_names.push_back(fields[0]);
      seen_questions.emplace_back();
    }
    StudentLog& log = bundle.logs[sit->second];
    if (!seen_questions[sit->second].insert(qit->second).second) {
      continue;  // repeat attempt; keep the first response only
    }
    ResponseRecord rec;
    rec.question = qit->second;
    rec.concepts = bundle.question_concepts[qit->second];
    rec.correct = correct;
    rec.position = static_cast<int>(log.records.size());
    log.records.push_back(std::move(rec));
  }

  // Drop short logs, then re-densify student ids.
  std::vector<StudentLog> kept;
  std::vector<std::string> kept_names;
  for (std::size_t i = 0; i < bundle.logs.size(); ++i) {
    if (static_cast<int>(bundle.logs[i].records.size()) >= opts.min_records) {
      StudentLog log = std::move(bundle.logs[i]);
      log.student = static_cast<StudentId>(kept.size());
      kept.push_back(std::move(log));
      kept_names.push_back(bundle.student_names[i]);
    }
  }
  bundle.logs = std::move(kept);
  bundle.student_names = std::move(kept_names);
  return bundle;
}

std::vector<std::pair<ConceptId, ConceptId>> load_prerequisite_edges(
    const std::string& path, const DatasetBundle& bundle) {
  std::unordered_map<std::string, ConceptId> concept_index;
  for (std::size_t i = 0; i < bundle.concept_names.size(); ++i) {
    concept_index.emplace(bundle.concept_names[i], static_cast<ConceptId>(i));
  }
  CsvFile file = read_csv(path, "src_concept,dst_concept");
  std::vector<std::pair<ConceptId, ConceptId>> edges;
  for (std::size_t i = 0; i < file.lines.size(); ++i) {
    const std::string where =
        path + ":" + std::to_string(file.first_data_line + static_cast<int>(i));
    auto fields = split(file.lines[i], ',');
    if (fields.size() != 2) throw DataError(where + ": expected 'src_concept,dst_concept'");
    auto sit = concept_index.find(fields[0]);
    auto dit = concept_index.find(fields[1]);
    if (sit == concept_index.end() || dit == concept_index.end()) {
      throw DataError(where + ": unknown concept in edge '" + file.lines[i] + "'");
    }
    if (sit->second == dit->second) continue;  // self edges are meaningless
    edges.emplace_back(sit->second, dit->second);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

StudentPartition split_students(const DatasetBundle& bundle,
                                std::array<double, 3> ratios,
                                std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1, got " + std::to_string(total));
  }
  for (double r : ratios) {
    if (r < 0) throw ConfigError("split ratios must be non-negative");
  }
  std::vector<int> order(bundle.logs.size());
  std::iota(order.begin(), order.end(), 0);
  prng::Engine rng(prng::derive(seed, {prng::kStudentSplit}));
  rng.shuffle(order);

  const std::size_t n = order.size();
  const std::size_t n_train = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(n)));
  const std::size_t n_val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n)));
  StudentPartition part;
  part.train.assign(order.begin(), order.begin() + n_train);
  part.val.assign(order.begin() + n_train,
                  order.begin() + std::min(n, n_train + n_val));
  part.test.assign(order.begin() + std::min(n, n_train + n_val), order.end());
  std::sort(part.train.begin(), part.train.end());
  std::sort(part.val.begin(), part.val.end());
  std::sort(part.test.begin(), part.test.end());
  return part;
}

StudentSplit split_candidate_meta(const StudentLog& log, double fraction,
                                  std::uint64_t seed) {
  const std::size_t n = log.records.size();
  if (n < 2) {
    throw DataError("candidate/meta split needs at least 2 records, student " +
                    std::to_string(log.student) + " has " + std::to_string(n));
  }
  std::vector<QuestionId> questions(n);
  for (std::size_t i = 0; i < n; ++i) questions[i] = log.records[i].question;
  prng::Engine rng(seed);
  rng.shuffle(questions);

  const std::size_t n_candidate =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  StudentSplit out;
  out.candidate.assign(questions.begin(), questions.begin() + n_candidate);
  out.meta.assign(questions.begin() + n_candidate, questions.end());
  std::sort(out.candidate.begin(), out.candidate.end());
  std::sort(out.meta.begin(), out.meta.end());
  return out;
}

std::vector<std::int64_t> answer_counts(std::span<const StudentLog> logs,
                                        int question_count) {
  std::vector<std::int64_t> counts(question_count, 0);
  for (const StudentLog& log : logs) {
    for (const ResponseRecord& rec : log.records) {
      counts.at(rec.question) += 1;
    }
  }
  return counts;
}

PopularSet compute_popular_set(std::span<const StudentLog> train_logs, double x,
                               int question_count) {
  if (!(x > 0.0 && x < 1.0)) {
    throw ConfigError("popularity fraction must lie in (0,1), got " + std::to_string(x));
  }
  const std::vector<std::int64_t> counts = answer_counts(train_logs, question_count);
  std::vector<QuestionId> order(question_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](QuestionId a, QuestionId b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return a < b;
  });

  const int top = static_cast<int>(std::floor(x * static_cast<double>(question_count)));
  PopularSet set;
  set.fraction = x;
  set.is_member.assign(question_count, 0);
  set.members.assign(order.begin(), order.begin() + top);
  std::sort(set.members.begin(), set.members.end());
  for (QuestionId q : set.members) set.is_member[q] = 1;
  return set;
}

}  // namespace gmocat::data
