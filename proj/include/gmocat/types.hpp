#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gmocat {

using QuestionId = std::int32_t;
using ConceptId = std::int32_t;
using StudentId = std::int32_t;

/// One answered question: the question, the concepts it covers, and whether
/// the logged response was correct.
struct ResponseRecord {
  QuestionId question = -1;
  std::vector<ConceptId> concepts;  // sorted ascending, never empty
  int correct = 0;                  // {0, 1}
  int position = 0;                 // ordinal within the student's log
};

/// A student's time-ordered response log. No question appears twice.
struct StudentLog {
  StudentId student = -1;
  std::vector<ResponseRecord> records;
};

/// Fully loaded dataset with densely re-indexed students/questions/concepts.
/// Original identifiers are kept in the *_names side maps for reports.
struct DatasetBundle {
  std::vector<StudentLog> logs;
  int question_count = 0;
  int concept_count = 0;
  std::vector<std::vector<ConceptId>> question_concepts;  // question -> sorted concepts
  std::vector<std::string> question_names;
  std::vector<std::string> concept_names;
  std::vector<std::string> student_names;
};

/// Per-student partition of answered questions: selections are made from the
/// candidate set, ability accuracy is judged on the meta set.
struct StudentSplit {
  std::vector<QuestionId> candidate;  // sorted ascending
  std::vector<QuestionId> meta;       // sorted ascending
};

/// The fixed set of most-answered training questions used by the novelty
/// reward and the novelty metrics.
struct PopularSet {
  std::vector<QuestionId> members;  // sorted ascending
  std::vector<std::uint8_t> is_member;  // question id -> membership
  double fraction = 0.10;

  bool contains(QuestionId q) const {
    return q >= 0 && q < static_cast<QuestionId>(is_member.size()) && is_member[q] != 0;
  }
  int size() const { return static_cast<int>(members.size()); }
};

}  // namespace gmocat
