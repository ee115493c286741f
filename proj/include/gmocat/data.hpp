#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmocat/types.hpp"

namespace gmocat::data {

struct LoadOptions {
  int min_records = 40;  // students with fewer (deduplicated) records are dropped
};

/// Loads a response-record file plus its question-concept map and produces a
/// densely re-indexed bundle.
///
/// Records file: UTF-8 CSV, header `student_id,question_id,correct`, rows
/// ordered per student by time. Map file: header `question_id,concept_ids`
/// with `;`-separated concept ids. Empty files are valid and yield an empty
/// bundle. A record whose question has no concept mapping is a data error;
/// malformed rows report their line number. If a student answers the same
/// question more than once only the first response is kept, so logs satisfy
/// the no-duplicate invariant.
DatasetBundle load_dataset(const std::string& records_path,
                           const std::string& question_concepts_path,
                           const LoadOptions& opts = {});

/// Reads a `src_concept,dst_concept` edge file against the bundle's concept
/// name map (datasets such as Junyi ship prerequisite edges).
std::vector<std::pair<ConceptId, ConceptId>> load_prerequisite_edges(
    const std::string& path, const DatasetBundle& bundle);

struct StudentPartition {
  std::vector<int> train;  // indices into bundle.logs
  std::vector<int> val;
  std::vector<int> test;
};

/// Disjoint, exhaustive student-level partition; deterministic given seed.
/// Ratios must sum to 1 (within 1e-9). Sizes are floor(ratio * n) for train
/// and val, remainder test.
StudentPartition split_students(const DatasetBundle& bundle,
                                std::array<double, 3> ratios,
                                std::uint64_t seed);

/// Random candidate/meta split of one student's answered questions; the
/// candidate side gets floor(fraction * n). Requires at least two records.
StudentSplit split_candidate_meta(const StudentLog& log, double fraction,
                                  std::uint64_t seed);

/// Top floor(x * question_count) questions by answer count over the given
/// training logs, descending, ties broken by ascending question id.
/// Unanswered questions count zero. Requires x in (0, 1).
PopularSet compute_popular_set(std::span<const StudentLog> train_logs, double x,
                               int question_count);

/// Answer counts per question over the given logs.
std::vector<std::int64_t> answer_counts(std::span<const StudentLog> logs,
                                        int question_count);

}  // namespace gmocat::data
