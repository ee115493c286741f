#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "gmocat/data.hpp"
#include "gmocat/errors.hpp"
#include "gmocat/prng.hpp"
#include "test_util.hpp"

using namespace gmocat;

namespace {

DatasetBundle tiny_bundle(int students, int questions) {
  DatasetBundle bundle;
  bundle.question_count = questions;
  bundle.concept_count = 1;
  bundle.question_concepts.assign(questions, {0});
  for (int s = 0; s < students; ++s) {
    StudentLog log;
    log.student = s;
    for (int q = 0; q < std::min(questions, 3); ++q) {
      log.records.push_back({q, {0}, 1, q});
    }
    bundle.logs.push_back(log);
  }
  return bundle;
}

}  // namespace

TEST_CASE("load_dataset parses records and maps, re-indexing densely") {
  testutil::TempDir dir("load");
  testutil::write_file(dir.file("map.csv"),
                       "question_id,concept_ids\n"
                       "q10,alg;geo\n"
                       "q20,geo\n"
                       "q30,alg\n");
  std::string records = "student_id,question_id,correct\n";
  for (int q : {10, 20, 30}) {
    records += "s1,q" + std::to_string(q) + ",1\n";
  }
  records += "s2,q20,0\ns2,q10,1\n";
  testutil::write_file(dir.file("records.csv"), records);

  data::LoadOptions opts;
  opts.min_records = 2;
  const DatasetBundle bundle = data::load_dataset(dir.file("records.csv"), dir.file("map.csv"), opts);
  CHECK(bundle.question_count == 3);
  CHECK(bundle.concept_count == 2);
  CHECK(bundle.logs.size() == 2);
  CHECK(bundle.question_names == std::vector<std::string>{"q10", "q20", "q30"});
  CHECK(bundle.logs[0].records.size() == 3);
  CHECK(bundle.logs[1].records.size() == 2);
  CHECK(bundle.logs[1].records[0].question == 1);  // q20 is the second map row
  CHECK(bundle.question_concepts[0] == std::vector<ConceptId>{0, 1});
}

TEST_CASE("load_dataset: empty files give an empty bundle, error-free") {
  testutil::TempDir dir("empty");
  testutil::write_file(dir.file("records.csv"), "");
  testutil::write_file(dir.file("map.csv"), "");
  const DatasetBundle bundle = data::load_dataset(dir.file("records.csv"), dir.file("map.csv"));
  CHECK(bundle.logs.empty());
  CHECK(bundle.question_count == 0);
  CHECK(bundle.concept_count == 0);
}

TEST_CASE("load_dataset: min_records filter keeps students at the boundary") {
  testutil::TempDir dir("filter");
  std::string map = "question_id,concept_ids\n";
  for (int q = 0; q < 41; ++q) map += "q" + std::to_string(q) + ",c0\n";
  testutil::write_file(dir.file("map.csv"), map);

  std::string records = "student_id,question_id,correct\n";
  auto add = [&records](const std::string& s, int n) {
    for (int q = 0; q < n; ++q) records += s + ",q" + std::to_string(q) + ",1\n";
  };
  add("a", 40);
  add("b", 39);
  add("c", 41);
  testutil::write_file(dir.file("records.csv"), records);

  const DatasetBundle bundle = data::load_dataset(dir.file("records.csv"), dir.file("map.csv"));
  REQUIRE(bundle.logs.size() == 2);
  CHECK(bundle.student_names == std::vector<std::string>{"a", "c"});
  CHECK(bundle.logs[0].student == 0);
  CHECK(bundle.logs[1].student == 1);
}

TEST_CASE("load_dataset error paths carry line numbers") {
  testutil::TempDir dir("errors");
  testutil::write_file(dir.file("map.csv"), "question_id,concept_ids\nq1,c0\n");

  SUBCASE("malformed row") {
    testutil::write_file(dir.file("records.csv"),
                         "student_id,question_id,correct\ns1,q1,1\ngarbage-row\n");
    try {
      data::load_dataset(dir.file("records.csv"), dir.file("map.csv"));
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
  }
  SUBCASE("unmapped question") {
    testutil::write_file(dir.file("records.csv"),
                         "student_id,question_id,correct\ns1,q9,1\n");
    CHECK_THROWS_AS(data::load_dataset(dir.file("records.csv"), dir.file("map.csv")), DataError);
  }
  SUBCASE("question without concepts") {
    testutil::write_file(dir.file("map2.csv"), "question_id,concept_ids\nq1,\n");
    testutil::write_file(dir.file("records.csv"), "student_id,question_id,correct\n");
    CHECK_THROWS_AS(data::load_dataset(dir.file("records.csv"), dir.file("map2.csv")), DataError);
  }
  SUBCASE("correct outside {0,1}") {
    testutil::write_file(dir.file("records.csv"),
                         "student_id,question_id,correct\ns1,q1,2\n");
    CHECK_THROWS_AS(data::load_dataset(dir.file("records.csv"), dir.file("map.csv")), DataError);
  }
}

TEST_CASE("load_dataset keeps only the first response to a repeated question") {
  testutil::TempDir dir("dedup");
  testutil::write_file(dir.file("map.csv"), "question_id,concept_ids\nq1,c0\nq2,c0\n");
  testutil::write_file(dir.file("records.csv"),
                       "student_id,question_id,correct\ns,q1,0\ns,q2,1\ns,q1,1\n");
  data::LoadOptions opts;
  opts.min_records = 1;
  const DatasetBundle bundle = data::load_dataset(dir.file("records.csv"), dir.file("map.csv"), opts);
  REQUIRE(bundle.logs.size() == 1);
  REQUIRE(bundle.logs[0].records.size() == 2);
  CHECK(bundle.logs[0].records[0].correct == 0);  // first attempt wins
}

TEST_CASE("split_students: floor sizes, determinism, disjoint exhaustive partition") {
  const DatasetBundle bundle = tiny_bundle(10, 3);
  const data::StudentPartition part = data::split_students(bundle, {0.8, 0.1, 0.1}, 7);
  CHECK(part.train.size() == 8);
  CHECK(part.val.size() == 1);
  CHECK(part.test.size() == 1);

  const data::StudentPartition again = data::split_students(bundle, {0.8, 0.1, 0.1}, 7);
  CHECK(part.train == again.train);
  CHECK(part.val == again.val);
  CHECK(part.test == again.test);

  std::set<int> all;
  for (int i : part.train) all.insert(i);
  for (int i : part.val) all.insert(i);
  for (int i : part.test) all.insert(i);
  CHECK(all.size() == 10);

  CHECK_THROWS_AS(data::split_students(bundle, {0.5, 0.5, 0.5}, 7), ConfigError);
}

TEST_CASE("split_candidate_meta: floor arithmetic and partition property") {
  std::vector<std::vector<ConceptId>> map(12, std::vector<ConceptId>{0});

  SUBCASE("10-question log gives 8/2") {
    StudentLog log = testutil::make_log(0, {{0, 1}, {1, 0}, {2, 1}, {3, 1}, {4, 0},
                                            {5, 1}, {6, 0}, {7, 1}, {8, 1}, {9, 0}},
                                        map);
    const StudentSplit split = data::split_candidate_meta(log, 0.8, 99);
    CHECK(split.candidate.size() == 8);
    CHECK(split.meta.size() == 2);
  }
  SUBCASE("5-question log gives 4/1") {
    StudentLog log = testutil::make_log(0, {{0, 1}, {1, 0}, {2, 1}, {3, 1}, {4, 0}}, map);
    const StudentSplit split = data::split_candidate_meta(log, 0.8, 5);
    CHECK(split.candidate.size() == 4);
    CHECK(split.meta.size() == 1);
  }
  SUBCASE("partition holds for any seed") {
    StudentLog log = testutil::make_log(
        0, {{0, 1}, {1, 0}, {2, 1}, {3, 1}, {4, 0}, {5, 1}, {6, 0}, {7, 1}}, map);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const StudentSplit split = data::split_candidate_meta(log, 0.8, seed);
      std::set<QuestionId> together(split.candidate.begin(), split.candidate.end());
      for (QuestionId q : split.meta) {
        CHECK(together.count(q) == 0);
        together.insert(q);
      }
      CHECK(together.size() == 8);
    }
  }
  SUBCASE("fewer than 2 records is an error") {
    StudentLog log = testutil::make_log(0, {{0, 1}}, map);
    CHECK_THROWS_AS(data::split_candidate_meta(log, 0.8, 1), DataError);
  }
}

namespace {

// Answer-count fixture: student s answers question q `counts[q]` times total
// across synthetic single-record logs.
std::vector<StudentLog> logs_with_counts(const std::vector<int>& counts) {
  std::vector<StudentLog> logs;
  int student = 0;
  for (std::size_t q = 0; q < counts.size(); ++q) {
    for (int k = 0; k < counts[q]; ++k) {
      StudentLog log;
      log.student = student++;
      log.records.push_back({static_cast<QuestionId>(q), {0}, 1, 0});
      logs.push_back(log);
    }
  }
  return logs;
}

}  // namespace

TEST_CASE("compute_popular_set: top-1, tie rule, and a brute-force sort oracle") {
  SUBCASE("top question only") {
    std::vector<int> counts{5, 3, 1, 0, 0, 0, 0, 0, 0, 0};
    const PopularSet set = data::compute_popular_set(logs_with_counts(counts), 0.1, 10);
    CHECK(set.members == std::vector<QuestionId>{0});
    CHECK(set.contains(0));
    CHECK_FALSE(set.contains(1));
  }
  SUBCASE("all counts equal: lowest id wins") {
    std::vector<int> counts(10, 2);
    const PopularSet set = data::compute_popular_set(logs_with_counts(counts), 0.1, 10);
    CHECK(set.members == std::vector<QuestionId>{0});
  }
  SUBCASE("matches an independent full sort on 100 questions") {
    prng::Engine rng(404);
    std::vector<int> counts(100);
    for (int& c : counts) c = static_cast<int>(rng.below(7));
    const auto logs = logs_with_counts(counts);
    const PopularSet set = data::compute_popular_set(logs, 0.25, 100);

    // Oracle: full sort by (count desc, id asc), take floor(x * Q).
    std::vector<int> order(100);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return counts[a] != counts[b] ? counts[a] > counts[b] : a < b;
    });
    std::vector<QuestionId> expected(order.begin(), order.begin() + 25);
    std::sort(expected.begin(), expected.end());
    CHECK(set.members == expected);
    CHECK(set.size() == 25);
  }
  SUBCASE("size is exactly floor(x*Q)") {
    const auto logs = logs_with_counts(std::vector<int>(13, 1));
    CHECK(data::compute_popular_set(logs, 0.5, 13).size() == 6);
  }
  SUBCASE("fraction outside (0,1) is a config error") {
    const auto logs = logs_with_counts({1, 1});
    CHECK_THROWS_AS(data::compute_popular_set(logs, 0.0, 2), ConfigError);
    CHECK_THROWS_AS(data::compute_popular_set(logs, 1.0, 2), ConfigError);
  }
}
