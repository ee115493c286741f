#include <doctest.h>

#include <algorithm>
#include <set>

#include "gmocat/errors.hpp"
#include "gmocat/graphs.hpp"
#include "gmocat/prng.hpp"
#include "test_util.hpp"

using namespace gmocat;
using Eigen::MatrixXd;

namespace {

std::vector<std::vector<ConceptId>> random_question_map(prng::Engine& rng, int questions,
                                                        int concepts) {
  std::vector<std::vector<ConceptId>> map(questions);
  for (auto& cs : map) {
    const int n = rng.uniform_int(1, 3);
    std::set<ConceptId> chosen;
    while (static_cast<int>(chosen.size()) < n) {
      chosen.insert(static_cast<ConceptId>(rng.below(concepts)));
    }
    cs.assign(chosen.begin(), chosen.end());
  }
  return map;
}

std::vector<StudentLog> random_logs(prng::Engine& rng, int students, int records_per_student,
                                    const std::vector<std::vector<ConceptId>>& map) {
  std::vector<StudentLog> logs;
  for (int s = 0; s < students; ++s) {
    std::vector<int> order(map.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    StudentLog log;
    log.student = s;
    for (int r = 0; r < records_per_student && r < static_cast<int>(order.size()); ++r) {
      log.records.push_back({static_cast<QuestionId>(order[r]), map[order[r]],
                             rng.bernoulli(0.7), r});
    }
    logs.push_back(log);
  }
  return logs;
}

// Independent transcription of the induction procedure, used as the oracle:
// C_ij = n_ij / sum_k n_ik for i != j (0 on the diagonal and for zero rows),
// min-max normalize, threshold at the mean of the normalized matrix,
// T_ij = normalized > threshold, edge i->j iff T_ij = 1 and T_ji != 1.
std::set<std::pair<int, int>> induction_oracle(const MatrixXd& n) {
  const int k = static_cast<int>(n.rows());
  MatrixXd c = MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < k; ++j) row_sum += n(i, j);
    if (row_sum == 0.0) continue;
    for (int j = 0; j < k; ++j) {
      if (i != j) c(i, j) = n(i, j) / row_sum;
    }
  }
  double lo = c(0, 0), hi = c(0, 0);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      lo = std::min(lo, c(i, j));
      hi = std::max(hi, c(i, j));
    }
  }
  std::set<std::pair<int, int>> edges;
  if (hi == lo) return edges;

  MatrixXd norm(k, k);
  double mean = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      norm(i, j) = (c(i, j) - lo) / (hi - lo);
      mean += norm(i, j);
    }
  }
  mean /= (k * k);
  auto t = [&](int i, int j) { return norm(i, j) > mean ? 1 : 0; };
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (i != j && t(i, j) == 1 && t(j, i) != 1) edges.insert({i, j});
    }
  }
  return edges;
}

std::set<std::pair<int, int>> edge_set(const graphs::PrerequisiteGraph& g) {
  return {g.edges.begin(), g.edges.end()};
}

}  // namespace

TEST_CASE("correlation graph: single edge and symmetry by double scan") {
  SUBCASE("one question, one concept") {
    const graphs::CorrelationGraph g = graphs::build_correlation_graph({{0}}, 1);
    CHECK(graphs::neighbors(g, 0) == std::vector<ConceptId>{0});
    CHECK(graphs::neighbors_of_concept(g, 0) == std::vector<QuestionId>{0});
  }
  SUBCASE("empty concept set rejected") {
    CHECK_THROWS_AS(graphs::build_correlation_graph({{}}, 1), DataError);
  }
  SUBCASE("random 50-question map is bipartite-symmetric") {
    prng::Engine rng(11);
    const auto map = random_question_map(rng, 50, 12);
    const graphs::CorrelationGraph g = graphs::build_correlation_graph(map, 12);
    for (int q = 0; q < 50; ++q) {
      for (ConceptId c : g.question_neighbors[q]) {
        const auto& back = g.concept_neighbors[c];
        CHECK(std::find(back.begin(), back.end(), q) != back.end());
      }
    }
    for (int c = 0; c < 12; ++c) {
      for (QuestionId q : g.concept_neighbors[c]) {
        const auto& fwd = g.question_neighbors[q];
        CHECK(std::find(fwd.begin(), fwd.end(), c) != fwd.end());
      }
    }
  }
}

TEST_CASE("count_transitions: ordered pairs of adjacent correct answers") {
  std::vector<std::vector<ConceptId>> map{{0}, {1}};

  SUBCASE("single ordered pair") {
    const StudentLog log = testutil::make_log(0, {{0, 1}, {1, 1}}, map);
    const MatrixXd n = graphs::count_transitions(std::vector<StudentLog>{log}, 2);
    CHECK(n(0, 1) == 1.0);
    CHECK(n(1, 0) == 0.0);
  }
  SUBCASE("an incorrect answer voids the pair") {
    const StudentLog log = testutil::make_log(0, {{0, 1}, {1, 0}}, map);
    const MatrixXd n = graphs::count_transitions(std::vector<StudentLog>{log}, 2);
    CHECK(n.sum() == 0.0);
  }
  SUBCASE("multi-concept records count all ordered pairs; pairwise oracle") {
    std::vector<std::vector<ConceptId>> mc_map{{0, 1}, {2}, {1, 3}, {0}};
    const StudentLog log = testutil::make_log(0, {{0, 1}, {1, 1}, {2, 1}, {3, 0}}, mc_map);
    const MatrixXd n = graphs::count_transitions(std::vector<StudentLog>{log}, 4);

    MatrixXd oracle = MatrixXd::Zero(4, 4);
    for (std::size_t r = 0; r + 1 < log.records.size(); ++r) {
      if (log.records[r].correct != 1 || log.records[r + 1].correct != 1) continue;
      for (ConceptId i : log.records[r].concepts) {
        for (ConceptId j : log.records[r + 1].concepts) {
          if (i != j) oracle(i, j) += 1.0;
        }
      }
    }
    CHECK(n == oracle);
    CHECK(n(0, 2) == 1.0);  // q0 -> q1
    CHECK(n(1, 2) == 1.0);
    CHECK(n(2, 1) == 1.0);  // q1 -> q2
    CHECK(n(2, 3) == 1.0);
  }
}

TEST_CASE("prerequisite induction follows the count/threshold procedure") {
  SUBCASE("two-concept hand case") {
    MatrixXd n(2, 2);
    n << 0, 9, 0, 1;
    const graphs::InductionMatrices m = graphs::induction_matrices(n);
    CHECK_FALSE(m.degenerate);
    CHECK(m.correct(0, 1) == 1.0);
    CHECK(m.correct(1, 0) == 0.0);
    CHECK(m.correct(1, 1) == 0.0);  // diagonal forced to zero
    const graphs::PrerequisiteGraph g = graphs::induce_prerequisite_graph(m);
    CHECK(edge_set(g) == std::set<std::pair<int, int>>{{0, 1}});
  }
  SUBCASE("all-zero counts give an empty graph with the degenerate flag") {
    const graphs::InductionMatrices m = graphs::induction_matrices(MatrixXd::Zero(3, 3));
    CHECK(m.degenerate);
    CHECK(graphs::induce_prerequisite_graph(m).edges.empty());
  }
  SUBCASE("random count matrices match the verbatim oracle") {
    prng::Engine rng(21);
    for (int trial = 0; trial < 200; ++trial) {
      const int k = rng.uniform_int(2, 6);
      MatrixXd n(k, k);
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) n(i, j) = static_cast<double>(rng.below(8));
      }
      const graphs::PrerequisiteGraph g =
          graphs::induce_prerequisite_graph(graphs::induction_matrices(n));
      CHECK(edge_set(g) == induction_oracle(n));
    }
  }
  SUBCASE("induced edges are asymmetric and rows of C are probability-like") {
    prng::Engine rng(22);
    for (int trial = 0; trial < 50; ++trial) {
      const int k = 5;
      MatrixXd n(k, k);
      for (int i = 0; i < k * k; ++i) n(i / k, i % k) = static_cast<double>(rng.below(5));
      n.diagonal().setZero();  // count_transitions never produces self pairs
      const graphs::InductionMatrices m = graphs::induction_matrices(n);
      for (int i = 0; i < k; ++i) {
        const double row_sum = m.correct.row(i).sum();
        CHECK((row_sum == 0.0 || std::abs(row_sum - 1.0) < 1e-12));
      }
      const auto edges = edge_set(graphs::induce_prerequisite_graph(m));
      for (const auto& [src, dst] : edges) {
        CHECK(edges.count({dst, src}) == 0);
      }
    }
  }
  SUBCASE("induction is invariant to student ordering") {
    prng::Engine rng(23);
    const auto map = random_question_map(rng, 20, 6);
    std::vector<StudentLog> logs = random_logs(rng, 10, 12, map);
    const MatrixXd n1 = graphs::count_transitions(logs, 6);
    std::reverse(logs.begin(), logs.end());
    const MatrixXd n2 = graphs::count_transitions(logs, 6);
    CHECK(n1 == n2);
  }
}

TEST_CASE("full pipeline on toy logs matches the oracle end to end") {
  prng::Engine rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int concepts = rng.uniform_int(3, 6);
    const auto map = random_question_map(rng, 15, concepts);
    const auto logs = random_logs(rng, 8, 10, map);
    const MatrixXd n = graphs::count_transitions(logs, concepts);
    const auto edges = edge_set(graphs::induce_prerequisite_graph(graphs::induction_matrices(n)));
    CHECK(edges == induction_oracle(n));
  }
}

TEST_CASE("neighbor queries: ordering, isolation, range checks, matrix oracle") {
  SUBCASE("isolated concept has no neighbors") {
    const graphs::PrerequisiteGraph g = graphs::prerequisite_from_edges(
        std::vector<std::pair<ConceptId, ConceptId>>{{0, 1}}, 3);
    CHECK(graphs::neighbors(g, 2).empty());
    CHECK(graphs::neighbors(g, 0) == std::vector<ConceptId>{1});
    CHECK(graphs::neighbors(g, 1) == std::vector<ConceptId>{0});  // union of in/out
  }
  SUBCASE("out of range throws") {
    const graphs::CorrelationGraph g = graphs::build_correlation_graph({{0}}, 1);
    CHECK_THROWS_AS(graphs::neighbors(g, 5), ContractViolation);
    const graphs::PrerequisiteGraph p = graphs::prerequisite_from_edges(
        std::vector<std::pair<ConceptId, ConceptId>>{}, 2);
    CHECK_THROWS_AS(graphs::neighbors(p, -1), ContractViolation);
  }
  SUBCASE("10-node random graph matches a dense adjacency oracle") {
    prng::Engine rng(41);
    std::vector<std::pair<ConceptId, ConceptId>> edges;
    bool adj[10][10] = {};
    for (int e = 0; e < 25; ++e) {
      const int i = static_cast<int>(rng.below(10));
      const int j = static_cast<int>(rng.below(10));
      if (i == j) continue;
      edges.push_back({i, j});
      adj[i][j] = true;
    }
    const graphs::PrerequisiteGraph g = graphs::prerequisite_from_edges(edges, 10);
    for (int c = 0; c < 10; ++c) {
      std::vector<ConceptId> expected;
      for (int o = 0; o < 10; ++o) {
        if (adj[c][o] || adj[o][c]) expected.push_back(o);
      }
      CHECK(graphs::neighbors(g, c) == expected);
      CHECK(std::is_sorted(graphs::neighbors(g, c).begin(), graphs::neighbors(g, c).end()));
    }
  }
}

TEST_CASE("edge export writes the src,dst,relation format") {
  testutil::TempDir dir("edges");
  const graphs::CorrelationGraph cor = graphs::build_correlation_graph({{0}, {0, 1}}, 2);
  const graphs::PrerequisiteGraph pre = graphs::prerequisite_from_edges(
      std::vector<std::pair<ConceptId, ConceptId>>{{1, 0}}, 2);
  graphs::export_edges(dir.file("edges.csv"), &cor, &pre);
  CHECK(testutil::read_file(dir.file("edges.csv")) ==
        "src,dst,relation\n0,0,cor\n1,0,cor\n1,1,cor\n1,0,pre\n");
}
