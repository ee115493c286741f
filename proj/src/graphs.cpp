#include "gmocat/graphs.hpp"

#include <algorithm>
#include <fstream>

#include "gmocat/errors.hpp"

namespace gmocat::graphs {

CorrelationGraph build_correlation_graph(
    const std::vector<std::vector<ConceptId>>& question_concepts, int concept_count) {
  CorrelationGraph g;
  g.question_neighbors.resize(question_concepts.size());
  g.concept_neighbors.resize(concept_count);
  for (std::size_t q = 0; q < question_concepts.size(); ++q) {
    const auto& concepts = question_concepts[q];
    if (concepts.empty()) {
      throw DataError("question " + std::to_string(q) + " has an empty concept set");
    }
    for (ConceptId c : concepts) {
      g.question_neighbors[q].push_back(c);
      g.concept_neighbors.at(c).push_back(static_cast<QuestionId>(q));
    }
    std::sort(g.question_neighbors[q].begin(), g.question_neighbors[q].end());
  }
  for (auto& list : g.concept_neighbors) std::sort(list.begin(), list.end());
  return g;
}

Eigen::MatrixXd count_transitions(std::span<const StudentLog> logs, int concept_count) {
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(concept_count, concept_count);
  for (const StudentLog& log : logs) {
    for (std::size_t r = 0; r + 1 < log.records.size(); ++r) {
      const ResponseRecord& first = log.records[r];
      const ResponseRecord& second = log.records[r + 1];
      if (first.correct != 1 || second.correct != 1) continue;
      for (ConceptId i : first.concepts) {
        for (ConceptId j : second.concepts) {
          if (i == j) continue;
          n(i, j) += 1.0;
        }
      }
    }
  }
  return n;
}

InductionMatrices induction_matrices(const Eigen::MatrixXd& counts) {
  const Eigen::Index k = counts.rows();
  InductionMatrices m;
  m.counts = counts;
  m.correct = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double row_sum = counts.row(i).sum();
    if (row_sum <= 0.0) continue;  // zero rows stay zero rather than NaN
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      m.correct(i, j) = counts(i, j) / row_sum;
    }
  }

  const double lo = m.correct.minCoeff();
  const double hi = m.correct.maxCoeff();
  if (hi == lo) {
    m.degenerate = true;
    m.normalized = Eigen::MatrixXd::Zero(k, k);
    m.transition = Eigen::MatrixXi::Zero(k, k);
    m.threshold = 0.0;
    return m;
  }
  m.normalized = (m.correct.array() - lo) / (hi - lo);
  // Sequential row-major accumulation: the threshold sits on strict
  // comparisons, so its value must not depend on the reduction order.
  double sum = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) sum += m.normalized(i, j);
  }
  m.threshold = sum / static_cast<double>(k * k);
  m.transition = (m.normalized.array() > m.threshold).cast<int>();
  return m;
}

PrerequisiteGraph induce_prerequisite_graph(const InductionMatrices& matrices) {
  const int k = static_cast<int>(matrices.counts.rows());
  std::vector<std::pair<ConceptId, ConceptId>> edges;
  if (!matrices.degenerate) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        if (i == j) continue;
        if (matrices.transition(i, j) == 1 && matrices.transition(j, i) != 1) {
          edges.emplace_back(i, j);
        }
      }
    }
  }
  return prerequisite_from_edges(edges, k);
}

PrerequisiteGraph prerequisite_from_edges(
    std::span<const std::pair<ConceptId, ConceptId>> edges, int concept_count) {
  PrerequisiteGraph g;
  g.concept_count = concept_count;
  g.edges.assign(edges.begin(), edges.end());
  std::erase_if(g.edges, [](const auto& e) { return e.first == e.second; });
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());

  g.out_neighbors.resize(concept_count);
  g.in_neighbors.resize(concept_count);
  g.neighbors.resize(concept_count);
  for (const auto& [src, dst] : g.edges) {
    g.out_neighbors.at(src).push_back(dst);
    g.in_neighbors.at(dst).push_back(src);
  }
  for (int c = 0; c < concept_count; ++c) {
    std::sort(g.out_neighbors[c].begin(), g.out_neighbors[c].end());
    std::sort(g.in_neighbors[c].begin(), g.in_neighbors[c].end());
    g.neighbors[c].resize(g.out_neighbors[c].size() + g.in_neighbors[c].size());
    std::merge(g.out_neighbors[c].begin(), g.out_neighbors[c].end(),
               g.in_neighbors[c].begin(), g.in_neighbors[c].end(), g.neighbors[c].begin());
    g.neighbors[c].erase(std::unique(g.neighbors[c].begin(), g.neighbors[c].end()),
                         g.neighbors[c].end());
  }
  return g;
}

namespace {
void check_range(int node, int count, const char* what) {
  if (node < 0 || node >= count) {
    throw ContractViolation(std::string(what) + " id " + std::to_string(node) +
                            " out of range [0," + std::to_string(count) + ")");
  }
}
}  // namespace

const std::vector<ConceptId>& neighbors(const CorrelationGraph& g, QuestionId q) {
  check_range(q, g.question_count(), "question");
  return g.question_neighbors[q];
}

const std::vector<QuestionId>& neighbors_of_concept(const CorrelationGraph& g, ConceptId c) {
  check_range(c, g.concept_count(), "concept");
  return g.concept_neighbors[c];
}

const std::vector<ConceptId>& neighbors(const PrerequisiteGraph& g, ConceptId c) {
  check_range(c, g.concept_count, "concept");
  return g.neighbors[c];
}

void export_edges(const std::string& path, const CorrelationGraph* correlation,
                  const PrerequisiteGraph* prerequisite) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "src,dst,relation\n";
  if (correlation != nullptr) {
    for (int q = 0; q < correlation->question_count(); ++q) {
      for (ConceptId c : correlation->question_neighbors[q]) {
        out << q << "," << c << ",cor\n";
      }
    }
  }
  if (prerequisite != nullptr) {
    for (const auto& [src, dst] : prerequisite->edges) {
      out << src << "," << dst << ",pre\n";
    }
  }
}

}  // namespace gmocat::graphs
