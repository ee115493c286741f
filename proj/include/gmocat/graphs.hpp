#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmocat/types.hpp"

namespace gmocat::graphs {

/// Undirected bipartite question-concept relation graph. Neighbor lists are
/// sorted ascending.
struct CorrelationGraph {
  std::vector<std::vector<ConceptId>> question_neighbors;  // N_q
  std::vector<std::vector<QuestionId>> concept_neighbors;  // N_c

  int question_count() const { return static_cast<int>(question_neighbors.size()); }
  int concept_count() const { return static_cast<int>(concept_neighbors.size()); }
};

/// Directed concept-to-concept prerequisite graph. `neighbors` is the union
/// of in- and out-neighbors, which is the neighborhood used for aggregation.
struct PrerequisiteGraph {
  int concept_count = 0;
  std::vector<std::pair<ConceptId, ConceptId>> edges;  // sorted, unique, no self edges
  std::vector<std::vector<ConceptId>> out_neighbors;
  std::vector<std::vector<ConceptId>> in_neighbors;
  std::vector<std::vector<ConceptId>> neighbors;
};

/// Intermediates of the log-driven induction: transition counts n, the
/// row-normalized correct matrix C (zero diagonal, zero rows kept zero), its
/// min-max normalization, and the thresholded transition matrix.
struct InductionMatrices {
  Eigen::MatrixXd counts;
  Eigen::MatrixXd correct;
  Eigen::MatrixXd normalized;
  Eigen::MatrixXi transition;
  double threshold = 0.0;
  bool degenerate = false;  // max C == min C; normalization undefined, graph empty
};

CorrelationGraph build_correlation_graph(
    const std::vector<std::vector<ConceptId>>& question_concepts, int concept_count);

/// n[i][j] = number of adjacent record pairs, in any log, where both answers
/// are correct, the first covers concept i and the second covers concept j
/// (all ordered concept pairs for multi-concept questions, i != j).
Eigen::MatrixXd count_transitions(std::span<const StudentLog> logs, int concept_count);

InductionMatrices induction_matrices(const Eigen::MatrixXd& counts);

/// Edge i->j iff T[i][j] = 1 and T[j][i] = 0; the rule forces asymmetry.
PrerequisiteGraph induce_prerequisite_graph(const InductionMatrices& matrices);

/// Builds the graph from shipped edges (used when a dataset provides them,
/// bypassing induction). Self edges and duplicates are dropped.
PrerequisiteGraph prerequisite_from_edges(
    std::span<const std::pair<ConceptId, ConceptId>> edges, int concept_count);

/// Neighbor queries with range checking; result ordering is ascending id.
const std::vector<ConceptId>& neighbors(const CorrelationGraph& g, QuestionId q);
const std::vector<QuestionId>& neighbors_of_concept(const CorrelationGraph& g, ConceptId c);
const std::vector<ConceptId>& neighbors(const PrerequisiteGraph& g, ConceptId c);

/// Writes `src,dst,relation` rows (relation in {cor, pre}); correlation edges
/// are emitted once as question,concept.
void export_edges(const std::string& path, const CorrelationGraph* correlation,
                  const PrerequisiteGraph* prerequisite);

}  // namespace gmocat::graphs
