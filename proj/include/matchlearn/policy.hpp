#pragma once

#include "matchlearn/inference.hpp"
#include "matchlearn/matmodel.hpp"
#include "matchlearn/samplers.hpp"

namespace matchlearn {

struct AssignmentResult {
  /// col_of_row[i] is the column assigned to row i.
  std::vector<int> col_of_row;
  double cost = 0.0;
  /// Optimal dual potentials: cost(i,j) - row_potential[i] - col_potential[j] >= 0,
  /// with equality on assigned pairs and col_potential == 0 on unassigned columns.
  std::vector<double> row_potential;
  std::vector<double> col_potential;
};

/// Rectangular min-cost assignment (rows <= cols) by shortest augmenting
/// paths, O(rows^2 cols). Any optimal assignment may be returned.
AssignmentResult solve_assignment(const Matrix& cost);

/// Maximum-reward injection rows -> columns. Among optimal assignments the
/// lexicographically smallest column sequence (j(0), j(1), ...) is returned.
Matching optimal_one_to_one(const Matrix& M_hat);

/// Unit weight on every matched pair.
LinearForm matching_to_linear_form(const Matching& matching);

struct PolicyEvaluation {
  Matching matching;
  double total_reward_estimate = 0.0;
  InferenceResult inference;
};

PolicyEvaluation evaluate_policy(const PipelineArtifacts& art, const Matching& matching,
                                 double alpha);

}  // namespace matchlearn
