#include "matchlearn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "matchlearn/diagnostics.hpp"

namespace matchlearn {

AssignmentResult solve_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (n > m) throw ArgumentError("assignment: more rows than columns");
  if (!cost.allFinite()) throw ArgumentError("assignment: non-finite cost");
  constexpr double inf = std::numeric_limits<double>::infinity();

  // 1-based potentials; column 0 is the virtual root of each search tree.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> row_of_col(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = row_of_col[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[row_of_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[j0] != 0);
    do {
      const int j1 = way[j0];
      row_of_col[j0] = row_of_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentResult out;
  out.col_of_row.assign(n, -1);
  for (int j = 1; j <= m; ++j)
    if (row_of_col[j] != 0) out.col_of_row[row_of_col[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) out.cost += cost(i, out.col_of_row[i]);
  out.row_potential.assign(u.begin() + 1, u.end());
  out.col_potential.assign(v.begin() + 1, v.end());
  return out;
}

namespace {

struct SubProblem {
  Matrix cost;
  std::vector<int> rows;
  std::vector<int> cols;
};

SubProblem restrict_to(const Matrix& cost, int first_row, const std::vector<int>& free_cols) {
  SubProblem sp;
  for (int i = first_row; i < cost.rows(); ++i) sp.rows.push_back(i);
  sp.cols = free_cols;
  sp.cost.resize(sp.rows.size(), sp.cols.size());
  for (std::size_t a = 0; a < sp.rows.size(); ++a)
    for (std::size_t b = 0; b < sp.cols.size(); ++b) sp.cost(a, b) = cost(sp.rows[a], sp.cols[b]);
  return sp;
}

}  // namespace

Matching optimal_one_to_one(const Matrix& M_hat) {
  const int d1 = static_cast<int>(M_hat.rows());
  const int d2 = static_cast<int>(M_hat.cols());
  if (d1 > d2) throw ArgumentError("optimal_one_to_one: need d1 <= d2");
  if (d1 == 0) return Matching(0, d2, {});
  const Matrix cost = -M_hat;
  const double tol = 1e-10 * std::max(1.0, cost.cwiseAbs().maxCoeff()) * d1;

  // Greedy lexicographic refinement: row by row, take the smallest column
  // that still admits an optimal completion. Only tight edges under the
  // current optimal duals can appear in an optimal assignment.
  std::vector<int> free_cols(d2);
  for (int j = 0; j < d2; ++j) free_cols[j] = j;
  AssignmentResult cur = solve_assignment(cost);
  std::vector<int> chosen(d1);
  for (int i = 0; i < d1; ++i) {
    // cur describes rows i.. over free_cols (indices local to the subproblem).
    int pick = cur.col_of_row[0];
    const double remaining = cur.cost;
    for (int b = 0; b < pick; ++b) {
      const double reduced = cost(i, free_cols[b]) - cur.row_potential[0] - cur.col_potential[b];
      if (reduced > tol) continue;
      std::vector<int> rest_cols = free_cols;
      rest_cols.erase(rest_cols.begin() + b);
      double completion = cost(i, free_cols[b]);
      AssignmentResult rest;
      rest.col_potential.assign(rest_cols.size(), 0.0);
      if (i + 1 < d1) {
        rest = solve_assignment(restrict_to(cost, i + 1, rest_cols).cost);
        completion += rest.cost;
      }
      if (completion <= remaining + tol) {
        pick = b;
        cur.col_of_row.assign(1, b);
        cur.col_of_row.insert(cur.col_of_row.end(), rest.col_of_row.begin(), rest.col_of_row.end());
        // Re-index the remainder into the current local numbering (shift past b).
        for (std::size_t k = 1; k < cur.col_of_row.size(); ++k)
          if (cur.col_of_row[k] >= b) ++cur.col_of_row[k];
        cur.row_potential.assign(1, 0.0);
        cur.row_potential.insert(cur.row_potential.end(), rest.row_potential.begin(),
                                 rest.row_potential.end());
        cur.col_potential = rest.col_potential;
        cur.col_potential.insert(cur.col_potential.begin() + b, 0.0);
        cur.cost = completion;
        break;
      }
    }
    chosen[i] = free_cols[pick];
    // Drop row i and column `pick`; the restricted duals stay optimal.
    const double fixed_cost = cost(i, free_cols[pick]);
    free_cols.erase(free_cols.begin() + pick);
    std::vector<int> next_cols(cur.col_of_row.begin() + 1, cur.col_of_row.end());
    for (int& c : next_cols)
      if (c > pick) --c;
    cur.col_of_row = std::move(next_cols);
    cur.row_potential.erase(cur.row_potential.begin());
    cur.col_potential.erase(cur.col_potential.begin() + pick);
    cur.cost -= fixed_cost;
  }

  std::vector<Pair> pairs;
  pairs.reserve(d1);
  for (int i = 0; i < d1; ++i) pairs.push_back({i, chosen[i]});
  return Matching(d1, d2, std::move(pairs));
}

LinearForm matching_to_linear_form(const Matching& matching) {
  std::vector<LinearForm::Entry> entries;
  entries.reserve(matching.size());
  for (const auto& p : matching.pairs()) entries.push_back({p.i, p.j, 1.0});
  if (matching.d1() == 0) return LinearForm(0, matching.d2());
  return LinearForm::from_triplets(matching.d1(), matching.d2(), std::move(entries));
}

PolicyEvaluation evaluate_policy(const PipelineArtifacts& art, const Matching& matching,
                                 double alpha) {
  PolicyEvaluation out;
  out.matching = matching;
  out.inference = infer_linear_form(art, matching_to_linear_form(matching), alpha, 0.0,
                                    Direction::two_sided);
  out.total_reward_estimate = out.inference.point;
  return out;
}

}  // namespace matchlearn
