#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "matchlearn/estimator.hpp"
#include "matchlearn/matmodel.hpp"
#include "matchlearn/samplers.hpp"

namespace matchlearn {

/// Two equal halves of [0, T): half1 = [T0, 2 T0), half2 = [0, T0).
struct SplitPlan {
  BatchRange half1;
  BatchRange half2;
  std::size_t dropped = 0;
};

SplitPlan split(std::size_t T);

struct DebiasedEstimate {
  Matrix m_unbs;
  /// 1 or 2: which half's initial estimate was corrected.
  int source_init = 1;
  double nu_used = 0.0;
};

/// M_init + (T0 nu)^-1 sum_t (Y_t - X_t o M_init) over the held-out slice.
DebiasedEstimate debias(const Matrix& M_init, BatchSlice other_half, double nu);

/// M_init + T0^-1 sum_t (Y_t - X_t o M_init) o P_inv with entrywise inverse propensities.
DebiasedEstimate debias_ipw(const Matrix& M_init, BatchSlice other_half, const Matrix& p_inv);

struct RankProjection {
  Matrix M;
  Matrix U;
  Matrix V;
  bool degenerate = false;
};

/// Best rank-r approximation U U^T A V V^T.
RankProjection project_rank_r(const Matrix& m_unbs, int r);

/// Everything the linear-form inference needs from one pass over a batch.
struct PipelineArtifacts {
  int d1 = 0;
  int d2 = 0;
  int r = 0;
  /// Observations used (2 T0).
  std::size_t T = 0;
  double nu = 0.0;
  double nu_mc_se = 0.0;
  Matrix M_hat;
  /// Top-r singular subspaces of M_hat, used for the plug-in tangent projection.
  Matrix U_hat;
  Matrix V_hat;
  std::array<FitResult, 2> fits;
  std::array<DebiasedEstimate, 2> halves;
  std::array<RankProjection, 2> projections;
  double sigma_hat_sq = 0.0;
};

/// Batch pairs used by each half's fit: ceil(m / 2).
int per_half_batch_pairs(int m);

/// (M1 + M2) / 2.
Matrix combine_halves(const Matrix& M1, const Matrix& M2);

/// Split, fit each half, cross-debias, project to rank r, average, and
/// estimate the noise variance. `config.m` is the batch-pair count for the
/// whole sample; each half fits with per_half_batch_pairs(config.m).
PipelineArtifacts combine_and_estimate(const ObservationBatch& batch, const EstimatorConfig& config,
                                       double nu_mc_se = 0.0, const RewardMatrix* truth = nullptr);

/// sigma_hat^2 = T^-1 sum_{D2} |Y_t - X_t o M1_init|^2 / sum(X_t)
///             + T^-1 sum_{D1} |Y_t - X_t o M2_init|^2 / sum(X_t).
/// Empty matchings are skipped with a warning.
double estimate_sigma(const Matrix& M1_init, BatchSlice residual_half_for_1, const Matrix& M2_init,
                      BatchSlice residual_half_for_2, std::size_t T);

/// sigma_hat |P(Q)|_F sqrt(1 / (T nu)).
double standard_error(double sigma_hat_sq, double proj_mag_hat, double T, double nu);

struct Interval {
  double lo;
  double hi;
};

/// point -/+ z_{alpha/2} se.
Interval confidence_interval(double point, double se, double alpha);

enum class Direction { greater, less, two_sided };

struct TestOutcome {
  double z = 0.0;
  double p_value = 1.0;
  /// Levels among {0.10, 0.05, 0.01} at which H0 is rejected.
  std::vector<double> reject_at;
};

/// z = (point - v0) / se; "greater" tests H0: <M,Q> <= v0.
TestOutcome test_threshold(double point, double se, double v0, Direction direction);

struct InferenceResult {
  LinearForm q;
  double point = 0.0;
  double sigma_hat_sq = 0.0;
  double proj_mag_hat = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  /// NaN when se == 0 (no test is possible).
  double z = 0.0;
  double p_value = 1.0;
  double alpha = 0.05;
  double v0 = 0.0;
  Direction direction = Direction::two_sided;
  double nu = 0.0;
  double nu_mc_se = 0.0;
  std::size_t T = 0;
};

/// Point estimate, standard error, CI and test for <M, Q>.
InferenceResult infer_linear_form(const PipelineArtifacts& art, const LinearForm& Q, double alpha,
                                  double v0 = 0.0, Direction direction = Direction::two_sided);

/// Two-sided test of <M, Q1 - Q2> = 0.
InferenceResult compare_matchings(const PipelineArtifacts& art, const LinearForm& Q1,
                                  const LinearForm& Q2, double alpha);

}  // namespace matchlearn
