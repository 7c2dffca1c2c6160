#include "matchlearn/inference.hpp"

#include <cmath>
#include <limits>

#include "matchlearn/diagnostics.hpp"
#include "matchlearn/kernels.hpp"
#include "matchlearn/normal.hpp"

namespace matchlearn {

SplitPlan split(std::size_t T) {
  if (T < 2) throw ArgumentError("split: need at least 2 observations");
  const std::size_t t0 = T / 2;
  SplitPlan plan{{t0, 2 * t0}, {0, t0}, T - 2 * t0};
  if (plan.dropped) warn("dropped_observations", "split: odd T, discarding the last observation");
  return plan;
}

DebiasedEstimate debias_ipw(const Matrix& M_init, BatchSlice other_half, const Matrix& p_inv) {
  if (other_half.empty()) throw ArgumentError("debias: empty held-out slice");
  if (p_inv.rows() != M_init.rows() || p_inv.cols() != M_init.cols()) {
    throw ArgumentError("debias_ipw: propensity dims differ from the estimate");
  }
  if (!(p_inv.minCoeff() > 0.0) || !p_inv.allFinite()) {
    throw ArgumentError("debias_ipw: inverse propensities must be positive and finite");
  }
  const double t0 = static_cast<double>(other_half.size());
  const Matrix residual = kernels::residual_sum(other_half, M_init);
  DebiasedEstimate out;
  out.m_unbs = M_init + residual.cwiseProduct(p_inv) / t0;
  out.nu_used = std::numeric_limits<double>::quiet_NaN();
  return out;
}

DebiasedEstimate debias(const Matrix& M_init, BatchSlice other_half, double nu) {
  if (!(nu > 0.0)) throw ArgumentError("debias: nu must be positive");
  DebiasedEstimate out =
      debias_ipw(M_init, other_half, Matrix::Constant(M_init.rows(), M_init.cols(), 1.0 / nu));
  out.nu_used = nu;
  return out;
}

RankProjection project_rank_r(const Matrix& m_unbs, int r) {
  auto svd = svd_r(m_unbs, r);
  RankProjection out;
  out.M = svd.U * svd.singular_values.asDiagonal() * svd.V.transpose();
  out.U = std::move(svd.U);
  out.V = std::move(svd.V);
  out.degenerate = svd.degenerate;
  return out;
}

int per_half_batch_pairs(int m) { return std::max(1, (m + 1) / 2); }

Matrix combine_halves(const Matrix& M1, const Matrix& M2) { return 0.5 * (M1 + M2); }

double estimate_sigma(const Matrix& M1_init, BatchSlice residual_half_for_1, const Matrix& M2_init,
                      BatchSlice residual_half_for_2, std::size_t T) {
  if (T == 0) throw ArgumentError("estimate_sigma: T must be positive");
  std::vector<double> terms = kernels::record_mean_sq_residual(residual_half_for_1, M1_init);
  const auto more = kernels::record_mean_sq_residual(residual_half_for_2, M2_init);
  terms.insert(terms.end(), more.begin(), more.end());

  std::size_t empty = 0;
  std::vector<double> kept;
  kept.reserve(terms.size());
  for (double v : terms) {
    if (std::isnan(v)) {
      ++empty;
    } else {
      kept.push_back(v);
    }
  }
  if (kept.empty()) {
    throw NumericalError("undefined_variance", "estimate_sigma: every matching is empty");
  }
  if (empty) {
    warn("empty_matchings", "estimate_sigma: skipped " + std::to_string(empty) + " empty matchings");
  }
  return kernels::pairwise_sum(kept) / static_cast<double>(T);
}

double standard_error(double sigma_hat_sq, double proj_mag_hat, double T, double nu) {
  return std::sqrt(sigma_hat_sq) * proj_mag_hat * std::sqrt(1.0 / (T * nu));
}

Interval confidence_interval(double point, double se, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("confidence_interval: alpha must lie in (0,1)");
  const double half = normal_quantile(1.0 - alpha / 2.0) * se;
  return {point - half, point + half};
}

TestOutcome test_threshold(double point, double se, double v0, Direction direction) {
  if (!(se > 0.0)) throw NumericalError("degenerate_test", "test_threshold: standard error is zero");
  TestOutcome out;
  out.z = (point - v0) / se;
  switch (direction) {
    case Direction::greater:
      out.p_value = normal_sf(out.z);
      break;
    case Direction::less:
      out.p_value = normal_cdf(out.z);
      break;
    case Direction::two_sided:
      out.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(out.z)));
      break;
  }
  for (double level : {0.10, 0.05, 0.01})
    if (out.p_value <= level) out.reject_at.push_back(level);
  return out;
}

PipelineArtifacts combine_and_estimate(const ObservationBatch& batch, const EstimatorConfig& config,
                                       double nu_mc_se, const RewardMatrix* truth) {
  config.validate();
  const SplitPlan plan = split(batch.size());
  const BatchSlice all(batch.records);
  const BatchSlice half1 = slice_of(all, plan.half1);
  const BatchSlice half2 = slice_of(all, plan.half2);

  PipelineArtifacts art;
  art.d1 = batch.d1;
  art.d2 = batch.d2;
  art.r = config.r;
  art.T = plan.half1.size() + plan.half2.size();
  art.nu = config.nu;
  art.nu_mc_se = nu_mc_se;

  // config.m counts batch pairs over the whole sample, so each half runs
  // ceil(m/2) pairs and keeps the batch size T / (2m) of a full-sample fit.
  EstimatorConfig half_config = config;
  half_config.m = per_half_batch_pairs(config.m);
  art.fits[0] = fit(half1, batch.d1, batch.d2, half_config, truth);
  art.fits[1] = fit(half2, batch.d1, batch.d2, half_config, truth);

  art.halves[0] = debias(art.fits[0].M_init, half2, config.nu);
  art.halves[0].source_init = 1;
  art.halves[1] = debias(art.fits[1].M_init, half1, config.nu);
  art.halves[1].source_init = 2;

  art.projections[0] = project_rank_r(art.halves[0].m_unbs, config.r);
  art.projections[1] = project_rank_r(art.halves[1].m_unbs, config.r);
  art.M_hat = combine_halves(art.projections[0].M, art.projections[1].M);

  auto svd = svd_r(art.M_hat, config.r);
  art.U_hat = std::move(svd.U);
  art.V_hat = std::move(svd.V);

  art.sigma_hat_sq =
      estimate_sigma(art.fits[0].M_init, half2, art.fits[1].M_init, half1, art.T);
  return art;
}

InferenceResult infer_linear_form(const PipelineArtifacts& art, const LinearForm& Q, double alpha,
                                  double v0, Direction direction) {
  if (Q.d1() != art.d1 || Q.d2() != art.d2) {
    throw ArgumentError("infer: linear form dims differ from the estimate");
  }
  InferenceResult res;
  res.q = Q;
  res.alpha = alpha;
  res.v0 = v0;
  res.direction = direction;
  res.nu = art.nu;
  res.nu_mc_se = art.nu_mc_se;
  res.T = art.T;
  res.point = Q.inner(art.M_hat);
  res.sigma_hat_sq = art.sigma_hat_sq;
  res.proj_mag_hat = projection_magnitude(art.U_hat, art.V_hat, Q);
  res.se = standard_error(res.sigma_hat_sq, res.proj_mag_hat, static_cast<double>(art.T), art.nu);
  const Interval ci = confidence_interval(res.point, res.se, alpha);
  res.ci_low = ci.lo;
  res.ci_high = ci.hi;
  if (res.se > 0.0) {
    const TestOutcome t = test_threshold(res.point, res.se, v0, direction);
    res.z = t.z;
    res.p_value = t.p_value;
  } else {
    res.z = std::numeric_limits<double>::quiet_NaN();
    res.p_value = std::numeric_limits<double>::quiet_NaN();
  }
  return res;
}

InferenceResult compare_matchings(const PipelineArtifacts& art, const LinearForm& Q1,
                                  const LinearForm& Q2, double alpha) {
  const LinearForm Q = Q1.minus(Q2);
  if (Q.empty()) {
    throw NumericalError("degenerate_test", "compare_matchings: the two forms are identical");
  }
  InferenceResult res = infer_linear_form(art, Q, alpha, 0.0, Direction::two_sided);
  if (!(res.se > 0.0)) {
    throw NumericalError("degenerate_test", "compare_matchings: standard error is zero");
  }
  return res;
}

}  // namespace matchlearn
