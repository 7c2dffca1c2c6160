#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "matchlearn/matmodel.hpp"
#include "matchlearn/samplers.hpp"

namespace matchlearn {

struct EstimatorConfig {
  int r = 1;
  double eta = 0.75;
  /// Number of batch pairs; the data are cut into 2m equal slices.
  int m = 1;
  /// Entrywise sampling probability of the observing scheme.
  double nu = 0.0;
  bool record_trace = false;
  /// Relative smallest singular value below which G counts as singular.
  double min_g_singular = 1e-10;
  /// Throw when an iterate loses orthonormality beyond 1e-8.
  bool check_orthonormality = false;

  void validate() const;
};

/// Iterate of the factored model U G V^T; g_svd holds (L_G, Lambda_G, R_G).
struct FactorState {
  Matrix U;
  Matrix G;
  Matrix V;
  TruncatedSvd g_svd;

  Matrix product() const { return U * G * V.transpose(); }
};

/// Builds a state, computing the SVD of G and rejecting a singular core.
FactorState make_state(Matrix U, Matrix G, Matrix V, double min_g_singular = 1e-10);

struct TraceRow {
  int batch = 0;
  /// |M^(p) - M|_max^2 / lambda_min^2; NaN without a reference matrix.
  double rel_max_err_sq = 0.0;
  double g_sigma_min = 0.0;
  double g_sigma_max = 0.0;
  /// Frobenius norm of the scaled gradient (2 N0 nu)^-1 dL/dM on the slice G was fit on.
  double grad_norm = 0.0;
  /// max(|U^T U - I|_max, |V^T V - I|_max).
  double orth_err = 0.0;
};

struct FitTrace {
  std::vector<TraceRow> rows;
};

struct FitResult {
  Matrix M_init;
  FactorState state;
  FitTrace trace;
};

/// Half-open index range [begin, end).
struct BatchRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const BatchRange&, const BatchRange&) = default;
};

inline BatchSlice slice_of(BatchSlice all, BatchRange r) { return all.subspan(r.begin, r.size()); }

/// 2m contiguous equal ranges of floor(T / 2m); the remainder is dropped with a warning.
std::vector<BatchRange> partition_batches(std::size_t T, int m);

struct SpectralInit {
  Matrix U;
  Matrix V;
};

/// Top-r singular subspaces of (nu N0)^-1 sum_t Y_t o X_t over the slice.
SpectralInit spectral_init(BatchSlice slice, int d1, int d2, double nu, int r);

/// Least-squares core argmin_G sum (u_i^T G v_j - y)^2 over the revealed entries.
Matrix solve_G(const Matrix& U, const Matrix& V, BatchSlice slice, double min_g_singular = 1e-10);

/// Squared loss sum_t |Y_t - X_t o (U G V^T)|_F^2.
double loss(const Matrix& U, const Matrix& G, const Matrix& V, BatchSlice slice);
/// dL/dM = 2 sum_t (X_t o (U G V^T) - Y_t), dense d1 x d2.
Matrix loss_gradient(const Matrix& U, const Matrix& G, const Matrix& V, BatchSlice slice);
/// Same gradient from a precomputed product A = U G V^T.
Matrix loss_gradient(const Matrix& A, BatchSlice slice);

/// One rotation-calibrated step on `step` followed by the refit of G on `refit`.
FactorState gradient_step(const FactorState& state, BatchSlice step, BatchSlice refit, double eta,
                          double nu, double min_g_singular = 1e-10);

/// Algorithm driver: spectral init on slice 1, refit on slice 2, then m-1
/// rotation-calibrated steps consuming slices (2p+1, 2p+2).
/// `initial` overrides the spectral initialization.
FitResult fit(BatchSlice data, int d1, int d2, const EstimatorConfig& config,
              const RewardMatrix* truth = nullptr,
              const std::optional<SpectralInit>& initial = std::nullopt);

inline FitResult fit(const ObservationBatch& batch, const EstimatorConfig& config,
                     const RewardMatrix* truth = nullptr) {
  return fit(BatchSlice(batch.records), batch.d1, batch.d2, config, truth);
}

/// Singular values of sum_t Y_t over the slice (the scree spectrum).
Vector scree_spectrum(BatchSlice slice, int d1, int d2);

struct RankChoice {
  int r = 1;
  /// No ratio lambda_k / lambda_{k+1} reached 3; r was set to max_rank.
  bool no_elbow = false;
};

RankChoice estimate_rank(const Vector& singular_values, int max_rank);

}  // namespace matchlearn
