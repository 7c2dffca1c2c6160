#include "matchlearn/estimator.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "matchlearn/diagnostics.hpp"
#include "matchlearn/kernels.hpp"

namespace matchlearn {

void EstimatorConfig::validate() const {
  if (r < 1) throw ArgumentError("estimator: r must be >= 1");
  if (m < 1) throw ArgumentError("estimator: m must be >= 1");
  if (!(eta > 0.0 && eta < 1.0)) throw ArgumentError("estimator: eta must lie in (0,1)");
  if (!(nu > 0.0 && nu <= 1.0)) throw ArgumentError("estimator: nu must lie in (0,1]");
  if (!(min_g_singular > 0.0)) throw ArgumentError("estimator: min_g_singular must be positive");
}

FactorState make_state(Matrix U, Matrix G, Matrix V, double min_g_singular) {
  FactorState s{std::move(U), std::move(G), std::move(V), {}};
  const int r = static_cast<int>(s.G.rows());
  if (!s.G.allFinite()) throw NumericalError("singular_core", "core matrix G is not finite");
  s.g_svd = svd_r(s.G, r);
  const double smax = s.g_svd.singular_values(0);
  const double smin = s.g_svd.singular_values(r - 1);
  if (!(smin > min_g_singular * smax)) {
    throw NumericalError("singular_core",
                         "core matrix G is singular (sigma_min/sigma_max = " +
                             std::to_string(smax > 0 ? smin / smax : 0.0) +
                             "); SNR too low or rank over-specified");
  }
  return s;
}

std::vector<BatchRange> partition_batches(std::size_t T, int m) {
  if (m < 1) throw ArgumentError("partition_batches: m must be >= 1");
  const std::size_t parts = 2 * static_cast<std::size_t>(m);
  if (T < parts) {
    throw ArgumentError("partition_batches: T = " + std::to_string(T) + " < 2m = " +
                        std::to_string(parts));
  }
  const std::size_t n0 = T / parts;
  if (const std::size_t dropped = T - parts * n0; dropped > 0) {
    warn("dropped_observations", "partition_batches: discarding " + std::to_string(dropped) +
                                     " trailing observations");
  }
  std::vector<BatchRange> out(parts);
  for (std::size_t p = 0; p < parts; ++p) out[p] = {p * n0, (p + 1) * n0};
  return out;
}

SpectralInit spectral_init(BatchSlice slice, int d1, int d2, double nu, int r) {
  if (slice.empty()) throw ArgumentError("spectral_init: empty slice");
  if (!(nu > 0.0)) throw ArgumentError("spectral_init: nu must be positive");
  const auto sums = kernels::accumulate(slice, d1, d2);
  const Matrix aggregate = sums.reward_sum / (nu * static_cast<double>(slice.size()));
  if (aggregate.isZero(0.0)) {
    throw NumericalError("degenerate_init", "spectral_init: aggregated responses are all zero");
  }
  auto svd = svd_r(aggregate, r);
  return {std::move(svd.U), std::move(svd.V)};
}

Matrix solve_G(const Matrix& U, const Matrix& V, BatchSlice slice, double min_g_singular) {
  const int r = static_cast<int>(U.cols());
  const auto sums = kernels::accumulate(slice, static_cast<int>(U.rows()), static_cast<int>(V.rows()));
  const auto eq = kernels::core_normal_equations(sums, U, V);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(eq.gram, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  if (!(lmax > 0.0) || !(lmin >= min_g_singular * lmax)) {
    const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    throw NumericalError("rank_deficient_design",
                         "solve_G: normal equations ill-conditioned (condition " +
                             std::to_string(cond) + ")");
  }
  const Vector g = eq.gram.llt().solve(eq.rhs);
  return Eigen::Map<const Matrix>(g.data(), r, r);
}

double loss(const Matrix& U, const Matrix& G, const Matrix& V, BatchSlice slice) {
  const Matrix A = U * G * V.transpose();
  double total = 0.0;
  for (const auto& obs : slice) {
    const auto& pairs = obs.matching.pairs();
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const double e = obs.rewards[k] - A(pairs[k].i, pairs[k].j);
      total += e * e;
    }
  }
  return total;
}

Matrix loss_gradient(const Matrix& A, BatchSlice slice) {
  const auto sums = kernels::accumulate(slice, static_cast<int>(A.rows()), static_cast<int>(A.cols()));
  return 2.0 * (sums.count.cwiseProduct(A) - sums.reward_sum);
}

Matrix loss_gradient(const Matrix& U, const Matrix& G, const Matrix& V, BatchSlice slice) {
  return loss_gradient(Matrix(U * G * V.transpose()), slice);
}

FactorState gradient_step(const FactorState& state, BatchSlice step, BatchSlice refit, double eta,
                          double nu, double min_g_singular) {
  if (step.empty() || refit.empty()) throw ArgumentError("gradient_step: empty slice");
  const int r = static_cast<int>(state.G.rows());
  const double scale = eta / (2.0 * static_cast<double>(step.size()) * nu);

  const Matrix grad = loss_gradient(state.product(), step);
  const Matrix g_inv = state.G.partialPivLu().inverse();

  const Matrix U_half =
      (state.U - scale * grad * state.V * g_inv) * state.g_svd.U;
  const Matrix V_half =
      (state.V - scale * grad.transpose() * state.U * g_inv.transpose()) * state.g_svd.V;

  Matrix U_next = svd_r(U_half, r).U;
  Matrix V_next = svd_r(V_half, r).U;
  Matrix G_next = solve_G(U_next, V_next, refit, min_g_singular);
  return make_state(std::move(U_next), std::move(G_next), std::move(V_next), min_g_singular);
}

namespace {

double orthonormality_error(const Matrix& F) {
  const auto r = F.cols();
  return (F.transpose() * F - Matrix::Identity(r, r)).cwiseAbs().maxCoeff();
}

TraceRow trace_row(int batch, const FactorState& s, BatchSlice refit, double nu,
                   const RewardMatrix* truth) {
  TraceRow row;
  row.batch = batch;
  const Matrix A = s.product();
  if (truth) {
    const double e = (A - truth->values()).cwiseAbs().maxCoeff() / truth->lambda_min();
    row.rel_max_err_sq = e * e;
  } else {
    row.rel_max_err_sq = std::numeric_limits<double>::quiet_NaN();
  }
  const auto& sv = s.g_svd.singular_values;
  row.g_sigma_max = sv(0);
  row.g_sigma_min = sv(sv.size() - 1);
  row.grad_norm = loss_gradient(A, refit).norm() / (2.0 * static_cast<double>(refit.size()) * nu);
  row.orth_err = std::max(orthonormality_error(s.U), orthonormality_error(s.V));
  return row;
}

}  // namespace

FitResult fit(BatchSlice data, int d1, int d2, const EstimatorConfig& config,
              const RewardMatrix* truth, const std::optional<SpectralInit>& initial) {
  config.validate();
  if (config.r > std::min(d1, d2)) throw ArgumentError("fit: rank exceeds matrix dims");
  if (truth && (truth->d1() != d1 || truth->d2() != d2)) {
    throw ArgumentError("fit: reference matrix dims differ from the data");
  }
  const auto ranges = partition_batches(data.size(), config.m);
  const bool tracing = config.record_trace || truth != nullptr;

  FitResult result;
  int batch = 1;
  try {
    SpectralInit init = initial ? *initial
                                : spectral_init(slice_of(data, ranges[0]), d1, d2, config.nu, config.r);
    Matrix G = solve_G(init.U, init.V, slice_of(data, ranges[1]), config.min_g_singular);
    FactorState state = make_state(std::move(init.U), std::move(G), std::move(init.V),
                                   config.min_g_singular);

    auto record = [&](int p, BatchSlice refit) {
      TraceRow row = trace_row(p, state, refit, config.nu, truth);
      if (config.check_orthonormality && row.orth_err > 1e-8) {
        throw NumericalError("orthonormality_lost",
                             "orthonormality error " + std::to_string(row.orth_err));
      }
      if (tracing) result.trace.rows.push_back(row);
    };
    if (tracing || config.check_orthonormality) record(1, slice_of(data, ranges[1]));

    for (int p = 1; p < config.m; ++p) {
      batch = p + 1;
      const BatchSlice step = slice_of(data, ranges[2 * p]);
      const BatchSlice refit = slice_of(data, ranges[2 * p + 1]);
      state = gradient_step(state, step, refit, config.eta, config.nu, config.min_g_singular);
      if (tracing || config.check_orthonormality) record(batch, refit);
    }
    result.M_init = state.product();
    result.state = std::move(state);
  } catch (const Error& e) {
    const std::string what = "batch " + std::to_string(batch) + ": " + e.what();
    switch (e.kind()) {
      case ErrorKind::argument:
        throw ArgumentError(what, e.code());
      case ErrorKind::numerical:
        throw NumericalError(e.code(), what);
      case ErrorKind::data_format:
        throw DataFormatError(what);
    }
    throw;
  }
  return result;
}

Vector scree_spectrum(BatchSlice slice, int d1, int d2) {
  const auto sums = kernels::accumulate(slice, d1, d2);
  return Eigen::BDCSVD<Matrix>(sums.reward_sum).singularValues();
}

RankChoice estimate_rank(const Vector& sv, int max_rank) {
  if (sv.size() == 0) throw ArgumentError("estimate_rank: empty spectrum");
  const int n = static_cast<int>(sv.size());
  max_rank = std::clamp(max_rank, 1, n);
  int best = 0;
  double best_ratio = 0.0;
  for (int k = 1; k <= std::min(max_rank, n - 1); ++k) {
    const double hi = sv(k - 1);
    const double lo = sv(k);
    if (!(hi > 0.0)) break;
    const double ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = k;
    }
  }
  if (best == 0 || best_ratio < 3.0) return {max_rank, true};
  return {best, false};
}

}  // namespace matchlearn
