#include "matchlearn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <omp.h>

namespace matchlearn::kernels {

namespace {

void accumulate_rows(BatchSlice slice, int row_lo, int row_hi, EntrySums& out) {
  for (const auto& obs : slice) {
    const auto& pairs = obs.matching.pairs();
    auto it = std::lower_bound(pairs.begin(), pairs.end(), Pair{row_lo, 0});
    for (; it != pairs.end() && it->i < row_hi; ++it) {
      const auto k = static_cast<std::size_t>(it - pairs.begin());
      out.reward_sum(it->i, it->j) += obs.rewards[k];
      out.count(it->i, it->j) += 1.0;
    }
  }
}

void residual_rows(BatchSlice slice, const Matrix& A, int row_lo, int row_hi, Matrix& out) {
  for (const auto& obs : slice) {
    const auto& pairs = obs.matching.pairs();
    auto it = std::lower_bound(pairs.begin(), pairs.end(), Pair{row_lo, 0});
    for (; it != pairs.end() && it->i < row_hi; ++it) {
      const auto k = static_cast<std::size_t>(it - pairs.begin());
      out(it->i, it->j) += obs.rewards[k] - A(it->i, it->j);
    }
  }
}

double mean_sq_residual(const Observation& obs, const Matrix& A) {
  const auto& pairs = obs.matching.pairs();
  if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double rss = 0.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double e = obs.rewards[k] - A(pairs[k].i, pairs[k].j);
    rss += e * e;
  }
  return rss / static_cast<double>(pairs.size());
}

void add_entry_terms(const EntrySums& sums, const Matrix& U, const Matrix& V, int row_lo,
                     int row_hi, NormalEquations& out) {
  const Eigen::Index r = U.cols();
  Vector a(r * r);
  for (int j = 0; j < sums.count.cols(); ++j) {
    for (int i = row_lo; i < row_hi; ++i) {
      const double c = sums.count(i, j);
      if (c == 0.0) continue;
      for (Eigen::Index l = 0; l < r; ++l)
        for (Eigen::Index k = 0; k < r; ++k) a(k + l * r) = U(i, k) * V(j, l);
      out.gram.noalias() += c * a * a.transpose();
      out.rhs.noalias() += sums.reward_sum(i, j) * a;
    }
  }
}

NormalEquations zero_equations(Eigen::Index r) {
  return {Matrix::Zero(r * r, r * r), Vector::Zero(r * r)};
}

}  // namespace

EntrySums accumulate_serial(BatchSlice slice, int d1, int d2) {
  EntrySums out{Matrix::Zero(d1, d2), Matrix::Zero(d1, d2)};
  accumulate_rows(slice, 0, d1, out);
  return out;
}

EntrySums accumulate(BatchSlice slice, int d1, int d2) {
  EntrySums out{Matrix::Zero(d1, d2), Matrix::Zero(d1, d2)};
#pragma omp parallel
  {
    const int nt = omp_get_num_threads();
    const int tid = omp_get_thread_num();
    const int lo = static_cast<int>(static_cast<long long>(d1) * tid / nt);
    const int hi = static_cast<int>(static_cast<long long>(d1) * (tid + 1) / nt);
    accumulate_rows(slice, lo, hi, out);
  }
  return out;
}

Matrix residual_sum_serial(BatchSlice slice, const Matrix& A) {
  Matrix out = Matrix::Zero(A.rows(), A.cols());
  residual_rows(slice, A, 0, static_cast<int>(A.rows()), out);
  return out;
}

Matrix residual_sum(BatchSlice slice, const Matrix& A) {
  Matrix out = Matrix::Zero(A.rows(), A.cols());
  const auto d1 = static_cast<long long>(A.rows());
#pragma omp parallel
  {
    const int nt = omp_get_num_threads();
    const int tid = omp_get_thread_num();
    residual_rows(slice, A, static_cast<int>(d1 * tid / nt), static_cast<int>(d1 * (tid + 1) / nt),
                  out);
  }
  return out;
}

std::vector<double> record_mean_sq_residual_serial(BatchSlice slice, const Matrix& A) {
  std::vector<double> out(slice.size());
  for (std::size_t t = 0; t < slice.size(); ++t) out[t] = mean_sq_residual(slice[t], A);
  return out;
}

std::vector<double> record_mean_sq_residual(BatchSlice slice, const Matrix& A) {
  std::vector<double> out(slice.size());
  const auto n = static_cast<long long>(slice.size());
#pragma omp parallel for schedule(static)
  for (long long t = 0; t < n; ++t) out[t] = mean_sq_residual(slice[t], A);
  return out;
}

NormalEquations core_normal_equations_serial(const EntrySums& sums, const Matrix& U,
                                             const Matrix& V) {
  NormalEquations out = zero_equations(U.cols());
  add_entry_terms(sums, U, V, 0, static_cast<int>(U.rows()), out);
  return out;
}

NormalEquations core_normal_equations(const EntrySums& sums, const Matrix& U, const Matrix& V) {
  constexpr int kBlockRows = 16;
  const int d1 = static_cast<int>(U.rows());
  const int blocks = (d1 + kBlockRows - 1) / kBlockRows;
  std::vector<NormalEquations> partial(blocks, zero_equations(U.cols()));
#pragma omp parallel for schedule(static)
  for (int b = 0; b < blocks; ++b) {
    add_entry_terms(sums, U, V, b * kBlockRows, std::min(d1, (b + 1) * kBlockRows), partial[b]);
  }
  NormalEquations out = zero_equations(U.cols());
  for (const auto& p : partial) {
    out.gram += p.gram;
    out.rhs += p.rhs;
  }
  return out;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace matchlearn::kernels
