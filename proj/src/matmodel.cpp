#include "matchlearn/matmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "matchlearn/diagnostics.hpp"

namespace matchlearn {

TruncatedSvd svd_r(const Matrix& A, int r) {
  const int d1 = static_cast<int>(A.rows());
  const int d2 = static_cast<int>(A.cols());
  if (r < 1 || r > std::min(d1, d2)) {
    throw ArgumentError("svd_r: rank " + std::to_string(r) + " out of range for " +
                        std::to_string(d1) + "x" + std::to_string(d2) + " input");
  }
  if (!A.allFinite()) throw ArgumentError("svd_r: input has non-finite entries");

  Eigen::BDCSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();

  TruncatedSvd out;
  out.U = svd.matrixU().leftCols(r);
  out.V = svd.matrixV().leftCols(r);
  out.singular_values = s.head(r);

  for (int k = 0; k < r; ++k) {
    Eigen::Index arg = 0;
    out.U.col(k).cwiseAbs().maxCoeff(&arg);
    if (out.U(arg, k) < 0.0) {
      out.U.col(k) *= -1.0;
      out.V.col(k) *= -1.0;
    }
  }

  const double s_r = s(r - 1);
  if (s_r <= 0.0) {
    out.degenerate = true;
  } else if (r < s.size()) {
    out.degenerate = (s_r - s(r)) <= 1e-12 * s_r;
  }
  if (out.degenerate) {
    warn("degenerate_spectrum", "svd_r: singular values tie at the rank-" + std::to_string(r) +
                                    " cut; subspace is not unique");
  }
  return out;
}

double incoherence(const Matrix& U, const Matrix& V) {
  const double r = static_cast<double>(U.cols());
  const double u_row = U.rowwise().norm().maxCoeff();
  const double v_row = V.rowwise().norm().maxCoeff();
  return std::max(std::sqrt(U.rows() / r) * u_row, std::sqrt(V.rows() / r) * v_row);
}

// --- RewardMatrix -----------------------------------------------------------

RewardMatrix::RewardMatrix(Matrix values, Matrix U, Vector lambda, Matrix V)
    : values_(std::move(values)), U_(std::move(U)), lambda_(std::move(lambda)), V_(std::move(V)) {}

RewardMatrix RewardMatrix::from_values(const Matrix& raw, int r) {
  if (raw.rows() > raw.cols()) {
    throw ArgumentError("RewardMatrix: expected d2 >= d1, got " + std::to_string(raw.rows()) +
                        "x" + std::to_string(raw.cols()));
  }
  TruncatedSvd svd = svd_r(raw, r);
  if (svd.singular_values(r - 1) <= 0.0) {
    throw ArgumentError("RewardMatrix: input has rank below " + std::to_string(r));
  }
  Matrix values = svd.U * svd.singular_values.asDiagonal() * svd.V.transpose();
  return RewardMatrix(std::move(values), std::move(svd.U), std::move(svd.singular_values),
                      std::move(svd.V));
}

SpectralInfo RewardMatrix::spectral_info() const {
  SpectralInfo info;
  info.mu = incoherence(U_, V_);
  info.lambda_min = lambda_min();
  info.lambda_max = lambda_max();
  info.kappa = info.lambda_max / info.lambda_min;
  info.alpha_d = static_cast<double>(d2()) / d1();
  return info;
}

RewardMatrix generate_low_rank(int d1, int d2, int r, double scale, Rng& rng) {
  if (d1 < 1 || r < 1 || r > d1 || d1 > d2) {
    throw ArgumentError("generate_low_rank: need 1 <= r <= d1 <= d2");
  }
  if (!(scale > 0.0)) throw ArgumentError("generate_low_rank: scale must be positive");
  std::uniform_real_distribution<double> unif(-scale, scale);
  Matrix raw(d1, d2);
  for (int i = 0; i < d1; ++i)
    for (int j = 0; j < d2; ++j) raw(i, j) = unif(rng);
  return RewardMatrix::from_values(raw, r);
}

// --- LinearForm ---------------------------------------------------------------

namespace {

bool key_less(const LinearForm::Entry& a, const LinearForm::Entry& b) {
  return a.i != b.i ? a.i < b.i : a.j < b.j;
}

}  // namespace

LinearForm LinearForm::from_triplets(int d1, int d2, std::vector<Entry> entries) {
  if (d1 < 1 || d2 < 1) throw ArgumentError("LinearForm: dims must be positive");
  for (const auto& e : entries) {
    if (e.i < 0 || e.i >= d1 || e.j < 0 || e.j >= d2) {
      throw ArgumentError("LinearForm: index (" + std::to_string(e.i) + "," +
                          std::to_string(e.j) + ") out of range");
    }
    if (!std::isfinite(e.w)) throw ArgumentError("LinearForm: non-finite weight");
  }
  std::sort(entries.begin(), entries.end(), key_less);
  for (std::size_t k = 1; k < entries.size(); ++k) {
    if (entries[k].i == entries[k - 1].i && entries[k].j == entries[k - 1].j) {
      throw ArgumentError("LinearForm: duplicate key (" + std::to_string(entries[k].i) + "," +
                          std::to_string(entries[k].j) + ")");
    }
  }
  LinearForm q(d1, d2);
  q.entries_ = std::move(entries);
  return q;
}

LinearForm LinearForm::single_entry(int d1, int d2, int i, int j) {
  return from_triplets(d1, d2, {{i, j, 1.0}});
}

LinearForm LinearForm::from_dense(const Matrix& Q, double drop_tol) {
  std::vector<Entry> entries;
  for (int i = 0; i < Q.rows(); ++i)
    for (int j = 0; j < Q.cols(); ++j)
      if (std::abs(Q(i, j)) > drop_tol) entries.push_back({i, j, Q(i, j)});
  return from_triplets(static_cast<int>(Q.rows()), static_cast<int>(Q.cols()),
                       std::move(entries));
}

double LinearForm::l1_norm() const {
  double s = 0.0;
  for (const auto& e : entries_) s += std::abs(e.w);
  return s;
}

double LinearForm::frobenius_sq() const {
  double s = 0.0;
  for (const auto& e : entries_) s += e.w * e.w;
  return s;
}

double LinearForm::inner(const Matrix& A) const {
  if (A.rows() != d1_ || A.cols() != d2_) throw ArgumentError("LinearForm::inner: dims mismatch");
  double s = 0.0;
  for (const auto& e : entries_) s += e.w * A(e.i, e.j);
  return s;
}

Matrix LinearForm::to_dense() const {
  Matrix Q = Matrix::Zero(d1_, d2_);
  for (const auto& e : entries_) Q(e.i, e.j) = e.w;
  return Q;
}

LinearForm LinearForm::minus(const LinearForm& other) const {
  if (other.d1_ != d1_ || other.d2_ != d2_) {
    throw ArgumentError("LinearForm::minus: dims mismatch");
  }
  LinearForm out(d1_, d2_);
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  while (a != entries_.end() || b != other.entries_.end()) {
    if (b == other.entries_.end() || (a != entries_.end() && key_less(*a, *b))) {
      out.entries_.push_back(*a++);
    } else if (a == entries_.end() || key_less(*b, *a)) {
      out.entries_.push_back({b->i, b->j, -b->w});
      ++b;
    } else {
      const double w = a->w - b->w;
      if (w != 0.0) out.entries_.push_back({a->i, a->j, w});
      ++a;
      ++b;
    }
  }
  return out;
}

double projection_magnitude(const Matrix& U, const Matrix& V, const LinearForm& Q) {
  if (U.rows() != Q.d1() || V.rows() != Q.d2() || U.cols() != V.cols()) {
    throw ArgumentError("projection_magnitude: factor dims do not match the linear form");
  }
  const auto& entries = Q.entries();
  const Eigen::Index r = U.cols();

  // |Q V|_F^2: rows of Q are contiguous in the sorted entry list.
  double qv_sq = 0.0;
  Eigen::RowVectorXd acc(r);
  for (std::size_t k = 0; k < entries.size();) {
    const int row = entries[k].i;
    acc.setZero();
    for (; k < entries.size() && entries[k].i == row; ++k) acc += entries[k].w * V.row(entries[k].j);
    qv_sq += acc.squaredNorm();
  }

  // |U^T Q|_F^2: group by column.
  std::vector<std::size_t> by_col(entries.size());
  std::iota(by_col.begin(), by_col.end(), std::size_t{0});
  std::stable_sort(by_col.begin(), by_col.end(),
                   [&](std::size_t a, std::size_t b) { return entries[a].j < entries[b].j; });
  double uq_sq = 0.0;
  for (std::size_t k = 0; k < by_col.size();) {
    const int col = entries[by_col[k]].j;
    acc.setZero();
    for (; k < by_col.size() && entries[by_col[k]].j == col; ++k) {
      const auto& e = entries[by_col[k]];
      acc += e.w * U.row(e.i);
    }
    uq_sq += acc.squaredNorm();
  }

  Matrix uqv = Matrix::Zero(r, r);
  for (const auto& e : entries) uqv.noalias() += e.w * U.row(e.i).transpose() * V.row(e.j);

  const double radicand = uq_sq + qv_sq - uqv.squaredNorm();
  if (radicand < -1e-12 * std::max(1.0, Q.frobenius_sq())) {
    throw NumericalError("internal_consistency",
                         "projection_magnitude: negative radicand " + std::to_string(radicand));
  }
  return std::sqrt(std::max(radicand, 0.0));
}

}  // namespace matchlearn
