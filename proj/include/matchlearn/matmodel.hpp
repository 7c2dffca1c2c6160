#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

#include "matchlearn/random.hpp"

namespace matchlearn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Top-r singular triple. Column k of U has its largest-magnitude entry
/// positive, which pins the factors down uniquely for a simple spectrum.
struct TruncatedSvd {
  Matrix U;
  Vector singular_values;
  Matrix V;
  /// sigma_r and sigma_{r+1} tie (or sigma_r == 0): the subspace is not unique.
  bool degenerate = false;
};

/// Truncated SVD. Throws ArgumentError when r is out of range or A has
/// non-finite entries; emits a "degenerate_spectrum" warning on ties at the cut.
TruncatedSvd svd_r(const Matrix& A, int r);

struct SpectralInfo {
  double mu = 0.0;
  double kappa = 1.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double alpha_d = 1.0;
};

/// Incoherence max{ sqrt(d1/r) |U|_{2,max}, sqrt(d2/r) |V|_{2,max} }.
double incoherence(const Matrix& U, const Matrix& V);

/// Dense d1 x d2 reward matrix together with its rank-r SVD factors.
class RewardMatrix {
 public:
  /// Truncates `raw` to rank r and stores the reconstruction.
  static RewardMatrix from_values(const Matrix& raw, int r);

  const Matrix& values() const noexcept { return values_; }
  const Matrix& U() const noexcept { return U_; }
  const Matrix& V() const noexcept { return V_; }
  const Vector& singular_values() const noexcept { return lambda_; }
  int rank() const noexcept { return static_cast<int>(lambda_.size()); }
  int d1() const noexcept { return static_cast<int>(values_.rows()); }
  int d2() const noexcept { return static_cast<int>(values_.cols()); }
  double lambda_min() const { return lambda_(lambda_.size() - 1); }
  double lambda_max() const { return lambda_(0); }

  SpectralInfo spectral_info() const;

 private:
  RewardMatrix(Matrix values, Matrix U, Vector lambda, Matrix V);

  Matrix values_;
  Matrix U_;
  Vector lambda_;
  Matrix V_;
};

/// I.i.d. Uniform[-scale, scale] d1 x d2 draw truncated to its top-r SVD.
RewardMatrix generate_low_rank(int d1, int d2, int r, double scale, Rng& rng);

/// Sparse linear functional <M, Q> stored as (row, col, weight) triplets,
/// sorted by (row, col) with unique keys.
class LinearForm {
 public:
  struct Entry {
    int i;
    int j;
    double w;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  LinearForm() = default;
  LinearForm(int d1, int d2) : d1_(d1), d2_(d2) {}

  /// Validates bounds and rejects duplicate (i, j) keys.
  static LinearForm from_triplets(int d1, int d2, std::vector<Entry> entries);
  static LinearForm single_entry(int d1, int d2, int i, int j);
  /// Keeps entries with |w| > drop_tol.
  static LinearForm from_dense(const Matrix& Q, double drop_tol = 0.0);

  int d1() const noexcept { return d1_; }
  int d2() const noexcept { return d2_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t nnz() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  double l1_norm() const;
  double frobenius_sq() const;
  /// <A, Q> for a dense A of matching dims.
  double inner(const Matrix& A) const;
  Matrix to_dense() const;

  /// Q - other; entries that cancel exactly are dropped.
  LinearForm minus(const LinearForm& other) const;

  friend bool operator==(const LinearForm&, const LinearForm&) = default;

 private:
  int d1_ = 0;
  int d2_ = 0;
  std::vector<Entry> entries_;
};

/// |P_M(Q)|_F where P_M is the projection onto the tangent space at a
/// rank-r matrix with column space U and row space V. Uses
/// |P_M(Q)|_F^2 = |U^T Q|_F^2 + |Q V|_F^2 - |U^T Q V|_F^2 over the nonzeros of Q.
double projection_magnitude(const Matrix& U, const Matrix& V, const LinearForm& Q);

// --- serialization -------------------------------------------------------

/// Row-major CSV at `csv_path` plus a `<csv_path>.json` sidecar {d1, d2, r}.
void write_matrix_csv(const std::string& csv_path, const Matrix& values, int r);
Matrix read_matrix_csv(const std::string& csv_path);
/// Reads the sidecar rank; returns -1 when absent.
int read_matrix_rank(const std::string& csv_path);

std::string linear_form_to_json(const LinearForm& Q);
LinearForm linear_form_from_json(const std::string& text, int d1, int d2);

}  // namespace matchlearn
