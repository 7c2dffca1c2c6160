#pragma once

// Data-parallel reductions over observation slices. Every kernel has a
// serial reference (`*_serial`) and an OpenMP version; the OpenMP versions
// produce results that do not depend on the thread count.

#include <span>
#include <vector>

#include "matchlearn/matmodel.hpp"
#include "matchlearn/samplers.hpp"

namespace matchlearn::kernels {

/// Per-entry sufficient statistics of a slice: S = sum_t Y_t (zero-filled)
/// and C = sum_t X_t.
struct EntrySums {
  Matrix reward_sum;
  Matrix count;
};

EntrySums accumulate_serial(BatchSlice slice, int d1, int d2);
/// Rows are partitioned across threads, so each entry is summed in the same
/// order as the serial version and the result is bit-identical.
EntrySums accumulate(BatchSlice slice, int d1, int d2);

/// sum_t (Y_t - X_t o A), summed term by term so that an exact A gives an
/// exactly zero residual.
Matrix residual_sum_serial(BatchSlice slice, const Matrix& A);
Matrix residual_sum(BatchSlice slice, const Matrix& A);

/// |Y_t - X_t o A|_F^2 / sum(X_t) per record; NaN for empty matchings.
std::vector<double> record_mean_sq_residual_serial(BatchSlice slice, const Matrix& A);
std::vector<double> record_mean_sq_residual(BatchSlice slice, const Matrix& A);

/// Normal equations of min_G sum (u_i^T G v_j - y)^2 in the column-major
/// vectorization of G: gram = sum C_ij a a^T, rhs = sum S_ij a with
/// a = vec(u_i v_j^T).
struct NormalEquations {
  Matrix gram;
  Vector rhs;
};

NormalEquations core_normal_equations_serial(const EntrySums& sums, const Matrix& U,
                                             const Matrix& V);
/// Fixed row blocks reduced in block order; agrees with the serial version
/// to rounding (relative 1e-12) for any thread count.
NormalEquations core_normal_equations(const EntrySums& sums, const Matrix& U, const Matrix& V);

/// Pairwise (tree) summation.
double pairwise_sum(std::span<const double> values);

}  // namespace matchlearn::kernels
