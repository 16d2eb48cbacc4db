#pragma once

#include <Eigen/Dense>

#include <vector>

namespace koop::structmat {

// ---------------------------------------------------------------------------
// svec: vectorization of the unique entries of a symmetric matrix, upper
// triangle in row-major order. For an n x n matrix the first n slots are the
// first row, so kernels ordered query-first keep all query products in the
// leading n slots. Off-diagonal entries are stored raw (no sqrt(2) scaling).
// ---------------------------------------------------------------------------

inline int svec_size(int n) { return n * (n + 1) / 2; }

/// Slot of entry (i, j), 0-based, order-insensitive.
int svec_index(int i, int j, int n);

/// Slot of the diagonal entry (i, i).
inline int svec_diag_index(int i, int n) { return svec_index(i, i, n); }

Eigen::VectorXd svec(const Eigen::MatrixXd& M);
Eigen::MatrixXd smat(const Eigen::VectorXd& v);

// ---------------------------------------------------------------------------
// Block Hankel matrices of vector sequences.
// ---------------------------------------------------------------------------

/// Block entry (i, j) = y_{i+j-1}: (T-c+1) block rows of height m, c columns.
struct BlockHankel {
  int block_dim = 0;  // m
  int cols = 0;       // c
  Eigen::MatrixXd data;

  int block_rows() const { return static_cast<int>(data.rows()) / block_dim; }
};

/// seq is m x T with columns y_1..y_T; requires T >= cols.
BlockHankel build_hankel(const Eigen::MatrixXd& seq, int cols);

/// Vertical stack of per-sequence Hankels, preserving sequence order.
BlockHankel stack_hankels(const std::vector<Eigen::MatrixXd>& seqs, int cols);

// ---------------------------------------------------------------------------
// Gram matrices affine in the kernel: G(a,b) = sum_l K(l+a-1, l+b-1).
// ---------------------------------------------------------------------------

/// (r+1) x (r+1) sliding-window sum of K's diagonal-aligned submatrices,
/// equal to H^T H for the (r+1)-column Hankel of any factor of K.
Eigen::MatrixXd gram_from_kernel(const Eigen::MatrixXd& K, int r);

/// Enumerates the linear map behind gram_from_kernel: calls f(a, b, i, j) for
/// every contribution G(a,b) += K(i,j), all indices 0-based. T is the kernel
/// size. Exposed so solvers can assemble the map without forming K.
template <class F>
void gram_map(int T, int r, F&& f) {
  for (int a = 0; a <= r; ++a) {
    for (int b = 0; b <= r; ++b) {
      for (int l = 0; l < T - r; ++l) f(a, b, l + a, l + b);
    }
  }
}

// ---------------------------------------------------------------------------
// Loewner matrices (divided differences).
// ---------------------------------------------------------------------------

/// Entry (i, j) = (ys_i - ys_{p+j}) / (xs_i - xs_{p+j}) with p = floor(q/2).
/// Rows take the first p support points, columns the remaining q - p.
struct LoewnerMatrix {
  std::vector<int> row_support;   // indices 0..p-1
  std::vector<int> col_support;   // indices p..q-1 actually kept
  std::vector<int> dropped_cols;  // column offsets removed over collisions
  Eigen::MatrixXd data;
};

/// Precomputed divided-difference structure for denominators fixed by `xs`:
/// L(i, j) = (ys[i] - ys[p + cols[j]]) * inv_den(i, j). Columns whose
/// denominator collides (|dx| <= tol * scale) are dropped and recorded.
struct LoewnerPlan {
  int q = 0;
  int p = 0;
  std::vector<int> cols;          // kept column offsets (0-based, j -> slot p+j)
  std::vector<int> dropped_cols;  // removed column offsets
  Eigen::MatrixXd inv_den;        // p x |cols|
};

LoewnerPlan plan_loewner(const Eigen::VectorXd& xs, double tol = 1e-12);

/// Requires xs pairwise distinct across the partition; throws on collision.
LoewnerMatrix build_loewner(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys);

/// Same divided differences with kernel svec vectors; colliding kx values
/// drop the offending column instead of throwing.
LoewnerMatrix loewner_from_kernels(const Eigen::VectorXd& kx, const Eigen::VectorXd& ky);

Eigen::MatrixXd apply_loewner_plan(const LoewnerPlan& plan, const Eigen::VectorXd& ys);

// ---------------------------------------------------------------------------
// Rank and null-space helpers.
// ---------------------------------------------------------------------------

/// Number of singular values above tol * sigma_1; 0 for the zero matrix.
int numeric_rank(const Eigen::MatrixXd& M, double tol = 1e-6);

Eigen::VectorXd singular_values(const Eigen::MatrixXd& M);

/// Least-dominant right singular vector rescaled so its last entry is -1,
/// i.e. the coefficients [a_0, ..., a_{c-2}, -1] of the recursion
/// y_{k+c-1} = sum_i a_i y_{k+i} when the input has c columns and rank < c.
/// Throws std::runtime_error when the vector's last entry vanishes.
Eigen::VectorXd nullspace_coeffs(const Eigen::MatrixXd& H_or_G);

}  // namespace koop::structmat
