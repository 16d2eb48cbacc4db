#include "koop/structmat.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace koop::structmat {

int svec_index(int i, int j, int n) {
  if (i > j) std::swap(i, j);
  if (i < 0 || j >= n) throw std::invalid_argument("svec_index out of range");
  return i * n - i * (i - 1) / 2 + (j - i);
}

Eigen::VectorXd svec(const Eigen::MatrixXd& M) {
  const int n = static_cast<int>(M.rows());
  if (M.cols() != n) throw std::invalid_argument("svec needs a square matrix");
  Eigen::VectorXd v(svec_size(n));
  int k = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) v(k++) = M(i, j);
  }
  return v;
}

Eigen::MatrixXd smat(const Eigen::VectorXd& v) {
  // Invert q = n(n+1)/2.
  const int q = static_cast<int>(v.size());
  const int n = static_cast<int>(std::round((-1.0 + std::sqrt(1.0 + 8.0 * q)) / 2.0));
  if (svec_size(n) != q) throw std::invalid_argument("smat: length is not triangular");
  Eigen::MatrixXd M(n, n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      M(i, j) = v(k);
      M(j, i) = v(k);
      ++k;
    }
  }
  return M;
}

BlockHankel build_hankel(const Eigen::MatrixXd& seq, int cols) {
  const int m = static_cast<int>(seq.rows());
  const int T = static_cast<int>(seq.cols());
  if (cols < 1) throw std::invalid_argument("build_hankel requires cols >= 1");
  if (cols > T) {
    throw std::invalid_argument("build_hankel: cols (" + std::to_string(cols) +
                                ") exceeds sequence length (" + std::to_string(T) + ")");
  }
  const int rows = T - cols + 1;
  BlockHankel h;
  h.block_dim = m;
  h.cols = cols;
  h.data.resize(rows * m, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) h.data.block(i * m, j, m, 1) = seq.col(i + j);
  }
  return h;
}

BlockHankel stack_hankels(const std::vector<Eigen::MatrixXd>& seqs, int cols) {
  if (seqs.empty()) throw std::invalid_argument("stack_hankels: no sequences");
  const int m = static_cast<int>(seqs.front().rows());
  std::vector<BlockHankel> parts;
  int rows = 0;
  for (const auto& s : seqs) {
    if (s.rows() != m) throw std::invalid_argument("stack_hankels: mixed block dimension");
    parts.push_back(build_hankel(s, cols));
    rows += static_cast<int>(parts.back().data.rows());
  }
  BlockHankel h;
  h.block_dim = m;
  h.cols = cols;
  h.data.resize(rows, cols);
  int off = 0;
  for (const auto& p : parts) {
    h.data.middleRows(off, p.data.rows()) = p.data;
    off += static_cast<int>(p.data.rows());
  }
  return h;
}

Eigen::MatrixXd gram_from_kernel(const Eigen::MatrixXd& K, int r) {
  const int T = static_cast<int>(K.rows());
  if (K.cols() != T) throw std::invalid_argument("gram_from_kernel needs a square kernel");
  if (r + 1 > T) {
    throw std::invalid_argument("gram_from_kernel: r+1 (" + std::to_string(r + 1) +
                                ") exceeds kernel size (" + std::to_string(T) + ")");
  }
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(r + 1, r + 1);
  gram_map(T, r, [&](int a, int b, int i, int j) { G(a, b) += K(i, j); });
  return G;
}

LoewnerPlan plan_loewner(const Eigen::VectorXd& xs, double tol) {
  const int q = static_cast<int>(xs.size());
  if (q < 2) throw std::invalid_argument("loewner support needs at least two points");
  LoewnerPlan plan;
  plan.q = q;
  plan.p = q / 2;
  const double scale = std::max(1.0, xs.cwiseAbs().maxCoeff());
  const int ncols = q - plan.p;
  std::vector<std::vector<double>> kept;
  for (int j = 0; j < ncols; ++j) {
    std::vector<double> inv(plan.p);
    bool ok = true;
    for (int i = 0; i < plan.p; ++i) {
      const double d = xs(i) - xs(plan.p + j);
      if (std::abs(d) <= tol * scale) {
        ok = false;
        break;
      }
      inv[i] = 1.0 / d;
    }
    if (ok) {
      plan.cols.push_back(j);
      kept.push_back(std::move(inv));
    } else {
      plan.dropped_cols.push_back(j);
    }
  }
  plan.inv_den.resize(plan.p, static_cast<int>(plan.cols.size()));
  for (int j = 0; j < plan.inv_den.cols(); ++j) {
    for (int i = 0; i < plan.p; ++i) plan.inv_den(i, j) = kept[j][i];
  }
  return plan;
}

Eigen::MatrixXd apply_loewner_plan(const LoewnerPlan& plan, const Eigen::VectorXd& ys) {
  if (ys.size() != plan.q) throw std::invalid_argument("loewner plan size mismatch");
  Eigen::MatrixXd L(plan.p, plan.inv_den.cols());
  for (int j = 0; j < L.cols(); ++j) {
    const int col = plan.p + plan.cols[j];
    for (int i = 0; i < plan.p; ++i) L(i, j) = (ys(i) - ys(col)) * plan.inv_den(i, j);
  }
  return L;
}

LoewnerMatrix build_loewner(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("build_loewner: size mismatch");
  const LoewnerPlan plan = plan_loewner(xs);
  if (!plan.dropped_cols.empty()) {
    throw std::invalid_argument("build_loewner: duplicate x across the partition (slot " +
                                std::to_string(plan.p + plan.dropped_cols.front()) + ")");
  }
  LoewnerMatrix L;
  L.data = apply_loewner_plan(plan, ys);
  for (int i = 0; i < plan.p; ++i) L.row_support.push_back(i);
  for (int j : plan.cols) L.col_support.push_back(plan.p + j);
  return L;
}

LoewnerMatrix loewner_from_kernels(const Eigen::VectorXd& kx, const Eigen::VectorXd& ky) {
  if (kx.size() != ky.size()) throw std::invalid_argument("loewner_from_kernels: size mismatch");
  const LoewnerPlan plan = plan_loewner(kx);
  if (plan.cols.empty()) {
    throw std::invalid_argument("loewner_from_kernels: every column collides");
  }
  LoewnerMatrix L;
  L.data = apply_loewner_plan(plan, ky);
  for (int i = 0; i < plan.p; ++i) L.row_support.push_back(i);
  for (int j : plan.cols) L.col_support.push_back(plan.p + j);
  L.dropped_cols = plan.dropped_cols;
  return L;
}

Eigen::VectorXd singular_values(const Eigen::MatrixXd& M) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues();
}

int numeric_rank(const Eigen::MatrixXd& M, double tol) {
  if (!(tol > 0.0) || !(tol < 1.0)) throw std::invalid_argument("numeric_rank: tol in (0,1)");
  if (M.size() == 0) return 0;
  const Eigen::VectorXd sv = singular_values(M);
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  int rank = 0;
  for (int k = 0; k < sv.size(); ++k) {
    if (sv(k) > tol * sv(0)) ++rank;
  }
  return rank;
}

Eigen::VectorXd nullspace_coeffs(const Eigen::MatrixXd& H_or_G) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(H_or_G, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Eigen::VectorXd v = svd.matrixV().col(svd.matrixV().cols() - 1);
  const double last = v(v.size() - 1);
  if (std::abs(last) < 1e-10) {
    throw std::runtime_error("nullspace_coeffs: degenerate normalization (last entry ~ 0)");
  }
  return v * (-1.0 / last);
}

}  // namespace koop::structmat
