#pragma once

// Test-only reference implementations, independent of the library paths they
// check: an adaptive Cash-Karp integrator, brute-force neighbor scans,
// alternating-projection PSD completability, plain least-squares regression
// baselines and assorted random generators.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace oracles {

using Field = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Cash-Karp embedded 4(5) pair with step-size control.
inline Eigen::VectorXd integrate_adaptive(const Field& f, Eigen::VectorXd x, double t_end,
                                          double tol = 1e-12) {
  double t = 0.0;
  double h = t_end / 100.0;
  const double c[6] = {0, 0.2, 0.3, 0.6, 1.0, 0.875};
  (void)c;
  while (t < t_end) {
    if (t + h > t_end) h = t_end - t;
    const Eigen::VectorXd k1 = f(x);
    const Eigen::VectorXd k2 = f(x + h * (0.2 * k1));
    const Eigen::VectorXd k3 = f(x + h * (0.075 * k1 + 0.225 * k2));
    const Eigen::VectorXd k4 = f(x + h * (0.3 * k1 - 0.9 * k2 + 1.2 * k3));
    const Eigen::VectorXd k5 =
        f(x + h * (-11.0 / 54 * k1 + 2.5 * k2 - 70.0 / 27 * k3 + 35.0 / 27 * k4));
    const Eigen::VectorXd k6 =
        f(x + h * (1631.0 / 55296 * k1 + 175.0 / 512 * k2 + 575.0 / 13824 * k3 +
                   44275.0 / 110592 * k4 + 253.0 / 4096 * k5));
    const Eigen::VectorXd x5 = x + h * (37.0 / 378 * k1 + 250.0 / 621 * k3 + 125.0 / 594 * k4 +
                                        512.0 / 1771 * k6);
    const Eigen::VectorXd x4 =
        x + h * (2825.0 / 27648 * k1 + 18575.0 / 48384 * k3 + 13525.0 / 55296 * k4 +
                 277.0 / 14336 * k5 + 0.25 * k6);
    const double err = (x5 - x4).norm() / std::max(1.0, x.norm());
    if (err <= tol || h < 1e-14) {
      t += h;
      x = x5;
    }
    const double grow = err > 0 ? 0.9 * std::pow(tol / err, 0.2) : 2.0;
    h *= std::min(2.0, std::max(0.2, grow));
  }
  return x;
}

inline std::vector<std::pair<int, int>> brute_force_pairs(const Eigen::MatrixXd& X, double delta) {
  std::vector<std::pair<int, int>> out;
  for (int s = 0; s < X.cols(); ++s) {
    for (int t = s + 1; t < X.cols(); ++t) {
      if ((X.col(s) - X.col(t)).norm() <= delta) out.emplace_back(s, t);
    }
  }
  return out;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) M(i, j) = g(rng);
  }
  return M;
}

inline Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, int n) {
  const Eigen::MatrixXd A = random_matrix(rng, n, n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ();
  const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < n; ++i) {
    if (R(i, i) < 0) Q.col(i) *= -1.0;
  }
  return Q;
}

// y_{k+order} = sum_i a_i y_{k+i} from random initial vectors.
inline Eigen::MatrixXd ar_sequence(const Eigen::VectorXd& a, const Eigen::MatrixXd& init, int T) {
  const int order = static_cast<int>(a.size());
  const int m = static_cast<int>(init.rows());
  Eigen::MatrixXd Y(m, T);
  Y.leftCols(order) = init;
  for (int k = order; k < T; ++k) {
    Y.col(k).setZero();
    for (int i = 0; i < order; ++i) Y.col(k) += a(i) * Y.col(k - order + i);
  }
  return Y;
}

// Coefficients [a_0..a_{r-1}] of rho^r - sum a_i rho^i with the given roots
// (complex roots must come in conjugate pairs).
inline Eigen::VectorXd coeffs_from_roots(const std::vector<std::complex<double>>& roots) {
  std::vector<std::complex<double>> poly = {1.0};
  for (const auto& r : roots) {
    std::vector<std::complex<double>> next(poly.size() + 1, 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i] += poly[i];
      next[i + 1] -= poly[i] * r;
    }
    poly = std::move(next);
  }
  // poly holds rho^r + c_1 rho^{r-1} + ... + c_r; recursion coeffs follow.
  const int r = static_cast<int>(roots.size());
  Eigen::VectorXd a(r);
  for (int i = 0; i < r; ++i) a(i) = -poly[r - i].real();
  return a;
}

struct Rational {
  Eigen::VectorXd num;  // coefficients, constant first
  Eigen::VectorXd den;
  double operator()(double x) const {
    double n = 0, d = 0, p = 1;
    for (int i = 0; i < num.size(); ++i) {
      if (i < num.size()) n += num(i) * p;
      p *= x;
    }
    p = 1;
    for (int i = 0; i < den.size(); ++i) {
      d += den(i) * p;
      p *= x;
    }
    return n / d;
  }
};

// Degree-d rational with poles far from [0.1, 3].
inline Rational random_rational(std::mt19937_64& rng, int degree) {
  std::uniform_real_distribution<double> u(0.5, 3.0);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  Rational g;
  g.den = Eigen::VectorXd::Zero(degree + 1);
  g.den(0) = 1.0;
  // Build the denominator from quadratic factors x^2 + c (c > 0) plus one
  // linear factor x + e (e > 4) when the degree is odd.
  Eigen::VectorXd den(1);
  den(0) = 1.0;
  int remaining = degree;
  auto poly_mul = [](const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(p.size() + q.size() - 1);
    for (int i = 0; i < p.size(); ++i) {
      for (int j = 0; j < q.size(); ++j) out(i + j) += p(i) * q(j);
    }
    return out;
  };
  if (remaining % 2 == 1) {
    Eigen::VectorXd lin(2);
    lin << 4.0 + u(rng), 1.0;
    den = poly_mul(den, lin);
    --remaining;
  }
  while (remaining > 0) {
    Eigen::VectorXd quad(3);
    quad << u(rng), 0.0, 1.0;
    den = poly_mul(den, quad);
    remaining -= 2;
  }
  g.den = den;
  g.num = Eigen::VectorXd::Zero(degree + 1);
  for (int i = 0; i <= degree; ++i) g.num(i) = coef(rng);
  if (std::abs(g.num(degree)) < 0.2) g.num(degree) = g.num(degree) < 0 ? -0.5 : 0.5;
  return g;
}

// Alternating (Dykstra) projections between the PSD cone and the affine set
// of matrices matching the known entries; feasibility decided by the final
// mismatch on known entries after projecting onto the cone.
inline bool psd_completable_dykstra(const Eigen::MatrixXd& K,
                                    const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask,
                                    int iters = 800) {
  const int n = static_cast<int>(K.rows());
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (mask(i, j)) X(i, j) = K(i, j);
    }
  }
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  double scale = std::max(1.0, X.cwiseAbs().maxCoeff());
  Eigen::MatrixXd Xp = X;
  for (int it = 0; it < iters; ++it) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (X + X.transpose()) + P);
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
    Xp = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
    P = (0.5 * (X + X.transpose()) + P) - Xp;
    X = Xp;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (mask(i, j)) X(i, j) = K(i, j);
      }
    }
  }
  double mismatch = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (mask(i, j)) mismatch = std::max(mismatch, std::abs(Xp(i, j) - K(i, j)));
    }
  }
  return mismatch <= 1e-6 * scale;
}

// One-step least-squares propagator fitted on identity observables:
// minimizes sum_k ||y_{k+1} - A y_k||^2.
inline Eigen::MatrixXd edmd_fit(const Eigen::MatrixXd& Y) {
  const Eigen::MatrixXd Y0 = Y.leftCols(Y.cols() - 1);
  const Eigen::MatrixXd Y1 = Y.rightCols(Y.cols() - 1);
  return Y1 * Y0.transpose() * (Y0 * Y0.transpose()).ldlt().solve(
                                   Eigen::MatrixXd::Identity(Y.rows(), Y.rows()));
}

}  // namespace oracles
