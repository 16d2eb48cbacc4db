#pragma once

#include <Eigen/Dense>

#include <filesystem>

namespace koop::koopman {

/// Finite Koopman eigenstructure of the recursion
///   y_{k+r*} = a_0 y_k + ... + a_{r*-1} y_{k+r*-1}   (y in R^m):
/// roots of P(rho) = rho^{r*} - sum a_i rho^i, the (r*+1) x r* Vandermonde
/// V with columns [1, rho_j, ..., rho_j^{r*}], the dictionary V (x) I_m and
/// the diagonal propagator diag(rho) (x) I_m.
struct KoopmanModel {
  int r_star = 0;
  int m = 0;
  Eigen::VectorXd ar_coeffs;   // [a_0, ..., a_{r*-1}, -1]
  Eigen::VectorXcd roots;      // r* eigenvalues
  Eigen::MatrixXcd vandermonde;  // (r*+1) x r*
  bool repeated_roots = false;
  double root_gap = 0.0;

  Eigen::MatrixXcd dictionary() const;        // V (x) I_m
  Eigen::VectorXcd lambda_diagonal() const;   // diag of diag(rho) (x) I_m
};

/// Builds the model from recursion coefficients (last entry must be -1).
/// Near-coincident roots (gap < 1e-8 relative) are flagged; the diagonalized
/// operations then refuse while the direct recursion stays available.
KoopmanModel extract_model(const Eigen::VectorXd& p, int m);

struct CoordFit {
  Eigen::VectorXcd c;  // r* * m coefficients, root-major blocks of size m
  double residual = 0.0;
  double condition = 0.0;
};

/// Least-squares coordinates of a window of r*+1 consecutive embedding
/// vectors (columns of `window`, m x (r*+1)) in the dictionary basis:
/// (V (x) I_m) c = vec(window). Throws on repeated roots.
CoordFit fit_coords(const KoopmanModel& model, const Eigen::MatrixXd& window);

/// One step of the diagonal propagator: c_j <- rho_j c_j per mode block.
Eigen::VectorXcd propagate_coords(const KoopmanModel& model, const Eigen::VectorXcd& c);

/// Direct recursion step from the last r* embedding vectors (columns),
/// y_next = sum a_i window.col(i). O(r* m), real arithmetic.
Eigen::VectorXd ar_predict(const KoopmanModel& model, const Eigen::MatrixXd& window);

/// Dictionary route: fits the coordinates of an m x (r*+1) window, applies the
/// diagonal propagator once and reads the new block of D c. Cross-checks
/// ar_predict on the window's trailing r* columns.
Eigen::VectorXd eigen_predict(const KoopmanModel& model, const Eigen::MatrixXd& window);

void save_model(const std::filesystem::path& path, const KoopmanModel& model);
KoopmanModel load_model(const std::filesystem::path& path);

}  // namespace koop::koopman
