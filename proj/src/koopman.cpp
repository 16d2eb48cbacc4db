#include "koop/koopman.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <complex>
#include <fstream>
#include <stdexcept>
#include <string>

#include "koop/textio.hpp"

namespace koop::koopman {

Eigen::MatrixXcd KoopmanModel::dictionary() const {
  Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero((r_star + 1) * m, r_star * m);
  for (int i = 0; i <= r_star; ++i) {
    for (int j = 0; j < r_star; ++j) {
      D.block(i * m, j * m, m, m) =
          vandermonde(i, j) * Eigen::MatrixXcd::Identity(m, m);
    }
  }
  return D;
}

Eigen::VectorXcd KoopmanModel::lambda_diagonal() const {
  Eigen::VectorXcd d(r_star * m);
  for (int j = 0; j < r_star; ++j) {
    for (int c = 0; c < m; ++c) d(j * m + c) = roots(j);
  }
  return d;
}

KoopmanModel extract_model(const Eigen::VectorXd& p, int m) {
  const int r_star = static_cast<int>(p.size()) - 1;
  if (r_star < 1) throw std::invalid_argument("extract_model: order must be >= 1");
  if (m < 1) throw std::invalid_argument("extract_model: embedding dimension must be >= 1");
  if (std::abs(p(r_star) + 1.0) > 1e-12) {
    throw std::invalid_argument("extract_model: last coefficient must be -1");
  }

  KoopmanModel model;
  model.r_star = r_star;
  model.m = m;
  model.ar_coeffs = p;

  // Roots of P(rho) = rho^{r*} - sum a_i rho^i via the companion matrix.
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(r_star, r_star);
  for (int i = 0; i + 1 < r_star; ++i) C(i, i + 1) = 1.0;
  for (int i = 0; i < r_star; ++i) C(r_star - 1, i) = p(i);
  if (r_star == 1) {
    model.roots.resize(1);
    model.roots(0) = p(0);
  } else {
    Eigen::EigenSolver<Eigen::MatrixXd> eig(C);
    if (eig.info() != Eigen::Success) throw std::runtime_error("extract_model: root solve failed");
    model.roots = eig.eigenvalues();
  }

  double max_abs = 0.0;
  for (int i = 0; i < r_star; ++i) max_abs = std::max(max_abs, std::abs(model.roots(i)));
  model.root_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < r_star; ++i) {
    for (int j = i + 1; j < r_star; ++j) {
      model.root_gap = std::min(model.root_gap, std::abs(model.roots(i) - model.roots(j)));
    }
  }
  if (r_star == 1) model.root_gap = std::numeric_limits<double>::infinity();
  model.repeated_roots = model.root_gap < 1e-8 * std::max(1.0, max_abs);

  model.vandermonde.resize(r_star + 1, r_star);
  for (int j = 0; j < r_star; ++j) {
    std::complex<double> pw = 1.0;
    for (int i = 0; i <= r_star; ++i) {
      model.vandermonde(i, j) = pw;
      pw *= model.roots(j);
    }
  }
  return model;
}

CoordFit fit_coords(const KoopmanModel& model, const Eigen::MatrixXd& window) {
  if (model.repeated_roots) {
    throw std::runtime_error("fit_coords: roots are repeated (gap " +
                             std::to_string(model.root_gap) +
                             "); only the direct recursion is available");
  }
  if (window.rows() != model.m || window.cols() != model.r_star + 1) {
    throw std::invalid_argument("fit_coords: window must be m x (r*+1)");
  }
  // (V (x) I_m) c = vec(window) decouples per embedding component.
  const Eigen::MatrixXcd& V = model.vandermonde;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V, Eigen::ComputeThinU | Eigen::ComputeThinV);
  CoordFit fit;
  fit.condition = svd.singularValues()(0) /
                  std::max(svd.singularValues()(svd.singularValues().size() - 1), 1e-300);
  fit.c.resize(model.r_star * model.m);
  double res2 = 0.0;
  for (int comp = 0; comp < model.m; ++comp) {
    const Eigen::VectorXcd rhs = window.row(comp).transpose().cast<std::complex<double>>();
    const Eigen::VectorXcd c = svd.solve(rhs);
    for (int j = 0; j < model.r_star; ++j) fit.c(j * model.m + comp) = c(j);
    res2 += (V * c - rhs).squaredNorm();
  }
  fit.residual = std::sqrt(res2);
  return fit;
}

Eigen::VectorXcd propagate_coords(const KoopmanModel& model, const Eigen::VectorXcd& c) {
  if (c.size() != static_cast<Eigen::Index>(model.r_star) * model.m) {
    throw std::invalid_argument("propagate_coords: coordinate length must be r* m");
  }
  Eigen::VectorXcd out(c.size());
  for (int j = 0; j < model.r_star; ++j) {
    for (int comp = 0; comp < model.m; ++comp) {
      out(j * model.m + comp) = model.roots(j) * c(j * model.m + comp);
    }
  }
  return out;
}

Eigen::VectorXd ar_predict(const KoopmanModel& model, const Eigen::MatrixXd& window) {
  if (window.rows() != model.m || window.cols() != model.r_star) {
    throw std::invalid_argument("ar_predict: window must be m x r*");
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(model.m);
  for (int i = 0; i < model.r_star; ++i) y += model.ar_coeffs(i) * window.col(i);
  return y;
}

Eigen::VectorXd eigen_predict(const KoopmanModel& model, const Eigen::MatrixXd& window) {
  if (window.rows() != model.m || window.cols() != model.r_star + 1) {
    throw std::invalid_argument("eigen_predict: window must be m x (r*+1)");
  }
  // Coordinates of the current window, one diagonal propagation, and the
  // freshly produced block of D c_next.
  const CoordFit fit = fit_coords(model, window);
  const Eigen::VectorXcd c_next = propagate_coords(model, fit.c);
  const Eigen::VectorXcd psi_next = model.dictionary() * c_next;
  return psi_next.segment(model.r_star * model.m, model.m).real();
}

void save_model(const std::filesystem::path& path, const KoopmanModel& model) {
  textio::KeyValueFile kv;
  kv.set("model.m", std::to_string(model.m));
  kv.set("model.r_star", std::to_string(model.r_star));
  std::string p;
  for (int i = 0; i < model.ar_coeffs.size(); ++i) {
    if (i) p += ' ';
    p += textio::fmt(model.ar_coeffs(i));
  }
  kv.set("model.p", p);
  for (int i = 0; i < model.roots.size(); ++i) {
    kv.set("model.root_" + std::to_string(i),
           textio::fmt(model.roots(i).real()) + " " + textio::fmt(model.roots(i).imag()));
  }
  kv.write(path);
}

KoopmanModel load_model(const std::filesystem::path& path) {
  const auto kv = textio::KeyValueFile::parse(path);
  const int m = kv.get_int("model.m", 0);
  const std::vector<double> p = kv.get_doubles("model.p");
  if (m < 1 || p.empty()) throw std::runtime_error("load_model: malformed model file");
  Eigen::VectorXd pv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) pv(i) = p[i];
  return extract_model(pv, m);
}

}  // namespace koop::koopman
