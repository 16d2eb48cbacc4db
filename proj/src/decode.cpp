#include "koop/decode.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "koop/structmat.hpp"

namespace koop::decode {

using structmat::svec_diag_index;
using structmat::svec_index;
using structmat::svec_size;

void DecodeConfig::validate() const {
  if (!(delta > 0.0)) throw std::invalid_argument("decode: delta must be > 0");
  if (!(M_u > 0.0) || !(M_l > 0.0)) throw std::invalid_argument("decode: M bounds must be > 0");
  if (min_neighbors < 2) throw std::invalid_argument("decode: min_neighbors must be >= 2");
  if (max_neighbors < min_neighbors) throw std::invalid_argument("decode: max < min neighbors");
  if (!(nuclear_scale > 0.0)) throw std::invalid_argument("decode: nuclear_scale must be > 0");
}

std::vector<int> select_neighborhood(const Eigen::MatrixXd& pts, const Eigen::VectorXd& query,
                                     const DecodeConfig& cfg) {
  const int T = static_cast<int>(pts.cols());
  if (T < 2) throw std::invalid_argument("decode: dataset needs at least two points");
  std::vector<int> order(T);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> d2(T);
  for (int k = 0; k < T; ++k) d2[k] = (pts.col(k) - query).squaredNorm();
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return d2[a] == d2[b] ? a < b : d2[a] < d2[b];
  });
  std::vector<int> members;
  for (int k : order) {
    if (d2[k] <= cfg.delta && static_cast<int>(members.size()) < cfg.max_neighbors) {
      members.push_back(k);
    }
  }
  // Radius growth: never fewer than min_neighbors.
  for (int k : order) {
    if (static_cast<int>(members.size()) >= std::min(cfg.min_neighbors, T)) break;
    if (std::find(members.begin(), members.end(), k) == members.end()) members.push_back(k);
  }
  if (members.size() < 2) throw std::runtime_error("decode: neighborhood has fewer than two points");
  return members;
}

namespace {

struct LocalProblem {
  conic::ConicProblem prob;
  Eigen::VectorXd k0;
  int s = 0;       // |members|
  int qp = 0;      // s + 1
  int loewner_term = -1;
  int kernel_term = -1;
  int p = 0;
  double kscale = 1.0;  // kernel units divided out before solving
};

// target side is completed, source side is fully known. c_upper and c_lower
// bound the sandwich: dTgt <= c_upper * dSrc and dTgt >= dSrc / c_lower.
LocalProblem build_local(const Eigen::MatrixXd& src_pts, const Eigen::VectorXd& src_query,
                         const Eigen::MatrixXd& tgt_pts, const std::vector<int>& members,
                         double c_upper, double c_lower, const DecodeConfig& cfg) {
  LocalProblem lp;
  lp.s = static_cast<int>(members.size());
  lp.qp = lp.s + 1;
  const int q = svec_size(lp.qp);

  auto src_col = [&](int a) -> Eigen::VectorXd {
    return a == 0 ? src_query : Eigen::VectorXd(src_pts.col(members[a - 1]));
  };
  Eigen::VectorXd k_src(q), k_tgt(q);
  std::vector<bool> tgt_known(q, false);
  int slot = 0;
  for (int a = 0; a < lp.qp; ++a) {
    for (int b = a; b < lp.qp; ++b) {
      k_src(slot) = src_col(a).dot(src_col(b));
      if (a > 0) {
        k_tgt(slot) = tgt_pts.col(members[a - 1]).dot(tgt_pts.col(members[b - 1]));
        tgt_known[slot] = true;
      } else {
        // Unknown query products start from the identity-map guess.
        k_tgt(slot) = k_src(slot);
      }
      ++slot;
    }
  }

  lp.kscale = std::max(k_src.cwiseAbs().maxCoeff(), k_tgt.cwiseAbs().maxCoeff());
  if (!(lp.kscale > 0.0)) lp.kscale = 1.0;
  k_src /= lp.kscale;
  k_tgt /= lp.kscale;

  conic::ConicProblem& prob = lp.prob;
  prob.num_vars = q;
  for (int v = 0; v < q; ++v) {
    if (tgt_known[v]) prob.equality_terms.push_back({v, k_tgt(v)});
  }
  // Query gain pin: the target query norm matches the source query norm.
  prob.equality_terms.push_back({0, k_src(0)});
  k_tgt(0) = k_src(0);

  // Divided differences of the source-to-target kernel map: numerators affine
  // in the unknown slots, denominators fixed by the known side.
  const structmat::LoewnerPlan plan = structmat::plan_loewner(k_src);
  lp.p = plan.p;
  if (!plan.cols.empty() && plan.p >= 1) {
    conic::NuclearTerm term;
    term.lambda = cfg.lambda_loewner;
    term.map.rows = plan.p;
    term.map.cols = static_cast<int>(plan.cols.size());
    term.map.offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(plan.p) * term.map.cols);
    std::vector<Eigen::Triplet<double>> trip;
    for (int col = 0; col < term.map.cols; ++col) {
      const int den_slot = plan.p + plan.cols[col];
      for (int row = 0; row < plan.p; ++row) {
        const int flat = row + col * plan.p;
        trip.emplace_back(flat, row, plan.inv_den(row, col));
        trip.emplace_back(flat, den_slot, -plan.inv_den(row, col));
      }
    }
    term.map.A.resize(static_cast<Eigen::Index>(plan.p) * term.map.cols, q);
    term.map.A.setFromTriplets(trip.begin(), trip.end());
    lp.loewner_term = static_cast<int>(prob.nuclear_terms.size());
    prob.nuclear_terms.push_back(std::move(term));
  }

  // Kernel-rank surrogate on the completed target kernel itself.
  {
    conic::NuclearTerm term;
    term.lambda = cfg.lambda_kernel;
    term.map.rows = lp.qp;
    term.map.cols = lp.qp;
    std::vector<Eigen::Triplet<double>> trip;
    for (int a = 0; a < lp.qp; ++a) {
      for (int b = 0; b < lp.qp; ++b) {
        trip.emplace_back(a + b * lp.qp, svec_index(a, b, lp.qp), 1.0);
      }
    }
    term.map.A.resize(static_cast<Eigen::Index>(lp.qp) * lp.qp, q);
    term.map.A.setFromTriplets(trip.begin(), trip.end());
    lp.kernel_term = static_cast<int>(prob.nuclear_terms.size());
    prob.nuclear_terms.push_back(std::move(term));
  }

  // Sandwich and ball constraints per neighbor.
  const double delta_scaled = cfg.delta / lp.kscale;
  for (int i = 1; i <= lp.s; ++i) {
    const std::vector<std::pair<int, double>> c = {
        {0, 1.0}, {svec_index(0, i, lp.qp), -2.0}, {svec_diag_index(i, lp.qp), 1.0}};
    const double d_src =
        k_src(0) - 2.0 * k_src(svec_index(0, i, lp.qp)) + k_src(svec_diag_index(i, lp.qp));
    prob.hinge_terms.push_back(
        {c, delta_scaled, conic::HingeDir::upper, cfg.lambda_hinge});
    prob.hinge_terms.push_back(
        {c, c_upper * c_upper * d_src, conic::HingeDir::upper, cfg.lambda_hinge});
    prob.hinge_terms.push_back(
        {c, d_src / (c_lower * c_lower), conic::HingeDir::lower, cfg.lambda_hinge});
  }

  conic::PsdBlock blk;
  blk.dim = lp.qp;
  for (int a = 0; a < lp.qp; ++a) {
    for (int b = a; b < lp.qp; ++b) blk.vars.push_back(svec_index(a, b, lp.qp));
  }
  prob.psd_blocks.push_back(std::move(blk));

  lp.k0 = k_tgt;
  for (auto& term : prob.nuclear_terms) {
    const Eigen::VectorXd sv = structmat::singular_values(term.map.apply(lp.k0));
    const double s1 = sv.size() ? sv(0) : 0.0;
    term.lambda *= cfg.nuclear_scale / std::max(s1, 1e-12);
    term.sigma_shift = cfg.sigma_shift > 0.0 ? cfg.sigma_shift : std::max(1e-3 * s1, 1e-12);
  }
  prob.validate();
  return lp;
}

// Shared completion routine; returns the recovered target-space query point.
std::pair<Eigen::VectorXd, DecodeDiag> complete_query(const Eigen::MatrixXd& src_pts,
                                                      const Eigen::VectorXd& src_query,
                                                      const Eigen::MatrixXd& tgt_pts,
                                                      double c_upper, double c_lower,
                                                      const DecodeConfig& cfg) {
  cfg.validate();
  if (src_pts.cols() != tgt_pts.cols()) throw std::invalid_argument("decode: dataset size mismatch");
  if (src_query.size() != src_pts.rows()) throw std::invalid_argument("decode: query dimension mismatch");

  const std::vector<int> members = select_neighborhood(src_pts, src_query, cfg);
  LocalProblem lp = build_local(src_pts, src_query, tgt_pts, members, c_upper, c_lower, cfg);

  DecodeDiag diag;
  diag.neighborhood = lp.s;
  diag.p = lp.p;

  Eigen::VectorXd k = lp.k0;
  conic::SolverState warm;
  for (int pass = 0; pass < cfg.max_reweight; ++pass) {
    auto [k_next, report] = conic::solve_inner(lp.prob, cfg.solver, &k, &warm);
    k = std::move(k_next);
    diag.reweight_passes = pass + 1;
    if (lp.loewner_term < 0) break;
    const Eigen::MatrixXd L = lp.prob.nuclear_terms[lp.loewner_term].map.apply(k);
    diag.loewner_rank = structmat::numeric_rank(L, cfg.rank_tol);
    if (diag.loewner_rank < lp.p) {
      diag.exact = true;
      break;
    }
    for (auto& term : lp.prob.nuclear_terms) {
      const Eigen::VectorXd sv = structmat::singular_values(term.map.apply(k));
      term.prev_sv.assign(sv.data(), sv.data() + sv.size());
    }
  }

  for (const auto& h : lp.prob.hinge_terms) {
    double v = 0.0;
    for (const auto& [idx, co] : h.c) v += co * k(idx);
    const double viol = h.dir == conic::HingeDir::upper ? v - h.bound : h.bound - v;
    diag.max_hinge_violation = std::max(diag.max_hinge_violation, viol * lp.kscale);
  }

  // Completed target kernel, rank-truncated to the target dimension before the
  // linear recovery.
  Eigen::MatrixXd K = structmat::smat(k) * lp.kscale;
  const int n_tgt = static_cast<int>(tgt_pts.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (K + K.transpose()));
  diag.kernel_min_eig = eig.eigenvalues().minCoeff();
  Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  for (int i = 0; i < lam.size() - n_tgt; ++i) lam(i) = 0.0;  // ascending order
  K = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();

  // x* from the overdetermined system <x_i, x*> = completed products; the
  // known neighbor coordinates remove the factorization's orthogonal freedom.
  Eigen::MatrixXd A(lp.s, n_tgt);
  Eigen::VectorXd rhs(lp.s);
  for (int i = 1; i <= lp.s; ++i) {
    A.row(i - 1) = tgt_pts.col(members[i - 1]).transpose();
    rhs(i - 1) = K(0, i);
  }
  const Eigen::VectorXd recovered = A.colPivHouseholderQr().solve(rhs);
  return {recovered, diag};
}

}  // namespace

std::pair<Eigen::VectorXd, DecodeDiag> decode_point(const Eigen::VectorXd& y_star,
                                                    const Dataset& data,
                                                    const DecodeConfig& cfg) {
  // dTgt = dX, dSrc = dY: ||dx|| <= M_u ||dy||, ||dy|| <= M_l ||dx||.
  return complete_query(data.Y, y_star, data.X, cfg.M_u, cfg.M_l, cfg);
}

std::pair<Eigen::VectorXd, DecodeDiag> encode_point(const Eigen::VectorXd& x_star,
                                                    const Dataset& data,
                                                    const DecodeConfig& cfg) {
  // dTgt = dY: upper from ||dy|| <= M_l ||dx||, lower from ||dx|| <= M_u ||dy||.
  return complete_query(data.X, x_star, data.Y, cfg.M_l, cfg.M_u, cfg);
}

Eigen::VectorXd predict_state(const Eigen::MatrixXd& window, const koopman::KoopmanModel& model,
                              const Dataset& data, const DecodeConfig& cfg) {
  if (window.rows() != data.X.rows() || window.cols() != model.r_star) {
    throw std::invalid_argument("predict_state: window must be n x r*");
  }
  Eigen::MatrixXd y_window(data.Y.rows(), model.r_star);
  for (int i = 0; i < model.r_star; ++i) {
    y_window.col(i) = encode_point(window.col(i), data, cfg).first;
  }
  const Eigen::VectorXd y_next = koopman::ar_predict(model, y_window);
  return decode_point(y_next, data, cfg).first;
}

}  // namespace koop::decode
