#include "koop/conic.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace koop::conic {

Eigen::MatrixXd psd_project(const Eigen::MatrixXd& S) {
  if (S.rows() != S.cols()) throw std::invalid_argument("psd_project needs a square matrix");
  if (!S.allFinite()) throw std::runtime_error("psd_project: non-finite input");
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("psd_project: input is not symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw std::runtime_error("psd_project: eigensolver failed");
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

std::vector<double> svt_weights(const std::vector<double>& prev_sv, double sigma_shift,
                                int count) {
  std::vector<double> w(count, 1.0);
  if (prev_sv.empty()) return w;
  if (!(sigma_shift > 0.0)) throw std::invalid_argument("svt_weights: sigma_shift must be > 0");
  const double sbar = *std::max_element(prev_sv.begin(), prev_sv.end()) + sigma_shift;
  for (int k = 0; k < count; ++k) {
    const double prev = k < static_cast<int>(prev_sv.size()) ? prev_sv[k] : 0.0;
    w[k] = sbar / (prev + sigma_shift);
  }
  return w;
}

Eigen::MatrixXd weighted_svt(const Eigen::MatrixXd& M, const std::vector<double>& prev_sv,
                             double sigma_shift, double tau) {
  if (tau < 0.0) throw std::invalid_argument("weighted_svt: tau must be >= 0");
  if (tau == 0.0) return M;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd s = svd.singularValues();
  const std::vector<double> w = svt_weights(prev_sv, sigma_shift, static_cast<int>(s.size()));
  for (int k = 0; k < s.size(); ++k) s(k) = std::max(0.0, s(k) - tau * w[k]);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

Eigen::MatrixXd AffineMatrixMap::apply(const Eigen::VectorXd& k) const {
  Eigen::VectorXd flat = A * k;
  if (offset.size()) flat += offset;
  return Eigen::Map<const Eigen::MatrixXd>(flat.data(), rows, cols);
}

namespace {

double lin_eval(const std::vector<std::pair<int, double>>& c, const Eigen::VectorXd& k) {
  double v = 0.0;
  for (const auto& [idx, co] : c) v += co * k(idx);
  return v;
}

double hinge_value(const HingeTerm& h, double v) {
  return h.dir == HingeDir::upper ? std::max(0.0, v - h.bound) : std::max(0.0, h.bound - v);
}

// prox of t * lambda * hinge at w
double hinge_prox(const HingeTerm& h, double w, double step) {
  const double slack = h.lambda * step;
  if (h.dir == HingeDir::upper) {
    if (w > h.bound + slack) return w - slack;
    if (w > h.bound) return h.bound;
    return w;
  }
  if (w < h.bound - slack) return w + slack;
  if (w < h.bound) return h.bound;
  return w;
}

}  // namespace

void ConicProblem::validate() const {
  auto check_var = [&](int v, const char* what) {
    if (v < 0 || v >= num_vars) {
      throw std::invalid_argument(std::string("conic problem: ") + what + " variable out of range");
    }
  };
  for (const auto& b : psd_blocks) {
    if (static_cast<int>(b.vars.size()) != b.dim * (b.dim + 1) / 2) {
      throw std::invalid_argument("conic problem: psd block var list does not match its size");
    }
    for (int v : b.vars) check_var(v, "psd");
  }
  for (const auto& n : nuclear_terms) {
    if (n.lambda < 0.0) throw std::invalid_argument("conic problem: negative nuclear weight");
    if (n.map.A.cols() != num_vars) {
      throw std::invalid_argument("conic problem: nuclear map has wrong variable count");
    }
    if (n.map.A.rows() != static_cast<Eigen::Index>(n.map.rows) * n.map.cols) {
      throw std::invalid_argument("conic problem: nuclear map shape mismatch");
    }
  }
  for (const auto& q : quad_terms) {
    if (q.lambda < 0.0) throw std::invalid_argument("conic problem: negative quad weight");
    for (const auto& [v, co] : q.c) (void)co, check_var(v, "quad");
  }
  for (const auto& h : hinge_terms) {
    if (h.lambda < 0.0) throw std::invalid_argument("conic problem: negative hinge weight");
    for (const auto& [v, co] : h.c) (void)co, check_var(v, "hinge");
  }
  for (const auto& e : equality_terms) check_var(e.var, "equality");
}

double ConicProblem::objective(const Eigen::VectorXd& k) const {
  double obj = 0.0;
  for (const auto& n : nuclear_terms) {
    const Eigen::MatrixXd M = n.map.apply(k);
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues();
    const std::vector<double> w =
        svt_weights(n.prev_sv, n.sigma_shift, static_cast<int>(sv.size()));
    for (int i = 0; i < sv.size(); ++i) obj += n.lambda * w[i] * sv(i);
  }
  for (const auto& q : quad_terms) {
    const double d = lin_eval(q.c, k) - q.target;
    obj += q.lambda * d * d;
  }
  for (const auto& h : hinge_terms) obj += h.lambda * hinge_value(h, lin_eval(h.c, k));
  return obj;
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iters: return "max_iters";
    case SolveStatus::infeasible_suspect: return "infeasible_suspect";
  }
  return "max_iters";
}

namespace {

// Gather the symmetric block of a PSD cone from the packed variables.
Eigen::MatrixXd gather_block(const PsdBlock& blk, const Eigen::VectorXd& k) {
  Eigen::MatrixXd B(blk.dim, blk.dim);
  int t = 0;
  for (int a = 0; a < blk.dim; ++a) {
    for (int b = a; b < blk.dim; ++b) {
      const double v = k(blk.vars[t++]);
      B(a, b) = v;
      B(b, a) = v;
    }
  }
  return B;
}

// acc += S^T vec(Z) for the block selection map S (full-matrix output).
void scatter_block(const PsdBlock& blk, const Eigen::MatrixXd& Z, Eigen::VectorXd& acc) {
  int t = 0;
  for (int a = 0; a < blk.dim; ++a) {
    for (int b = a; b < blk.dim; ++b) {
      acc(blk.vars[t++]) += (a == b) ? Z(a, a) : Z(a, b) + Z(b, a);
    }
  }
}

struct PinInfo {
  std::vector<int> free_of_var;   // var -> free index or -1
  std::vector<int> var_of_free;   // free index -> var
  Eigen::VectorXd pin_values;     // full length, zeros on free vars
  std::vector<bool> pinned;
};

PinInfo make_pins(const ConicProblem& p) {
  PinInfo info;
  info.pinned.assign(p.num_vars, false);
  info.pin_values = Eigen::VectorXd::Zero(p.num_vars);
  for (const auto& e : p.equality_terms) {
    info.pinned[e.var] = true;
    info.pin_values(e.var) = e.value;
  }
  info.free_of_var.assign(p.num_vars, -1);
  for (int v = 0; v < p.num_vars; ++v) {
    if (!info.pinned[v]) {
      info.free_of_var[v] = static_cast<int>(info.var_of_free.size());
      info.var_of_free.push_back(v);
    }
  }
  return info;
}

}  // namespace

std::pair<Eigen::VectorXd, SolveReport> solve_inner(const ConicProblem& problem,
                                                    const SolverConfig& config,
                                                    const Eigen::VectorXd* k0,
                                                    SolverState* state) {
  problem.validate();
  if (!(config.rho > 0.0)) throw std::invalid_argument("solve_inner: rho must be > 0");
  const int P = problem.num_vars;
  const PinInfo pins = make_pins(problem);
  const int F = static_cast<int>(pins.var_of_free.size());

  // Normal operator: M1 = sum A^T A over consensus terms, Q from quadratics.
  SpMat M1(P, P);
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (const auto& blk : problem.psd_blocks) {
      int t = 0;
      for (int a = 0; a < blk.dim; ++a) {
        for (int b = a; b < blk.dim; ++b) {
          trip.emplace_back(blk.vars[t], blk.vars[t], a == b ? 1.0 : 2.0);
          ++t;
        }
      }
    }
    for (const auto& h : problem.hinge_terms) {
      for (const auto& [vi, ci] : h.c) {
        for (const auto& [vj, cj] : h.c) trip.emplace_back(vi, vj, ci * cj);
      }
    }
    M1.setFromTriplets(trip.begin(), trip.end());
    for (const auto& n : problem.nuclear_terms) {
      M1 += SpMat(n.map.A.transpose() * n.map.A);
    }
  }
  SpMat Q(P, P);
  Eigen::VectorXd q_rhs = Eigen::VectorXd::Zero(P);
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (const auto& q : problem.quad_terms) {
      for (const auto& [vi, ci] : q.c) {
        q_rhs(vi) += 2.0 * q.lambda * q.target * ci;
        for (const auto& [vj, cj] : q.c) trip.emplace_back(vi, vj, 2.0 * q.lambda * ci * cj);
      }
    }
    Q.setFromTriplets(trip.begin(), trip.end());
  }

  double rho = config.rho;
  if (state && state->valid && state->rho > 0.0) rho = state->rho;

  // Variables untouched by any term get a unit diagonal so the coupling
  // system stays positive definite; their value is then purely consensus-free.
  Eigen::VectorXd ridge = Eigen::VectorXd::Zero(P);
  {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(P);
    for (int c = 0; c < M1.outerSize(); ++c) {
      for (SpMat::InnerIterator it(M1, c); it; ++it) {
        if (it.row() == it.col()) diag(it.row()) += it.value();
      }
    }
    for (int c = 0; c < Q.outerSize(); ++c) {
      for (SpMat::InnerIterator it(Q, c); it; ++it) {
        if (it.row() == it.col()) diag(it.row()) += it.value();
      }
    }
    for (int v = 0; v < P; ++v) {
      if (diag(v) == 0.0) ridge(v) = 1.0;
    }
  }

  Eigen::SimplicialLDLT<SpMat> ldlt;
  SpMat N_ff;
  Eigen::VectorXd pin_rhs = Eigen::VectorXd::Zero(F);  // N[free, pinned] * pin values
  bool pattern_ready = false;
  auto refactor = [&]() {
    SpMat N = rho * M1 + Q;
    for (int v = 0; v < P; ++v) {
      if (ridge(v) != 0.0) N.coeffRef(v, v) += ridge(v);
    }
    std::vector<Eigen::Triplet<double>> tff;
    pin_rhs.setZero();
    for (int c = 0; c < N.outerSize(); ++c) {
      for (SpMat::InnerIterator it(N, c); it; ++it) {
        const int r = static_cast<int>(it.row()), cc = static_cast<int>(it.col());
        if (pins.pinned[r]) continue;
        if (pins.pinned[cc]) {
          pin_rhs(pins.free_of_var[r]) += it.value() * pins.pin_values(cc);
        } else {
          tff.emplace_back(pins.free_of_var[r], pins.free_of_var[cc], it.value());
        }
      }
    }
    N_ff.resize(F, F);
    N_ff.setFromTriplets(tff.begin(), tff.end());
    if (!pattern_ready) {
      ldlt.analyzePattern(N_ff);
      pattern_ready = true;
    }
    ldlt.factorize(N_ff);
    if (ldlt.info() != Eigen::Success) {
      throw std::runtime_error("solve_inner: coupling system factorization failed");
    }
  };
  refactor();

  // Iterate and consensus copies.
  Eigen::VectorXd k = k0 ? *k0 : Eigen::VectorXd::Zero(P);
  if (k.size() != P) throw std::invalid_argument("solve_inner: bad warm start size");
  for (int v = 0; v < P; ++v) {
    if (pins.pinned[v]) k(v) = pins.pin_values(v);
  }

  const int NN = static_cast<int>(problem.nuclear_terms.size());
  const int NP = static_cast<int>(problem.psd_blocks.size());
  const int NH = static_cast<int>(problem.hinge_terms.size());
  std::vector<Eigen::MatrixXd> zN(NN), uN(NN), zP(NP), uP(NP);
  Eigen::VectorXd zH(NH), uH(NH);
  const bool warm = state && state->valid && static_cast<int>(state->z_nuclear.size()) == NN &&
                    static_cast<int>(state->z_psd.size()) == NP && state->z_hinge.size() == NH;
  if (warm) {
    zN = state->z_nuclear;
    uN = state->u_nuclear;
    zP = state->z_psd;
    uP = state->u_psd;
    zH = state->z_hinge;
    uH = state->u_hinge;
  } else {
    for (int i = 0; i < NN; ++i) {
      zN[i] = problem.nuclear_terms[i].map.apply(k);
      uN[i] = Eigen::MatrixXd::Zero(zN[i].rows(), zN[i].cols());
    }
    for (int i = 0; i < NP; ++i) {
      zP[i] = gather_block(problem.psd_blocks[i], k);
      uP[i] = Eigen::MatrixXd::Zero(zP[i].rows(), zP[i].cols());
    }
    for (int i = 0; i < NH; ++i) {
      zH(i) = lin_eval(problem.hinge_terms[i].c, k);
      uH(i) = 0.0;
    }
  }

  SolveReport report;
  const double alpha = config.over_relax;
  double best_rp = std::numeric_limits<double>::infinity();
  std::vector<double> rp_hist;
  rp_hist.reserve(config.max_iters);
  int rho_changes = 0;

  Eigen::VectorXd rhs(P), dual_acc(P);
  std::vector<Eigen::MatrixXd> valN(NN), valP(NP);
  Eigen::VectorXd valH(NH);

  int iter = 0;
  for (; iter < config.max_iters; ++iter) {
    // ---- coupling step (exact least squares over free variables) ----
    rhs = q_rhs;
    for (int i = 0; i < NN; ++i) {
      const auto& n = problem.nuclear_terms[i];
      Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(zN[i].data(), zN[i].size()) -
                             Eigen::Map<const Eigen::VectorXd>(uN[i].data(), uN[i].size());
      if (n.map.offset.size()) flat -= n.map.offset;
      rhs += rho * (n.map.A.transpose() * flat);
    }
    for (int i = 0; i < NP; ++i) {
      Eigen::MatrixXd D = zP[i] - uP[i];
      D *= rho;
      scatter_block(problem.psd_blocks[i], D, rhs);
    }
    for (int i = 0; i < NH; ++i) {
      for (const auto& [v, co] : problem.hinge_terms[i].c) rhs(v) += rho * (zH(i) - uH(i)) * co;
    }
    Eigen::VectorXd rhs_f(F);
    for (int f = 0; f < F; ++f) rhs_f(f) = rhs(pins.var_of_free[f]);
    rhs_f -= pin_rhs;
    const Eigen::VectorXd kf = ldlt.solve(rhs_f);
    for (int f = 0; f < F; ++f) k(pins.var_of_free[f]) = kf(f);

    // ---- proxes on over-relaxed copies ----
    double rp2 = 0.0;
    double scale_p = 1.0;
    dual_acc.setZero();
    for (int i = 0; i < NN; ++i) {
      const auto& n = problem.nuclear_terms[i];
      valN[i] = n.map.apply(k);
      scale_p = std::max(scale_p, valN[i].norm());
      const Eigen::MatrixXd relaxed = alpha * valN[i] + (1.0 - alpha) * zN[i];
      const Eigen::MatrixXd z_new =
          weighted_svt(relaxed + uN[i], n.prev_sv, n.sigma_shift, n.lambda / rho);
      rp2 += (valN[i] - z_new).squaredNorm();
      uN[i] += relaxed - z_new;
      Eigen::VectorXd dz = Eigen::Map<const Eigen::VectorXd>(z_new.data(), z_new.size()) -
                           Eigen::Map<const Eigen::VectorXd>(zN[i].data(), zN[i].size());
      dual_acc += n.map.A.transpose() * dz;
      zN[i] = z_new;
    }
    for (int i = 0; i < NP; ++i) {
      valP[i] = gather_block(problem.psd_blocks[i], k);
      scale_p = std::max(scale_p, valP[i].norm());
      const Eigen::MatrixXd relaxed = alpha * valP[i] + (1.0 - alpha) * zP[i];
      const Eigen::MatrixXd z_new = psd_project(relaxed + uP[i]);
      rp2 += (valP[i] - z_new).squaredNorm();
      uP[i] += relaxed - z_new;
      Eigen::MatrixXd dz = z_new - zP[i];
      scatter_block(problem.psd_blocks[i], dz, dual_acc);
      zP[i] = z_new;
    }
    for (int i = 0; i < NH; ++i) {
      valH(i) = lin_eval(problem.hinge_terms[i].c, k);
      const double relaxed = alpha * valH(i) + (1.0 - alpha) * zH(i);
      const double z_new = hinge_prox(problem.hinge_terms[i], relaxed + uH(i), 1.0 / rho);
      rp2 += (valH(i) - z_new) * (valH(i) - z_new);
      uH(i) += relaxed - z_new;
      const double dz = z_new - zH(i);
      for (const auto& [v, co] : problem.hinge_terms[i].c) dual_acc(v) += co * dz;
      zH(i) = z_new;
    }
    const double rp = std::sqrt(rp2);
    const double sd = rho * dual_acc.norm();
    report.primal_residual = rp / scale_p;
    report.dual_residual = sd / scale_p;
    rp_hist.push_back(report.primal_residual);
    best_rp = std::min(best_rp, report.primal_residual);

    if (config.record_objective) report.objective_trace.push_back(problem.objective(k));

    if (report.primal_residual <= config.tol_primal &&
        report.dual_residual <= config.tol_dual * std::max(1.0, rho)) {
      report.status = SolveStatus::converged;
      ++iter;
      break;
    }
    // Divergence: the residual has grown an order of magnitude past its best.
    if (iter >= 100 && report.primal_residual > 20.0 * best_rp &&
        report.primal_residual > 100.0 * config.tol_primal) {
      report.status = SolveStatus::infeasible_suspect;
      ++iter;
      break;
    }
    if (config.adapt_rho && (iter + 1) % 25 == 0 && iter < 3 * config.max_iters / 5 &&
        rho_changes < 12) {
      const double r_rel = report.primal_residual;
      const double s_rel = report.dual_residual / std::max(1.0, rho);
      if (r_rel > 10.0 * s_rel) {
        rho *= 2.0;
        for (auto& u : uN) u *= 0.5;
        for (auto& u : uP) u *= 0.5;
        uH *= 0.5;
        ++rho_changes;
        refactor();
      } else if (s_rel > 10.0 * r_rel) {
        rho *= 0.5;
        for (auto& u : uN) u *= 2.0;
        for (auto& u : uP) u *= 2.0;
        uH *= 2.0;
        ++rho_changes;
        refactor();
      }
    }
  }
  report.iterations = iter;
  if (report.status != SolveStatus::converged &&
      report.status != SolveStatus::infeasible_suspect) {
    // Stalled far from feasibility: treat a flat, large residual as a sign the
    // hard constraints (pins vs cones) cannot be met.
    const std::size_t nh = rp_hist.size();
    if (nh > 50 && report.primal_residual > 1000.0 * config.tol_primal) {
      const double before = rp_hist[nh - std::min<std::size_t>(nh, 100)];
      if (report.primal_residual > 0.95 * before) report.status = SolveStatus::infeasible_suspect;
    }
  }

  if (state) {
    state->z_nuclear = zN;
    state->u_nuclear = uN;
    state->z_psd = zP;
    state->u_psd = uP;
    state->z_hinge = zH;
    state->u_hinge = uH;
    state->rho = rho;
    state->valid = true;
  }

  // Returned kernel: PSD blocks projected, overlaps averaged.
  if (!problem.psd_blocks.empty()) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(P), cnt = Eigen::VectorXd::Zero(P);
    for (const auto& blk : problem.psd_blocks) {
      const Eigen::MatrixXd proj = psd_project(gather_block(blk, k));
      int t = 0;
      for (int a = 0; a < blk.dim; ++a) {
        for (int b = a; b < blk.dim; ++b) {
          acc(blk.vars[t]) += proj(a, b);
          cnt(blk.vars[t]) += 1.0;
          ++t;
        }
      }
    }
    for (int v = 0; v < P; ++v) {
      if (cnt(v) > 0.0 && !pins.pinned[v]) k(v) = acc(v) / cnt(v);
    }
  }
  return {k, report};
}

}  // namespace koop::conic
