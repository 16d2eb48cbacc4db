#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>
#include <utility>
#include <vector>

namespace koop::conic {

using SpMat = Eigen::SparseMatrix<double>;

/// Frobenius-nearest positive semidefinite matrix (negative eigenvalues
/// clipped). Input must be symmetric up to 1e-10 relative asymmetry.
Eigen::MatrixXd psd_project(const Eigen::MatrixXd& S);

/// Prox of the (re)weighted nuclear norm: each singular value is shrunk to
/// max(0, s_k - tau * w_k). With empty prev_sv the weights are all one;
/// otherwise w_k = (max(prev_sv) + sigma_shift) / (prev_sv_k + sigma_shift),
/// so the dominant previous direction keeps weight ~1 and vanished directions
/// are shrunk hardest.
Eigen::MatrixXd weighted_svt(const Eigen::MatrixXd& M, const std::vector<double>& prev_sv,
                             double sigma_shift, double tau);

std::vector<double> svt_weights(const std::vector<double>& prev_sv, double sigma_shift,
                                int count);

// ---------------------------------------------------------------------------
// Problem description. The decision variable is a packed vector of kernel
// entries; builders own the (i, j) <-> variable bookkeeping.
// ---------------------------------------------------------------------------

/// Affine map variables -> dense rows x cols matrix, flat index column-major.
struct AffineMatrixMap {
  int rows = 0, cols = 0;
  SpMat A;                 // (rows*cols) x num_vars
  Eigen::VectorXd offset;  // size 0 means zero offset

  Eigen::MatrixXd apply(const Eigen::VectorXd& k) const;
};

struct NuclearTerm {
  AffineMatrixMap map;
  double lambda = 1.0;
  std::vector<double> prev_sv;  // empty: unit weights
  double sigma_shift = 1e-6;
};

struct QuadTerm {
  std::vector<std::pair<int, double>> c;
  double target = 0.0;
  double lambda = 0.0;
};

enum class HingeDir { upper, lower };  // upper: c.k <= bound, lower: c.k >= bound

struct HingeTerm {
  std::vector<std::pair<int, double>> c;
  double bound = 0.0;
  HingeDir dir = HingeDir::upper;
  double lambda = 0.0;
};

struct EqualityTerm {
  int var = 0;
  double value = 0.0;
};

/// Symmetric block on which positive semidefiniteness is enforced; vars lists
/// the packed variable of each (a, b), a <= b, in row-major upper order.
struct PsdBlock {
  int dim = 0;
  std::vector<int> vars;
};

struct ConicProblem {
  int num_vars = 0;
  std::vector<PsdBlock> psd_blocks;
  std::vector<NuclearTerm> nuclear_terms;
  std::vector<QuadTerm> quad_terms;
  std::vector<HingeTerm> hinge_terms;
  std::vector<EqualityTerm> equality_terms;
  std::vector<std::string> warnings;

  void validate() const;
  /// Weighted nuclear + quadratic + hinge value at k (PSD cones excluded).
  double objective(const Eigen::VectorXd& k) const;
};

struct SolverConfig {
  double rho = 1.0;
  int max_iters = 2000;
  double tol_primal = 1e-9;  // relative to iterate scale
  double tol_dual = 1e-8;
  double over_relax = 1.7;
  bool adapt_rho = true;
  bool record_objective = true;
};

enum class SolveStatus { converged, max_iters, infeasible_suspect };

std::string to_string(SolveStatus s);

struct SolveReport {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  std::vector<double> objective_trace;
  SolveStatus status = SolveStatus::max_iters;
};

/// Consensus state (auxiliary matrices and scaled duals) kept between solves
/// so reweighting passes restart warm.
struct SolverState {
  std::vector<Eigen::MatrixXd> z_nuclear, u_nuclear;
  std::vector<Eigen::MatrixXd> z_psd, u_psd;
  Eigen::VectorXd z_hinge, u_hinge;
  double rho = 0.0;
  bool valid = false;
};

/// Operator-splitting solve of
///   min sum_n lambda_n ||W_n A_n(k)||_* + sum_q lambda_q (c_q.k - t_q)^2
///       + sum_h lambda_h hinge(c_h.k)  s.t. PSD blocks, equality pins.
/// Nuclear and PSD cones get consensus copies (SVT / eigenvalue-clip proxes),
/// hinges get scalar copies with a closed-form prox, quadratics are folded
/// exactly into the coupling least-squares, equalities eliminate variables.
std::pair<Eigen::VectorXd, SolveReport> solve_inner(const ConicProblem& problem,
                                                    const SolverConfig& config,
                                                    const Eigen::VectorXd* k0 = nullptr,
                                                    SolverState* state = nullptr);

}  // namespace koop::conic
