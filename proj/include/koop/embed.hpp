#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <unordered_map>
#include <vector>

#include "koop/cliques.hpp"
#include "koop/conic.hpp"
#include "koop/dynamics.hpp"

namespace koop::embed {

struct IdentificationConfig {
  int r = 6;               // order upper bound
  double delta = 0.0;      // neighbor radius; <= 0 picks the percentile default
  double M_u = 3.0;        // ||dx|| <= M_u ||dy||
  double M_l = 3.0;        // ||dy|| <= M_l ||dx||
  Eigen::VectorXd M_u_per_point;  // optional per-point overrides
  Eigen::VectorXd M_l_per_point;
  std::vector<int> anchors;  // global indices; empty picks every ceil(T/10)-th
  bool full_anchors = false;
  double lambda1 = 1.0;   // per-point divided-difference regularizer
  double lambda2 = 10.0;  // anchor penalty
  double lambda3 = 10.0;  // neighbor sandwich penalty
  double sigma_shift = 0.0;    // <= 0: per-term 1e-3 * sigma_1 at the initial kernel
  double nuclear_scale = 0.005;  // nuclear terms are rescaled to this / sigma_1 at init
  int max_reweight = 30;
  double rank_tol = 1e-6;
  bool chordal = false;
  double energy = 0.99;
  int max_loewner_neighbors = 12;
  conic::SolverConfig solver;

  void validate() const;
};

/// Bookkeeping between kernel variables and global point pairs, plus which
/// nuclear terms play which role. Produced by assemble_problem.
struct ProblemLayout {
  int total_points = 0;
  int r = 0;
  double delta = 0.0;
  std::vector<int> offsets;  // global start index per trajectory
  std::vector<int> lengths;
  std::vector<std::pair<int, int>> var_pairs;  // variable -> (i, j), i <= j
  std::unordered_map<long long, int> var_of_pair;
  int gram_term = -1;               // index into nuclear_terms
  std::vector<int> loewner_terms;   // indices into nuclear_terms
  dynamics::NeighborGraph graph;
  std::vector<conic::CliqueDecomposition> cliques;  // per trajectory, chordal mode

  int var(int i, int j) const;
  bool has_var(int i, int j) const;
};

struct AssembledProblem {
  conic::ConicProblem problem;
  ProblemLayout layout;
};

/// Builds the kernel program for the given trajectories: one nuclear term on
/// the stacked sliding-window Gram, one lambda1-weighted nuclear term per
/// point's local divided-difference matrix, quadratic anchors, hinge pairs
/// encoding the Lipschitz sandwich, and PSD blocks per trajectory (dense) or
/// per clique (chordal).
AssembledProblem assemble_problem(const std::vector<dynamics::Trajectory>& trajs,
                                  const IdentificationConfig& cfg);

struct Certificate {
  bool exact = false;
  double bound = 0.0;  // sqrt(sigma_min(G)) when not exact
};

/// Exact iff numeric_rank(G, rank_tol) < r.
Certificate certificate(const Eigen::MatrixXd& G, int r, double rank_tol);

struct EmbeddingResult {
  std::vector<Eigen::MatrixXd> kernels;     // per-trajectory T_i x T_i
  std::vector<Eigen::MatrixXd> embeddings;  // per-trajectory m x T_i
  int embed_dim = 0;                        // m
  Eigen::MatrixXd gram;                     // stacked G at the configured order
  int achieved_rank = 0;                    // r*
  Eigen::VectorXd model_coeffs;             // [a_0 ... a_{order-1} -1]
  Certificate cert;
  std::vector<conic::SolveReport> reports;  // one per reweighting pass
  std::vector<int> rank_trace;
  int r = 0;
  double delta = 0.0;  // resolved neighbor radius (original units)
};

/// Smallest eigenbasis capturing `energy` of the spectrum, scaled so that
/// Y^T Y reproduces K: Y = diag(sqrt(lam_1..m)) U(:,1..m)^T.
Eigen::MatrixXd extract_embeddings(const Eigen::MatrixXd& K, double energy);

/// The reweighted identification loop: solve, reweight from the achieved
/// spectra, stop once numeric_rank(G) < r or max_reweight passes; then
/// extract per-trajectory embeddings and the recursion coefficients.
EmbeddingResult run_identification(const std::vector<dynamics::Trajectory>& trajs,
                                   const IdentificationConfig& cfg);

void save_result(const std::filesystem::path& dir, const EmbeddingResult& result);
EmbeddingResult load_result(const std::filesystem::path& dir);

}  // namespace koop::embed
