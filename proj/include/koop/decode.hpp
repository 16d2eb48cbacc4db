#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

#include "koop/conic.hpp"
#include "koop/koopman.hpp"

namespace koop::decode {

/// Matched state/embedding pairs: column k of X maps to column k of Y.
struct Dataset {
  Eigen::MatrixXd X;  // n x T
  Eigen::MatrixXd Y;  // m x T
};

struct DecodeConfig {
  double delta = 1.0;      // squared-distance neighborhood radius
  double M_u = 3.0;        // ||dx|| <= M_u ||dy||
  double M_l = 3.0;        // ||dy|| <= M_l ||dx||
  int min_neighbors = 4;   // enforced by radius growth
  int max_neighbors = 12;  // nearest-first cap
  double lambda_hinge = 10.0;
  double lambda_loewner = 1.0;
  double lambda_kernel = 1.0;
  double nuclear_scale = 0.005;
  double sigma_shift = 0.0;  // <= 0: 1e-3 * sigma_1 at the initial local kernel
  int max_reweight = 8;
  double rank_tol = 1e-6;
  conic::SolverConfig solver = {.rho = 4.0, .max_iters = 800, .tol_primal = 1e-9,
                                .tol_dual = 1e-8, .over_relax = 1.7, .adapt_rho = true,
                                .record_objective = false};

  void validate() const;
};

/// Query-first local kernels over {query} u members. The first |members|+1
/// svec slots hold every product involving the query.
struct LocalNeighborhood {
  Eigen::VectorXd center;
  std::vector<int> members;      // dataset indices, nearest first
  Eigen::VectorXd k_source;      // svec kernel of the known side (with query)
  Eigen::VectorXd k_target;      // svec kernel of the unknown side; query slots hold the init guess
  std::vector<bool> target_known;
};

/// Members within squared distance `delta` of the query among the columns of
/// `pts`; grown to min_neighbors by taking nearest points, capped at
/// max_neighbors. Throws when fewer than two members exist.
std::vector<int> select_neighborhood(const Eigen::MatrixXd& pts, const Eigen::VectorXd& query,
                                     const DecodeConfig& cfg);

struct DecodeDiag {
  int neighborhood = 0;
  int p = 0;                  // divided-difference rank certificate threshold
  int loewner_rank = 0;
  bool exact = false;         // loewner_rank < p achieved
  double kernel_min_eig = 0.0;
  double max_hinge_violation = 0.0;
  int reweight_passes = 0;
};

/// Completes the local state-side kernel around y_star through the rank
/// relaxation over the unknown query products, then recovers x_star from the
/// completed inner products against the known neighbor states.
std::pair<Eigen::VectorXd, DecodeDiag> decode_point(const Eigen::VectorXd& y_star,
                                                    const Dataset& data,
                                                    const DecodeConfig& cfg);

/// Mirror of decode_point with the roles of states and embeddings swapped.
std::pair<Eigen::VectorXd, DecodeDiag> encode_point(const Eigen::VectorXd& x_star,
                                                    const Dataset& data,
                                                    const DecodeConfig& cfg);

/// encode window -> recursion step -> decode. Window columns are the last
/// r* states.
Eigen::VectorXd predict_state(const Eigen::MatrixXd& window, const koopman::KoopmanModel& model,
                              const Dataset& data, const DecodeConfig& cfg);

}  // namespace koop::decode
