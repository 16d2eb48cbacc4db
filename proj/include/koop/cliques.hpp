#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace koop::conic {

/// Ordered cliques over point indices with a path tree. Consecutive windows
/// {l, ..., l+r} are augmented by the spatial neighbors of their members and
/// then intervalized (every vertex occupies a contiguous clique range) so the
/// running-intersection property holds along the path.
struct CliqueDecomposition {
  std::vector<std::vector<int>> cliques;       // sorted member indices
  std::vector<std::pair<int, int>> tree;       // path edges (l, l+1)

  bool covers(int s, int t) const;
};

/// Sliding-window cliques for a length-T sequence with order bound r and
/// spatial neighbor pairs (local indices). `must_cover` pairs are checked
/// against the result; an uncovered pair throws (delta/r mismatch).
CliqueDecomposition build_cliques(int T, int r, const std::vector<std::pair<int, int>>& neighbors,
                                  const std::vector<std::pair<int, int>>& must_cover = {});

/// True iff every clique submatrix of the partially specified matrix is PSD
/// (eigenvalues >= -1e-9 * trace scale); for chordal patterns this certifies
/// PSD completability. `known` marks the specified entries; a clique-internal
/// unknown entry throws.
bool grone_check(const Eigen::MatrixXd& K_partial,
                 const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& known,
                 const CliqueDecomposition& cliques);

struct CompletionResult {
  Eigen::MatrixXd K;
  int rank = 0;             // numeric rank of the completed matrix at 1e-8
  int max_clique_rank = 0;  // expected minimum completion rank
  double min_eigenvalue = 0.0;
  bool rank_matches = false;
};

/// Minimum-rank PSD completion along a path clique tree: each new block is
/// filled through the overlap, B_unknown = B_prev,ov * pinv(B_ov,ov) * B_ov,new.
/// With strict=true a completion whose rank exceeds the max clique rank or
/// that loses positive semidefiniteness throws; otherwise the result carries
/// the diagnostics.
CompletionResult complete_path(const Eigen::MatrixXd& K_partial,
                               const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& known,
                               const CliqueDecomposition& cliques, bool strict = true);

}  // namespace koop::conic
