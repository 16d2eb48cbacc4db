#include "koop/cliques.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

#include "koop/structmat.hpp"

namespace koop::conic {

bool CliqueDecomposition::covers(int s, int t) const {
  for (const auto& c : cliques) {
    if (std::binary_search(c.begin(), c.end(), s) && std::binary_search(c.begin(), c.end(), t)) {
      return true;
    }
  }
  return false;
}

CliqueDecomposition build_cliques(int T, int r, const std::vector<std::pair<int, int>>& neighbors,
                                  const std::vector<std::pair<int, int>>& must_cover) {
  if (T < r + 1) throw std::invalid_argument("build_cliques requires T >= r + 1");
  std::vector<std::vector<int>> adj(T);
  for (const auto& [s, t] : neighbors) {
    if (s < 0 || t < 0 || s >= T || t >= T) {
      throw std::invalid_argument("build_cliques: neighbor index out of range");
    }
    adj[s].push_back(t);
    adj[t].push_back(s);
  }

  const int L = T - r;
  std::vector<std::set<int>> cl(L);
  for (int l = 0; l < L; ++l) {
    for (int w = l; w <= l + r; ++w) {
      cl[l].insert(w);
      for (int nb : adj[w]) cl[l].insert(nb);
    }
  }
  // Intervalize membership so the path satisfies the running-intersection
  // property: a vertex present in cliques a and b joins everything between.
  std::vector<int> first(T, L), last(T, -1);
  for (int l = 0; l < L; ++l) {
    for (int v : cl[l]) {
      first[v] = std::min(first[v], l);
      last[v] = std::max(last[v], l);
    }
  }
  for (int v = 0; v < T; ++v) {
    for (int l = first[v]; l <= last[v]; ++l) cl[l].insert(v);
  }

  CliqueDecomposition out;
  out.cliques.reserve(L);
  for (int l = 0; l < L; ++l) out.cliques.emplace_back(cl[l].begin(), cl[l].end());
  for (int l = 0; l + 1 < L; ++l) out.tree.emplace_back(l, l + 1);

  for (const auto& [s, t] : must_cover) {
    if (!out.covers(s, t)) {
      throw std::runtime_error("build_cliques: pair (" + std::to_string(s) + ", " +
                               std::to_string(t) + ") is covered by no clique; widen delta or r");
    }
  }
  return out;
}

namespace {

Eigen::MatrixXd clique_submatrix(const Eigen::MatrixXd& K,
                                 const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& known,
                                 const std::vector<int>& c) {
  const int d = static_cast<int>(c.size());
  Eigen::MatrixXd B(d, d);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      if (!known(c[a], c[b])) {
        throw std::invalid_argument("missing clique entry (" + std::to_string(c[a]) + ", " +
                                    std::to_string(c[b]) + ")");
      }
      B(a, b) = K(c[a], c[b]);
    }
  }
  return 0.5 * (B + B.transpose());
}

}  // namespace

bool grone_check(const Eigen::MatrixXd& K_partial,
                 const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& known,
                 const CliqueDecomposition& cliques) {
  for (const auto& c : cliques.cliques) {
    const Eigen::MatrixXd B = clique_submatrix(K_partial, known, c);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(B, Eigen::EigenvaluesOnly);
    const double tol = 1e-9 * std::max(1.0, B.trace());
    if (eig.eigenvalues().minCoeff() < -tol) return false;
  }
  return true;
}

CompletionResult complete_path(const Eigen::MatrixXd& K_partial,
                               const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& known,
                               const CliqueDecomposition& cliques, bool strict) {
  const int n = static_cast<int>(K_partial.rows());
  if (cliques.cliques.empty()) throw std::invalid_argument("complete_path: no cliques");
  for (const auto& [a, b] : cliques.tree) {
    if (b != a + 1) throw std::invalid_argument("complete_path: clique tree is not a path");
  }

  CompletionResult res;
  res.K = K_partial;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> filled = known;

  std::vector<int> frontier = cliques.cliques.front();
  for (std::size_t l = 1; l < cliques.cliques.size(); ++l) {
    const auto& next = cliques.cliques[l];
    std::vector<int> overlap, fresh, old_only;
    std::set_intersection(frontier.begin(), frontier.end(), next.begin(), next.end(),
                          std::back_inserter(overlap));
    std::set_difference(next.begin(), next.end(), frontier.begin(), frontier.end(),
                        std::back_inserter(fresh));
    std::set_difference(frontier.begin(), frontier.end(), overlap.begin(), overlap.end(),
                        std::back_inserter(old_only));
    if (!fresh.empty() && overlap.empty()) {
      throw std::invalid_argument("complete_path: disconnected cliques");
    }
    if (!fresh.empty() && !old_only.empty()) {
      const int no = static_cast<int>(overlap.size());
      Eigen::MatrixXd Boo(no, no);
      for (int a = 0; a < no; ++a) {
        for (int b = 0; b < no; ++b) Boo(a, b) = res.K(overlap[a], overlap[b]);
      }
      // pinv through the eigendecomposition; the overlap block may be singular.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (Boo + Boo.transpose()));
      const double cut = 1e-10 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
      Eigen::VectorXd inv = eig.eigenvalues();
      for (int i = 0; i < inv.size(); ++i) inv(i) = std::abs(inv(i)) > cut ? 1.0 / inv(i) : 0.0;
      const Eigen::MatrixXd pinv =
          eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();

      Eigen::MatrixXd Bpo(static_cast<int>(old_only.size()), no);
      for (int a = 0; a < Bpo.rows(); ++a) {
        for (int b = 0; b < no; ++b) Bpo(a, b) = res.K(old_only[a], overlap[b]);
      }
      Eigen::MatrixXd Bon(no, static_cast<int>(fresh.size()));
      for (int a = 0; a < no; ++a) {
        for (int b = 0; b < Bon.cols(); ++b) Bon(a, b) = res.K(overlap[a], fresh[b]);
      }
      const Eigen::MatrixXd fill = Bpo * pinv * Bon;
      for (int a = 0; a < fill.rows(); ++a) {
        for (int b = 0; b < fill.cols(); ++b) {
          res.K(old_only[a], fresh[b]) = fill(a, b);
          res.K(fresh[b], old_only[a]) = fill(a, b);
          filled(old_only[a], fresh[b]) = true;
          filled(fresh[b], old_only[a]) = true;
        }
      }
    }
    std::vector<int> merged;
    std::set_union(frontier.begin(), frontier.end(), next.begin(), next.end(),
                   std::back_inserter(merged));
    frontier = std::move(merged);
  }

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!filled(i, j)) {
        throw std::runtime_error("complete_path: entry (" + std::to_string(i) + ", " +
                                 std::to_string(j) + ") remained unknown");
      }
    }
  }

  for (const auto& c : cliques.cliques) {
    const Eigen::MatrixXd B = clique_submatrix(K_partial, known, c);
    res.max_clique_rank = std::max(res.max_clique_rank, structmat::numeric_rank(B, 1e-8));
  }
  res.rank = structmat::numeric_rank(res.K, 1e-8);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (res.K + res.K.transpose()),
                                                     Eigen::EigenvaluesOnly);
  res.min_eigenvalue = eig.eigenvalues().minCoeff();
  res.rank_matches = res.rank == res.max_clique_rank;
  if (strict) {
    if (res.min_eigenvalue < -1e-8 * std::max(1.0, res.K.trace())) {
      throw std::runtime_error("complete_path: completion lost positive semidefiniteness");
    }
    if (res.rank > res.max_clique_rank) {
      throw std::runtime_error("complete_path: completion rank " + std::to_string(res.rank) +
                               " exceeds max clique rank " +
                               std::to_string(res.max_clique_rank));
    }
  }
  return res;
}

}  // namespace koop::conic
