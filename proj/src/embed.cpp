#include "koop/embed.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "koop/structmat.hpp"
#include "koop/textio.hpp"

namespace koop::embed {

using structmat::numeric_rank;
using structmat::singular_values;

void IdentificationConfig::validate() const {
  if (r < 1) throw std::invalid_argument("identification: r must be >= 1");
  if (!(M_u > 0.0) || !(M_l > 0.0)) throw std::invalid_argument("identification: M bounds must be > 0");
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) {
    throw std::invalid_argument("identification: penalty coefficients must be >= 0");
  }
  if (!(energy > 0.0) || energy > 1.0) throw std::invalid_argument("identification: energy in (0, 1]");
  if (max_reweight < 1) throw std::invalid_argument("identification: max_reweight >= 1");
  if (!(rank_tol > 0.0) || rank_tol >= 1.0) throw std::invalid_argument("identification: rank_tol in (0,1)");
  if (!(nuclear_scale > 0.0)) throw std::invalid_argument("identification: nuclear_scale must be > 0");
}

int ProblemLayout::var(int i, int j) const {
  if (i > j) std::swap(i, j);
  const auto it = var_of_pair.find(static_cast<long long>(i) * total_points + j);
  if (it == var_of_pair.end()) throw std::logic_error("kernel entry is not an active variable");
  return it->second;
}

bool ProblemLayout::has_var(int i, int j) const {
  if (i > j) std::swap(i, j);
  return var_of_pair.count(static_cast<long long>(i) * total_points + j) > 0;
}

namespace {

int ensure_var(ProblemLayout& layout, int i, int j) {
  if (i > j) std::swap(i, j);
  const long long key = static_cast<long long>(i) * layout.total_points + j;
  auto it = layout.var_of_pair.find(key);
  if (it != layout.var_of_pair.end()) return it->second;
  const int v = static_cast<int>(layout.var_pairs.size());
  layout.var_pairs.emplace_back(i, j);
  layout.var_of_pair.emplace(key, v);
  return v;
}

// Neighbor lists capped to the nearest `cap` points.
std::vector<std::vector<int>> adjacency(const dynamics::NeighborGraph& graph,
                                        const Eigen::MatrixXd& X, int cap) {
  const int T = static_cast<int>(X.cols());
  std::vector<std::vector<int>> adj(T);
  for (const auto& [s, t] : graph.pairs) {
    adj[s].push_back(t);
    adj[t].push_back(s);
  }
  for (int s = 0; s < T; ++s) {
    auto& nb = adj[s];
    std::sort(nb.begin(), nb.end(), [&](int a, int b) {
      const double da = (X.col(a) - X.col(s)).squaredNorm();
      const double db = (X.col(b) - X.col(s)).squaredNorm();
      return da == db ? a < b : da < db;
    });
    if (static_cast<int>(nb.size()) > cap) nb.resize(cap);
    std::sort(nb.begin(), nb.end());
  }
  return adj;
}

}  // namespace

AssembledProblem assemble_problem(const std::vector<dynamics::Trajectory>& trajs,
                                  const IdentificationConfig& cfg) {
  cfg.validate();
  if (trajs.empty()) throw std::invalid_argument("assemble_problem: no trajectories");
  for (const auto& t : trajs) {
    t.validate();
    if (t.length() < cfg.r + 1) {
      throw std::invalid_argument("assemble_problem: trajectory shorter than r + 1");
    }
  }

  AssembledProblem out;
  ProblemLayout& layout = out.layout;
  conic::ConicProblem& prob = out.problem;

  layout.r = cfg.r;
  const int N = static_cast<int>(trajs.size());
  layout.offsets.resize(N);
  layout.lengths.resize(N);
  int total = 0;
  for (int i = 0; i < N; ++i) {
    layout.offsets[i] = total;
    layout.lengths[i] = trajs[i].length();
    total += trajs[i].length();
  }
  layout.total_points = total;

  const Eigen::MatrixXd X = dynamics::concat_points(trajs);
  layout.delta = cfg.delta > 0.0 ? cfg.delta : dynamics::default_delta(trajs);
  layout.graph = dynamics::neighbor_graph(trajs, layout.delta);

  auto M_u_at = [&](int s) {
    return cfg.M_u_per_point.size() ? cfg.M_u_per_point(s) : cfg.M_u;
  };
  auto M_l_at = [&](int s) {
    return cfg.M_l_per_point.size() ? cfg.M_l_per_point(s) : cfg.M_l;
  };
  if (cfg.M_u_per_point.size() && cfg.M_u_per_point.size() != total) {
    throw std::invalid_argument("assemble_problem: M_u_per_point length mismatch");
  }
  if (cfg.M_l_per_point.size() && cfg.M_l_per_point.size() != total) {
    throw std::invalid_argument("assemble_problem: M_l_per_point length mismatch");
  }

  std::vector<int> anchors = cfg.anchors;
  if (cfg.full_anchors) {
    anchors.resize(total);
    std::iota(anchors.begin(), anchors.end(), 0);
  } else if (anchors.empty()) {
    const int stride = (total + 9) / 10;
    for (int s = 0; s < total; s += stride) anchors.push_back(s);
  }
  for (int s : anchors) {
    if (s < 0 || s >= total) throw std::invalid_argument("assemble_problem: anchor index out of range");
  }

  const auto adj = adjacency(layout.graph, X, cfg.max_loewner_neighbors);

  // Active variables. Dense mode: all within-trajectory pairs. Chordal mode:
  // clique-covered pairs. Constraint terms add what they touch.
  if (!cfg.chordal) {
    for (int i = 0; i < N; ++i) {
      const int off = layout.offsets[i], Ti = layout.lengths[i];
      for (int a = 0; a < Ti; ++a) {
        for (int b = a; b < Ti; ++b) ensure_var(layout, off + a, off + b);
      }
    }
  } else {
    for (int i = 0; i < N; ++i) {
      const int off = layout.offsets[i], Ti = layout.lengths[i];
      std::vector<std::pair<int, int>> local_nb;
      for (const auto& [s, t] : layout.graph.pairs) {
        if (s >= off && s < off + Ti && t >= off && t < off + Ti) {
          local_nb.emplace_back(s - off, t - off);
        }
      }
      std::vector<std::pair<int, int>> must;
      for (int a = 0; a < Ti; ++a) {
        for (int b = a; b <= std::min(Ti - 1, a + cfg.r); ++b) must.emplace_back(a, b);
      }
      for (const auto& [a, b] : local_nb) must.emplace_back(a, b);
      for (int a = 0; a < Ti; ++a) {
        const auto& nb = adj[off + a];
        for (std::size_t x = 0; x < nb.size(); ++x) {
          if (nb[x] < off || nb[x] >= off + Ti) continue;
          must.emplace_back(a, nb[x] - off);
          for (std::size_t y = x + 1; y < nb.size(); ++y) {
            if (nb[y] >= off && nb[y] < off + Ti) must.emplace_back(nb[x] - off, nb[y] - off);
          }
        }
      }
      layout.cliques.push_back(conic::build_cliques(Ti, cfg.r, local_nb, must));
      for (const auto& c : layout.cliques.back().cliques) {
        for (std::size_t a = 0; a < c.size(); ++a) {
          for (std::size_t b = a; b < c.size(); ++b) ensure_var(layout, off + c[a], off + c[b]);
        }
      }
    }
  }

  // Gram nuclear term over the stacked per-trajectory windows. Variables are
  // registered here; the sparse map itself is assembled once all variables
  // are known.
  {
    conic::NuclearTerm term;
    term.lambda = 1.0;
    term.map.rows = N * (cfg.r + 1);
    term.map.cols = cfg.r + 1;
    for (int i = 0; i < N; ++i) {
      const int off = layout.offsets[i];
      structmat::gram_map(layout.lengths[i], cfg.r, [&](int, int, int ii, int jj) {
        ensure_var(layout, off + ii, off + jj);
      });
    }
    layout.gram_term = 0;
    prob.nuclear_terms.push_back(std::move(term));
  }

  // Per-point divided-difference regularizers over {j} u N_j, query first.
  std::vector<std::vector<Eigen::Triplet<double>>> loewner_trips;
  for (int j = 0; j < total; ++j) {
    const auto& nb = adj[j];
    if (nb.empty()) continue;
    std::vector<int> members;
    members.push_back(j);
    members.insert(members.end(), nb.begin(), nb.end());
    const int s = static_cast<int>(members.size());
    const int q = structmat::svec_size(s);
    Eigen::VectorXd kx(q);
    std::vector<int> ky_vars(q);
    int slot = 0;
    for (int a = 0; a < s; ++a) {
      for (int b = a; b < s; ++b) {
        kx(slot) = X.col(members[a]).dot(X.col(members[b]));
        ky_vars[slot] = ensure_var(layout, members[a], members[b]);
        ++slot;
      }
    }
    const structmat::LoewnerPlan plan = structmat::plan_loewner(kx);
    if (plan.cols.empty() || plan.p < 1) continue;
    conic::NuclearTerm term;
    term.lambda = cfg.lambda1;
    term.map.rows = plan.p;
    term.map.cols = static_cast<int>(plan.cols.size());
    std::vector<Eigen::Triplet<double>> trip;
    for (int col = 0; col < term.map.cols; ++col) {
      const int den_slot = plan.p + plan.cols[col];
      for (int row = 0; row < plan.p; ++row) {
        const int flat = row + col * plan.p;
        trip.emplace_back(flat, ky_vars[row], plan.inv_den(row, col));
        trip.emplace_back(flat, ky_vars[den_slot], -plan.inv_den(row, col));
      }
    }
    layout.loewner_terms.push_back(static_cast<int>(prob.nuclear_terms.size()));
    prob.nuclear_terms.push_back(std::move(term));
    loewner_trips.push_back(std::move(trip));
  }

  // Anchors and neighbor sandwiches.
  for (int s : anchors) {
    conic::QuadTerm q;
    q.c = {{ensure_var(layout, s, s), 1.0}};
    q.target = X.col(s).squaredNorm();
    q.lambda = cfg.lambda2;
    prob.quad_terms.push_back(std::move(q));
  }
  for (const auto& [s, t] : layout.graph.pairs) {
    const double d2 = (X.col(s) - X.col(t)).squaredNorm();
    const std::vector<std::pair<int, double>> c = {{ensure_var(layout, s, s), 1.0},
                                                   {ensure_var(layout, s, t), -2.0},
                                                   {ensure_var(layout, t, t), 1.0}};
    conic::HingeTerm lower;
    lower.c = c;
    lower.bound = d2 / (M_u_at(s) * M_u_at(s));
    lower.dir = conic::HingeDir::lower;
    lower.lambda = cfg.lambda3;
    prob.hinge_terms.push_back(std::move(lower));
    conic::HingeTerm upper;
    upper.c = c;
    upper.bound = d2 * M_l_at(s) * M_l_at(s);
    upper.dir = conic::HingeDir::upper;
    upper.lambda = cfg.lambda3;
    prob.hinge_terms.push_back(std::move(upper));
  }
  if (layout.graph.pairs.empty() && cfg.lambda3 > 0.0) {
    prob.warnings.push_back("neighbor graph is empty; sandwich constraints are vacuous");
  }

  // PSD blocks: per trajectory when dense, per clique when chordal.
  auto make_block = [&](int off, const std::vector<int>& members) {
    conic::PsdBlock blk;
    blk.dim = static_cast<int>(members.size());
    blk.vars.reserve(members.size() * (members.size() + 1) / 2);
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a; b < members.size(); ++b) {
        blk.vars.push_back(ensure_var(layout, off + members[a], off + members[b]));
      }
    }
    prob.psd_blocks.push_back(std::move(blk));
  };
  if (!cfg.chordal) {
    for (int i = 0; i < N; ++i) {
      std::vector<int> all(layout.lengths[i]);
      std::iota(all.begin(), all.end(), 0);
      make_block(layout.offsets[i], all);
    }
  } else {
    for (int i = 0; i < N; ++i) {
      for (const auto& c : layout.cliques[i].cliques) make_block(layout.offsets[i], c);
    }
  }

  // All variables are known now; finalize the sparse maps.
  prob.num_vars = static_cast<int>(layout.var_pairs.size());
  {
    auto& gram = prob.nuclear_terms[layout.gram_term];
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < N; ++i) {
      const int off = layout.offsets[i];
      structmat::gram_map(layout.lengths[i], cfg.r, [&](int a, int b, int ii, int jj) {
        const int row = i * (cfg.r + 1) + a;
        trip.emplace_back(row + b * gram.map.rows, layout.var(off + ii, off + jj), 1.0);
      });
    }
    gram.map.A.resize(static_cast<Eigen::Index>(gram.map.rows) * gram.map.cols, prob.num_vars);
    gram.map.A.setFromTriplets(trip.begin(), trip.end());
  }
  for (std::size_t t = 0; t < layout.loewner_terms.size(); ++t) {
    auto& term = prob.nuclear_terms[layout.loewner_terms[t]];
    term.map.A.resize(static_cast<Eigen::Index>(term.map.rows) * term.map.cols, prob.num_vars);
    term.map.A.setFromTriplets(loewner_trips[t].begin(), loewner_trips[t].end());
  }

  prob.validate();
  return out;
}

Certificate certificate(const Eigen::MatrixXd& G, int r, double rank_tol) {
  Certificate c;
  c.exact = numeric_rank(G, rank_tol) < r;
  if (!c.exact) {
    const Eigen::VectorXd sv = singular_values(G);
    c.bound = std::sqrt(std::max(0.0, sv(sv.size() - 1)));
  }
  return c;
}

Eigen::MatrixXd extract_embeddings(const Eigen::MatrixXd& K, double energy) {
  if (K.rows() != K.cols()) throw std::invalid_argument("extract_embeddings: square kernel required");
  if (!(energy > 0.0) || energy > 1.0) throw std::invalid_argument("extract_embeddings: energy in (0,1]");
  const Eigen::MatrixXd sym = 0.5 * (K + K.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw std::runtime_error("extract_embeddings: eigensolver failed");
  Eigen::VectorXd lam = eig.eigenvalues();
  const double lmax = lam.maxCoeff();
  if (lam.minCoeff() < -1e-4 * std::max(lmax, 1e-12)) {
    throw std::invalid_argument("extract_embeddings: kernel is not PSD beyond tolerance");
  }
  lam = lam.cwiseMax(0.0);
  const double total = lam.sum();
  if (!(total > 0.0)) throw std::invalid_argument("extract_embeddings: zero kernel");

  const int n = static_cast<int>(lam.size());
  // Eigenvalues come back ascending; walk from the top.
  double captured = 0.0;
  int m = 0;
  for (int i = n - 1; i >= 0; --i) {
    captured += lam(i);
    ++m;
    if (captured >= energy * total) break;
  }
  Eigen::MatrixXd Y(m, K.rows());
  for (int k = 0; k < m; ++k) {
    const int src = n - 1 - k;
    Y.row(k) = std::sqrt(lam(src)) * eig.eigenvectors().col(src).transpose();
  }
  return Y;
}

namespace {

Eigen::VectorXd initial_kernel(const ProblemLayout& layout, const Eigen::MatrixXd& X) {
  Eigen::VectorXd k(layout.var_pairs.size());
  for (std::size_t v = 0; v < layout.var_pairs.size(); ++v) {
    const auto& [i, j] = layout.var_pairs[v];
    k(v) = X.col(i).dot(X.col(j));
  }
  return k;
}

Eigen::MatrixXd kernel_block_dense(const ProblemLayout& layout, const Eigen::VectorXd& k,
                                   int traj) {
  const int off = layout.offsets[traj], Ti = layout.lengths[traj];
  Eigen::MatrixXd K(Ti, Ti);
  for (int a = 0; a < Ti; ++a) {
    for (int b = a; b < Ti; ++b) {
      const double v = k(layout.var(off + a, off + b));
      K(a, b) = v;
      K(b, a) = v;
    }
  }
  return K;
}

Eigen::MatrixXd kernel_block_completed(const ProblemLayout& layout, const Eigen::VectorXd& k,
                                       int traj) {
  const int off = layout.offsets[traj], Ti = layout.lengths[traj];
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(Ti, Ti);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> known(Ti, Ti);
  known.setConstant(false);
  for (int a = 0; a < Ti; ++a) {
    for (int b = a; b < Ti; ++b) {
      if (layout.has_var(off + a, off + b)) {
        const double v = k(layout.var(off + a, off + b));
        K(a, b) = v;
        K(b, a) = v;
        known(a, b) = true;
        known(b, a) = true;
      }
    }
  }
  return conic::complete_path(K, known, layout.cliques[traj], /*strict=*/false).K;
}

}  // namespace

EmbeddingResult run_identification(const std::vector<dynamics::Trajectory>& trajs,
                                   const IdentificationConfig& cfg) {
  cfg.validate();
  if (trajs.empty()) throw std::invalid_argument("run_identification: no trajectories");

  // Work in unit-scaled coordinates; the anchor constraint is scale
  // equivariant, so results are mapped back at the end.
  double max_norm = 0.0;
  for (const auto& t : trajs) max_norm = std::max(max_norm, t.samples.colwise().norm().maxCoeff());
  const double scale = max_norm > 0.0 ? 1.0 / max_norm : 1.0;

  std::vector<dynamics::Trajectory> scaled = trajs;
  for (auto& t : scaled) t.samples *= scale;
  IdentificationConfig cfg_s = cfg;
  if (cfg.delta > 0.0) cfg_s.delta = cfg.delta * scale;

  AssembledProblem asmb = assemble_problem(scaled, cfg_s);
  conic::ConicProblem& prob = asmb.problem;
  const ProblemLayout& layout = asmb.layout;

  const Eigen::MatrixXd Xs = dynamics::concat_points(scaled);
  Eigen::VectorXd k = initial_kernel(layout, Xs);

  // Calibrate nuclear coefficients and shift against the initial spectra.
  for (auto& term : prob.nuclear_terms) {
    const Eigen::VectorXd sv = singular_values(term.map.apply(k));
    const double s1 = sv.size() ? sv(0) : 0.0;
    term.lambda *= cfg.nuclear_scale / std::max(s1, 1e-12);
    term.sigma_shift = cfg.sigma_shift > 0.0 ? cfg.sigma_shift : std::max(1e-3 * s1, 1e-12);
  }

  EmbeddingResult result;
  result.r = cfg.r;
  result.delta = layout.delta / scale;

  conic::SolverState warm;
  const auto& gram_map_term = prob.nuclear_terms[layout.gram_term];
  for (int outer = 0; outer < cfg.max_reweight; ++outer) {
    auto [k_next, report] = conic::solve_inner(prob, cfg.solver, &k, &warm);
    k = std::move(k_next);
    result.reports.push_back(std::move(report));
    if (result.reports.back().status == conic::SolveStatus::infeasible_suspect) {
      throw std::runtime_error("run_identification: inner solver flagged the program infeasible");
    }
    const Eigen::MatrixXd G = gram_map_term.map.apply(k);
    const int rk = numeric_rank(G, cfg.rank_tol);
    result.rank_trace.push_back(rk);
    if (rk < cfg.r) break;
    for (auto& term : prob.nuclear_terms) {
      const Eigen::VectorXd sv = singular_values(term.map.apply(k));
      term.prev_sv.assign(sv.data(), sv.data() + sv.size());
    }
  }

  // Back to original units.
  k /= scale * scale;

  const int N = static_cast<int>(trajs.size());
  result.kernels.resize(N);
  for (int i = 0; i < N; ++i) {
    result.kernels[i] = cfg.chordal ? kernel_block_completed(layout, k, i)
                                    : kernel_block_dense(layout, k, i);
  }
  std::vector<Eigen::MatrixXd> raw(N);
  int m = 0;
  for (int i = 0; i < N; ++i) {
    raw[i] = extract_embeddings(result.kernels[i], cfg.energy);
    m = std::max(m, static_cast<int>(raw[i].rows()));
  }
  result.embed_dim = m;
  result.embeddings.resize(N);
  for (int i = 0; i < N; ++i) {
    result.embeddings[i] = Eigen::MatrixXd::Zero(m, trajs[i].length());
    result.embeddings[i].topRows(raw[i].rows()) = raw[i];
  }

  result.gram = gram_map_term.map.apply(k);
  result.achieved_rank = numeric_rank(result.gram, cfg.rank_tol);
  result.cert = certificate(result.gram, cfg.r, cfg.rank_tol);

  const int order = std::max(1, std::min(result.achieved_rank, cfg.r));
  Eigen::MatrixXd G_model(N * (order + 1), order + 1);
  for (int i = 0; i < N; ++i) {
    G_model.middleRows(i * (order + 1), order + 1) =
        structmat::gram_from_kernel(result.kernels[i], order);
  }
  result.model_coeffs = structmat::nullspace_coeffs(G_model);
  return result;
}

void save_result(const std::filesystem::path& dir, const EmbeddingResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  textio::KeyValueFile manifest;
  manifest.set("model.r", std::to_string(result.r));
  manifest.set("model.r_star", std::to_string(result.achieved_rank));
  manifest.set("model.m", std::to_string(result.embed_dim));
  manifest.set("model.certificate", result.cert.exact ? "exact" : "approximate");
  manifest.set_double("model.bound", result.cert.bound);
  manifest.set_double("model.delta", result.delta);
  manifest.set("model.trajectories", std::to_string(result.kernels.size()));
  manifest.write(dir / "manifest.txt");
  for (std::size_t i = 0; i < result.kernels.size(); ++i) {
    textio::write_matrix(dir / ("kernel_" + std::to_string(i) + ".txt"), result.kernels[i]);
    textio::write_matrix(dir / ("Y_" + std::to_string(i) + ".txt"), result.embeddings[i]);
  }
  textio::write_matrix(dir / "gram.txt", result.gram);
  textio::write_vector(dir / "p.txt", result.model_coeffs);
}

EmbeddingResult load_result(const std::filesystem::path& dir) {
  EmbeddingResult result;
  const auto manifest = textio::KeyValueFile::parse(dir / "manifest.txt");
  result.r = manifest.get_int("model.r", 0);
  result.achieved_rank = manifest.get_int("model.r_star", 0);
  result.embed_dim = manifest.get_int("model.m", 0);
  result.cert.exact = manifest.get_string("model.certificate") == "exact";
  result.cert.bound = manifest.get_double("model.bound", 0.0);
  result.delta = manifest.get_double("model.delta", 0.0);
  const int N = manifest.get_int("model.trajectories", 0);
  for (int i = 0; i < N; ++i) {
    result.kernels.push_back(textio::read_matrix(dir / ("kernel_" + std::to_string(i) + ".txt")));
    result.embeddings.push_back(textio::read_matrix(dir / ("Y_" + std::to_string(i) + ".txt")));
  }
  result.gram = textio::read_matrix(dir / "gram.txt");
  result.model_coeffs = textio::read_vector(dir / "p.txt");
  return result;
}

}  // namespace koop::embed
