#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace koop::dynamics {

/// One uniformly sampled state sequence. Columns of `samples` are x_1..x_T.
struct Trajectory {
  int id = 0;
  double dt = 0.0;
  Eigen::MatrixXd samples;  // n x T

  int dim() const { return static_cast<int>(samples.rows()); }
  int length() const { return static_cast<int>(samples.cols()); }

  /// Throws std::invalid_argument unless T >= 2, dt > 0 and all entries are finite.
  void validate() const;
};

enum class SystemKind { lorenz, duffing, predator_prey, quintic_chaos, custom };

std::string to_string(SystemKind kind);
SystemKind system_kind_from_string(const std::string& name);

/// Continuous-time vector field dx/dt = f(x).
struct OdeSystem {
  SystemKind kind = SystemKind::custom;
  std::map<std::string, double> params;
  // Only consulted for kind == custom.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> field;
  int custom_dim = 0;

  int dim() const;
  Eigen::VectorXd rhs(const Eigen::VectorXd& x) const;

  static OdeSystem make(SystemKind kind, std::map<std::string, double> params = {});
  static OdeSystem custom(int dim, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f);
};

/// Pairs (s, t), s < t, of global point indices with ||x_s - x_t||_2 <= delta.
struct NeighborGraph {
  double delta = 0.0;
  std::vector<std::pair<int, int>> pairs;

  std::vector<int> neighbors_of(int s) const;
};

/// One classical 4th-order Runge-Kutta step x(t) -> x(t + dt).
Eigen::VectorXd rk4_step(const OdeSystem& sys, const Eigen::VectorXd& x, double dt);

/// Integrates `steps` samples past x0 on the dt grid, `substeps` RK4 stages per sample.
/// Result has steps + 1 columns. Throws std::runtime_error on blow-up, naming the step.
Trajectory simulate(const OdeSystem& sys, const Eigen::VectorXd& x0, double dt, int steps,
                    int substeps = 10);

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory(const std::filesystem::path& path);

/// All pairs within delta (boundary inclusive) over the concatenated point set.
NeighborGraph neighbor_graph(const std::vector<Trajectory>& trajs, double delta);

/// 10th percentile of the pairwise distance distribution, enlarged until every
/// point has at least three neighbors.
double default_delta(const std::vector<Trajectory>& trajs);

/// Concatenates all trajectory samples into one n x (sum T_i) matrix.
Eigen::MatrixXd concat_points(const std::vector<Trajectory>& trajs);

}  // namespace koop::dynamics
