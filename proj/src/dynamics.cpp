#include "koop/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace koop::dynamics {

namespace {

double get_param(const std::map<std::string, double>& params, const std::string& key) {
  auto it = params.find(key);
  if (it == params.end()) {
    throw std::invalid_argument("missing system parameter '" + key + "'");
  }
  return it->second;
}

}  // namespace

void Trajectory::validate() const {
  if (length() < 2) {
    throw std::invalid_argument("trajectory needs at least two samples");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument("trajectory sampling period must be positive");
  }
  if (!samples.allFinite()) {
    throw std::invalid_argument("trajectory contains non-finite samples");
  }
}

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::lorenz: return "lorenz";
    case SystemKind::duffing: return "duffing";
    case SystemKind::predator_prey: return "predator_prey";
    case SystemKind::quintic_chaos: return "quintic_chaos";
    case SystemKind::custom: return "custom";
  }
  return "custom";
}

SystemKind system_kind_from_string(const std::string& name) {
  if (name == "lorenz") return SystemKind::lorenz;
  if (name == "duffing") return SystemKind::duffing;
  if (name == "predator_prey") return SystemKind::predator_prey;
  if (name == "quintic_chaos" || name == "quintic") return SystemKind::quintic_chaos;
  if (name == "custom") return SystemKind::custom;
  throw std::invalid_argument("unknown system kind '" + name + "'");
}

int OdeSystem::dim() const {
  switch (kind) {
    case SystemKind::lorenz: return 3;
    case SystemKind::duffing: return 4;
    case SystemKind::predator_prey: return 2;
    case SystemKind::quintic_chaos: return 4;
    case SystemKind::custom: return custom_dim;
  }
  return custom_dim;
}

Eigen::VectorXd OdeSystem::rhs(const Eigen::VectorXd& x) const {
  if (x.size() != dim()) {
    throw std::invalid_argument("state dimension does not match system");
  }
  Eigen::VectorXd dx(x.size());
  switch (kind) {
    case SystemKind::lorenz: {
      const double sigma = get_param(params, "sigma");
      const double rho = get_param(params, "rho");
      const double beta = get_param(params, "beta");
      dx(0) = sigma * (x(1) - x(0));
      dx(1) = x(0) * (rho - x(2)) - x(1);
      dx(2) = x(0) * x(1) - beta * x(2);
      break;
    }
    case SystemKind::duffing: {
      dx(0) = x(1);
      dx(1) = -0.5 * x(1) - x(0) - x(0) * x(0) * x(0) + 0.42 * x(2);
      dx(2) = x(3);
      dx(3) = -x(2);
      break;
    }
    case SystemKind::predator_prey: {
      dx(0) = -x(0) + x(0) * x(1);
      dx(1) = x(1) - x(0) * x(1);
      break;
    }
    case SystemKind::quintic_chaos: {
      const double x1 = x(0);
      dx(0) = x(1);
      dx(1) = -x1 * x1 * x1 * x1 * x1 - 0.1 * x(1) + x(2);
      dx(2) = x(3);
      dx(3) = -x(2);
      break;
    }
    case SystemKind::custom: {
      if (!field) throw std::invalid_argument("custom system without a vector field");
      dx = field(x);
      break;
    }
  }
  return dx;
}

OdeSystem OdeSystem::make(SystemKind kind, std::map<std::string, double> params) {
  OdeSystem sys;
  sys.kind = kind;
  sys.params = std::move(params);
  if (kind == SystemKind::lorenz) {
    sys.params.try_emplace("sigma", 28.0);
    sys.params.try_emplace("rho", 10.0);
    sys.params.try_emplace("beta", 8.0 / 3.0);
  }
  return sys;
}

OdeSystem OdeSystem::custom(int dim, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f) {
  OdeSystem sys;
  sys.kind = SystemKind::custom;
  sys.custom_dim = dim;
  sys.field = std::move(f);
  return sys;
}

std::vector<int> NeighborGraph::neighbors_of(int s) const {
  std::vector<int> out;
  for (const auto& [a, b] : pairs) {
    if (a == s) out.push_back(b);
    if (b == s) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::VectorXd rk4_step(const OdeSystem& sys, const Eigen::VectorXd& x, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("rk4_step requires dt > 0");
  const Eigen::VectorXd k1 = sys.rhs(x);
  const Eigen::VectorXd k2 = sys.rhs(x + 0.5 * dt * k1);
  const Eigen::VectorXd k3 = sys.rhs(x + 0.5 * dt * k2);
  const Eigen::VectorXd k4 = sys.rhs(x + dt * k3);
  Eigen::VectorXd out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) {
    throw std::runtime_error("rk4_step produced a non-finite state (blow-up at this dt)");
  }
  return out;
}

Trajectory simulate(const OdeSystem& sys, const Eigen::VectorXd& x0, double dt, int steps,
                    int substeps) {
  if (steps < 1) throw std::invalid_argument("simulate requires steps >= 1");
  if (substeps < 1) throw std::invalid_argument("simulate requires substeps >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("simulate requires dt > 0");

  Trajectory traj;
  traj.dt = dt;
  traj.samples.resize(x0.size(), steps + 1);
  traj.samples.col(0) = x0;
  const double h = dt / substeps;
  Eigen::VectorXd x = x0;
  for (int k = 0; k < steps; ++k) {
    for (int s = 0; s < substeps; ++s) {
      try {
        x = rk4_step(sys, x, h);
      } catch (const std::runtime_error&) {
        throw std::runtime_error("simulate blew up at step " + std::to_string(k + 1));
      }
    }
    traj.samples.col(k + 1) = x;
  }
  return traj;
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  traj.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", traj.dt);
  out << traj.dim() << ' ' << buf << '\n';
  for (int k = 0; k < traj.length(); ++k) {
    for (int i = 0; i < traj.dim(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", traj.samples(i, k));
      out << (i ? " " : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

namespace {

double parse_double(const std::string& tok, int row) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("non-numeric field '" + tok + "' at row " + std::to_string(row));
  }
  if (pos != tok.size()) {
    throw std::runtime_error("non-numeric field '" + tok + "' at row " + std::to_string(row));
  }
  return v;
}

}  // namespace

Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trajectory file: " + path.string());

  std::istringstream header(line);
  int n = 0;
  std::string dt_tok, extra;
  if (!(header >> n >> dt_tok) || (header >> extra)) {
    throw std::runtime_error("malformed header (expected 'n dt'): " + path.string());
  }
  if (n < 1) throw std::runtime_error("header dimension must be >= 1");
  const double dt = parse_double(dt_tok, 0);

  std::vector<Eigen::VectorXd> rows;
  int row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    if (toks.empty()) continue;  // ignore blank lines
    if (static_cast<int>(toks.size()) != n) {
      throw std::runtime_error("row " + std::to_string(row_no) + " has " +
                               std::to_string(toks.size()) + " columns, expected " +
                               std::to_string(n));
    }
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = parse_double(toks[i], row_no);
    rows.push_back(std::move(x));
  }
  if (rows.empty()) throw std::runtime_error("trajectory file has no samples: " + path.string());

  Trajectory traj;
  traj.dt = dt;
  traj.samples.resize(n, static_cast<int>(rows.size()));
  for (int k = 0; k < static_cast<int>(rows.size()); ++k) traj.samples.col(k) = rows[k];
  traj.validate();
  return traj;
}

Eigen::MatrixXd concat_points(const std::vector<Trajectory>& trajs) {
  if (trajs.empty()) throw std::invalid_argument("no trajectories");
  const int n = trajs.front().dim();
  int total = 0;
  for (const auto& t : trajs) {
    if (t.dim() != n) throw std::invalid_argument("trajectories have mixed dimension");
    total += t.length();
  }
  Eigen::MatrixXd X(n, total);
  int off = 0;
  for (const auto& t : trajs) {
    X.middleCols(off, t.length()) = t.samples;
    off += t.length();
  }
  return X;
}

NeighborGraph neighbor_graph(const std::vector<Trajectory>& trajs, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("neighbor_graph requires delta > 0");
  const Eigen::MatrixXd X = concat_points(trajs);
  const int T = static_cast<int>(X.cols());
  NeighborGraph g;
  g.delta = delta;
  for (int s = 0; s < T; ++s) {
    for (int t = s + 1; t < T; ++t) {
      if ((X.col(s) - X.col(t)).norm() <= delta) g.pairs.emplace_back(s, t);
    }
  }
  return g;
}

double default_delta(const std::vector<Trajectory>& trajs) {
  const Eigen::MatrixXd X = concat_points(trajs);
  const int T = static_cast<int>(X.cols());
  if (T < 4) throw std::invalid_argument("default_delta needs at least four points");
  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(T) * (T - 1) / 2);
  std::vector<double> third_nn(T, 0.0);
  std::vector<double> ds;
  for (int s = 0; s < T; ++s) {
    ds.clear();
    for (int t = 0; t < T; ++t) {
      if (t == s) continue;
      ds.push_back((X.col(s) - X.col(t)).norm());
      if (t > s) all.push_back(ds.back());
    }
    std::nth_element(ds.begin(), ds.begin() + 2, ds.end());
    third_nn[s] = ds[2];
  }
  const auto pos = static_cast<std::ptrdiff_t>(0.10 * (all.size() - 1));
  std::nth_element(all.begin(), all.begin() + pos, all.end());
  const double p10 = all[pos];
  const double clip = *std::max_element(third_nn.begin(), third_nn.end());
  return std::max(p10, clip);
}

}  // namespace koop::dynamics
