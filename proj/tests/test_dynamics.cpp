#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "koop/dynamics.hpp"
#include "oracles.hpp"

using namespace koop::dynamics;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("rk4 keeps the harmonic block of the quintic system on the unit circle") {
  auto sys = OdeSystem::make(SystemKind::quintic_chaos);
  Eigen::VectorXd x(4);
  x << 0.0, 0.0, 1.0, 0.0;
  x = rk4_step(sys, x, 0.01);
  CHECK(std::abs(x(2) * x(2) + x(3) * x(3) - 1.0) < 1e-9);
}

TEST_CASE("rk4 lorenz step matches an adaptive reference integrator") {
  auto sys = OdeSystem::make(SystemKind::lorenz);
  Eigen::VectorXd x0(3);
  x0 << -10.38, -4.5366, 35.1640;
  const double dt = 0.0271;
  // Ten internal stages, as the simulator uses.
  Eigen::VectorXd x = x0;
  for (int s = 0; s < 10; ++s) x = rk4_step(sys, x, dt / 10.0);
  const Eigen::VectorXd ref = oracles::integrate_adaptive(
      [&](const Eigen::VectorXd& v) { return sys.rhs(v); }, x0, dt, 1e-13);
  CHECK((x - ref).norm() <= 1e-6);
}

TEST_CASE("rk4 tends to the identity as dt shrinks") {
  auto sys = OdeSystem::make(SystemKind::predator_prey);
  Eigen::VectorXd x(2);
  x << 0.7, 1.3;
  const Eigen::VectorXd out = rk4_step(sys, x, 1e-12);
  CHECK((out - x).norm() < 1e-10);
}

TEST_CASE("rk4 rejects dimension mismatches") {
  auto sys = OdeSystem::make(SystemKind::lorenz);
  CHECK_THROWS_AS(rk4_step(sys, Eigen::VectorXd::Zero(2), 0.1), std::invalid_argument);
}

TEST_CASE("simulate produces the requested sample count") {
  auto sys = OdeSystem::make(SystemKind::lorenz);
  Eigen::VectorXd x0(3);
  x0 << -10.38, -4.5366, 35.1640;
  const Trajectory traj = simulate(sys, x0, 0.0271, 399);
  CHECK(traj.length() == 400);
  CHECK(traj.dim() == 3);
  CHECK(traj.samples.allFinite());
}

TEST_CASE("close quintic initial conditions diverge") {
  auto sys = OdeSystem::make(SystemKind::quintic_chaos);
  Eigen::VectorXd a(4), b(4);
  a << 2.0, 3.0, 0.0, 6.0;
  b << 2.1, 3.0, 0.0, 6.0;
  const Trajectory ta = simulate(sys, a, 0.05, 400);
  const Trajectory tb = simulate(sys, b, 0.05, 400);
  const double d0 = (ta.samples.col(0) - tb.samples.col(0)).norm();
  double dmax = 0.0;
  for (int k = 0; k < ta.length(); ++k) {
    dmax = std::max(dmax, (ta.samples.col(k) - tb.samples.col(k)).norm());
  }
  CHECK(dmax > 10.0 * d0);
}

TEST_CASE("predator-prey equilibrium stays put") {
  auto sys = OdeSystem::make(SystemKind::predator_prey);
  Eigen::VectorXd x0(2);
  x0 << 1.0, 1.0;
  const Trajectory traj = simulate(sys, x0, 0.1, 50);
  for (int k = 0; k < traj.length(); ++k) {
    CHECK((traj.samples.col(k) - x0).norm() < 1e-12);
  }
}

TEST_CASE("harmonic block drift stays small over 100 steps") {
  for (auto kind : {SystemKind::duffing, SystemKind::quintic_chaos}) {
    auto sys = OdeSystem::make(kind);
    Eigen::VectorXd x0(4);
    x0 << 0.5, -0.2, 1.0, 0.0;
    const Trajectory traj = simulate(sys, x0, 0.01, 100);
    for (int k = 0; k < traj.length(); ++k) {
      const double h = traj.samples(2, k) * traj.samples(2, k) +
                       traj.samples(3, k) * traj.samples(3, k);
      CHECK(std::abs(h - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("simulate continuation reproduces the tail bitwise") {
  auto sys = OdeSystem::make(SystemKind::lorenz);
  Eigen::VectorXd x0(3);
  x0 << 1.0, 1.0, 1.0;
  const Trajectory whole = simulate(sys, x0, 0.02, 30);
  const Trajectory head = simulate(sys, x0, 0.02, 12);
  const Trajectory tail = simulate(sys, head.samples.col(12), 0.02, 18);
  for (int k = 0; k <= 18; ++k) {
    CHECK(tail.samples.col(k) == whole.samples.col(12 + k));
  }
}

TEST_CASE("trajectory io round-trips bitwise") {
  auto sys = OdeSystem::make(SystemKind::lorenz);
  Eigen::VectorXd x0(3);
  x0 << -10.38, -4.5366, 35.1640;
  const Trajectory traj = simulate(sys, x0, 0.0271, 399);
  const auto path = temp_file("koop_traj_roundtrip.txt");
  write_trajectory(path, traj);
  const Trajectory back = read_trajectory(path);
  CHECK(back.dim() == 3);
  CHECK(back.length() == 400);
  CHECK(back.dt == traj.dt);
  CHECK(back.samples == traj.samples);
  fs::remove(path);
}

TEST_CASE("reader rejects ragged rows with the row number") {
  const auto path = temp_file("koop_traj_ragged.txt");
  std::ofstream(path) << "3 0.1\n1 2 3\n4 5\n7 8 9\n";
  CHECK_THROWS_WITH_AS(read_trajectory(path), doctest::Contains("row 2"), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("reader rejects non-numeric fields and empty files") {
  const auto path = temp_file("koop_traj_bad.txt");
  std::ofstream(path) << "2 0.1\n1 foo\n";
  CHECK_THROWS_AS(read_trajectory(path), std::runtime_error);
  std::ofstream(path, std::ios::trunc).close();
  CHECK_THROWS_AS(read_trajectory(path), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("neighbor graph boundary semantics") {
  Trajectory t;
  t.dt = 1.0;
  t.samples.resize(1, 2);
  t.samples << 0.0, 1.0;
  CHECK(neighbor_graph({t}, 0.5).pairs.empty());
  const auto g = neighbor_graph({t}, 1.0);
  REQUIRE(g.pairs.size() == 1);
  CHECK(g.pairs[0] == std::pair<int, int>(0, 1));
}

TEST_CASE("neighbor graph matches the exhaustive scan on lorenz samples") {
  auto sys = OdeSystem::make(SystemKind::lorenz);
  Eigen::VectorXd x0(3);
  x0 << -10.38, -4.5366, 35.1640;
  const Trajectory traj = simulate(sys, x0, 0.0271, 99);
  // 10th percentile of pairwise distances.
  std::vector<double> d;
  for (int s = 0; s < traj.length(); ++s) {
    for (int t = s + 1; t < traj.length(); ++t) {
      d.push_back((traj.samples.col(s) - traj.samples.col(t)).norm());
    }
  }
  std::sort(d.begin(), d.end());
  const double delta = d[d.size() / 10];
  const auto g = neighbor_graph({traj}, delta);
  const auto expect = oracles::brute_force_pairs(traj.samples, delta);
  CHECK(g.pairs == expect);
}

TEST_CASE("default delta leaves no point with fewer than three neighbors") {
  auto sys = OdeSystem::make(SystemKind::predator_prey);
  Eigen::VectorXd x0(2);
  x0 << 0.8, 0.8;
  const Trajectory traj = simulate(sys, x0, 0.2, 60);
  const double delta = default_delta({traj});
  const auto g = neighbor_graph({traj}, delta);
  std::vector<int> count(traj.length(), 0);
  for (const auto& [s, t] : g.pairs) {
    ++count[s];
    ++count[t];
  }
  for (int c : count) CHECK(c >= 3);
}

TEST_CASE("simulate reports blow-up with the step index") {
  // dx/dt = x^3 from x = 3 blows up quickly at a coarse step.
  auto sys = OdeSystem::custom(1, [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(x.array().pow(3).matrix());
  });
  Eigen::VectorXd x0(1);
  x0 << 3.0;
  CHECK_THROWS_WITH_AS(simulate(sys, x0, 1.0, 50, 1), doctest::Contains("step"),
                       std::runtime_error);
}
