#include <CLI11.hpp>

#include <Eigen/Dense>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "koop/decode.hpp"
#include "koop/dynamics.hpp"
#include "koop/embed.hpp"
#include "koop/experiment.hpp"
#include "koop/koopman.hpp"
#include "koop/textio.hpp"

namespace fs = std::filesystem;
using namespace koop;

namespace {

struct CommonArgs {
  std::string config;
  std::string out = "out";
  bool chordal = false;
  std::uint64_t seed = 0;
};

cli::ExperimentConfig load_config(const CommonArgs& args) {
  cli::ExperimentConfig cfg = cli::load_experiment(args.config);
  if (args.chordal) cfg.identify.chordal = true;
  if (args.seed) cfg.seed = args.seed;
  return cfg;
}

dynamics::Trajectory training_slice(const dynamics::Trajectory& traj, int train_points) {
  dynamics::Trajectory t = traj;
  t.samples = traj.samples.leftCols(std::min<int>(train_points, traj.length()));
  return t;
}

int run_simulate(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto sys = dynamics::OdeSystem::make(cfg.system, cfg.system_params);
  const int steps = cfg.train_points + cfg.horizon + cfg.identify.r + 1;
  const auto traj = dynamics::simulate(sys, cfg.x0, cfg.dt, steps, cfg.substeps);
  fs::create_directories(args.out);
  dynamics::write_trajectory(fs::path(args.out) / "trajectory.txt", traj);
  std::cout << "wrote " << traj.length() << " samples to " << args.out << "/trajectory.txt\n";
  return 0;
}

int run_embed(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto traj = dynamics::read_trajectory(fs::path(args.out) / "trajectory.txt");
  const auto result =
      embed::run_identification({training_slice(traj, cfg.train_points)}, cfg.identify);
  embed::save_result(fs::path(args.out) / "embedding", result);
  std::cout << "r_star = " << result.achieved_rank << ", m = " << result.embed_dim
            << ", certificate = " << (result.cert.exact ? "exact" : "approximate") << "\n";
  return 0;
}

int run_extract(const CommonArgs& args) {
  (void)load_config(args);
  const auto result = embed::load_result(fs::path(args.out) / "embedding");
  const auto model = koopman::extract_model(result.model_coeffs, result.embed_dim);
  koopman::save_model(fs::path(args.out) / "model.txt", model);
  std::cout << "model order " << model.r_star << ", " << model.roots.size() << " roots\n";
  return 0;
}

int run_predict(const CommonArgs& args) {
  auto cfg = load_config(args);
  cfg.identify.solver.record_objective = false;
  const auto report = cli::run_experiment(cfg, args.out);
  if (!report.failed_stage.empty()) {
    std::cerr << "stage '" << report.failed_stage << "' failed; see " << args.out
              << "/error.txt\n";
    return 1;
  }
  std::cout << "relative RMSE " << report.rmse_rel << " over " << cfg.horizon << " steps\n";
  return 0;
}

int run_decode(const CommonArgs& args, const std::string& query) {
  const auto cfg = load_config(args);
  const auto traj = dynamics::read_trajectory(fs::path(args.out) / "trajectory.txt");
  const auto result = embed::load_result(fs::path(args.out) / "embedding");
  decode::Dataset data;
  data.X = training_slice(traj, cfg.train_points).samples;
  data.Y = result.embeddings.at(0);
  decode::DecodeConfig dcfg = cfg.decode;
  dcfg.delta = cfg.decode_delta > 0.0 ? cfg.decode_delta : result.delta;

  Eigen::VectorXd y_star = textio::read_vector(query);
  const auto [x_star, diag] = decode::decode_point(y_star, data, dcfg);
  textio::write_vector(fs::path(args.out) / "decoded.txt", x_star);
  std::cout << "decoded through " << diag.neighborhood << " neighbors; divided-difference rank "
            << diag.loewner_rank << (diag.exact ? " (certified)" : " (approximate)") << "\n";
  return 0;
}

int run_eval(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto report = cli::run_experiment(cfg, args.out);
  if (!report.failed_stage.empty()) {
    std::cerr << "stage '" << report.failed_stage << "' failed; see " << args.out
              << "/error.txt\n";
    return 1;
  }
  std::cout << "experiment " << report.experiment << ": rmse_rel = " << report.rmse_rel
            << ", r_star = " << report.r_star << ", m = " << report.m << ", certificate = "
            << report.certificate << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman operator learning from trajectory data"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string decode_query;

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* opt = sub->add_option("--config", args.config, "experiment config file");
    if (needs_config) opt->required();
    sub->add_option("--out", args.out, "output directory");
    sub->add_flag("--chordal", args.chordal, "use the clique-decomposed kernel cones");
    sub->add_option("--seed", args.seed, "random seed recorded with the run");
  };

  add_common(app.add_subcommand("simulate", "integrate the configured system"));
  add_common(app.add_subcommand("embed", "identify embeddings from trajectory.txt"));
  add_common(app.add_subcommand("extract", "extract the recursion model from the embedding"));
  add_common(app.add_subcommand("predict", "run the prediction pipeline and emit artifacts"));
  auto* dec = app.add_subcommand("decode", "map one observable-space point back to state space");
  add_common(dec);
  dec->add_option("--query", decode_query, "file with the query vector")->required();
  add_common(app.add_subcommand("eval", "full experiment: simulate, identify, predict, report"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("simulate")) return run_simulate(args);
    if (app.got_subcommand("embed")) return run_embed(args);
    if (app.got_subcommand("extract")) return run_extract(args);
    if (app.got_subcommand("predict")) return run_predict(args);
    if (app.got_subcommand("decode")) return run_decode(args, decode_query);
    if (app.got_subcommand("eval")) return run_eval(args);
  } catch (const std::invalid_argument& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
