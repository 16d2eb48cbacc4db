#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "koop/decode.hpp"
#include "koop/dynamics.hpp"
#include "koop/embed.hpp"

namespace koop::cli {

struct ExperimentConfig {
  std::string name = "custom";
  dynamics::SystemKind system = dynamics::SystemKind::predator_prey;
  std::map<std::string, double> system_params;
  Eigen::VectorXd x0;
  double dt = 0.1;
  int substeps = 10;
  int train_points = 120;
  int horizon = 80;
  std::string eval_mode = "one_step";  // or "rollout"
  bool per_component = false;
  std::uint64_t seed = 0;
  embed::IdentificationConfig identify;
  decode::DecodeConfig decode;
  double decode_delta = 0.0;  // <= 0: reuse the identification radius
};

struct StageTime {
  std::string stage;
  double seconds = 0.0;
};

struct EvalReport {
  std::string experiment;
  double rmse_rel = 0.0;
  std::vector<double> per_step_rel_err;
  int r_star = 0;
  int model_order = 0;
  int m = 0;
  std::string certificate;  // always populated: "exact" or "approximate"
  double bound = 0.0;
  double roundtrip_median = 0.0;
  bool rollout_bounded = true;
  std::vector<StageTime> times;
  std::string failed_stage;  // empty on success
};

/// Ready-made setups for the four bundled systems (lorenz, duffing,
/// predator_prey, quintic); initial conditions and sampling periods not fixed
/// by the bundled data are documented defaults.
ExperimentConfig builtin_experiment(const std::string& id);

/// Parses a `key = value` config with [experiment], [simulate], [identify],
/// [decode] and [eval] sections; unspecified keys keep the builtin defaults
/// of the named example (key experiment.example) or the custom defaults.
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// simulate -> identify -> extract -> predict -> report. Artifacts are
/// written under out_dir: trajectory.txt, embedding/, model.txt,
/// predictions.csv, report.txt and SVG plots. Stage failures are recorded in
/// the report with the stage name.
EvalReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

void write_report(const std::filesystem::path& path, const EvalReport& report);

}  // namespace koop::cli
