#include "koop/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

#include "koop/structmat.hpp"
#include "koop/svgplot.hpp"
#include "koop/textio.hpp"

namespace koop::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out(i) = v[i];
  return out;
}

}  // namespace

ExperimentConfig builtin_experiment(const std::string& id) {
  ExperimentConfig cfg;
  cfg.name = id;
  if (id == "lorenz") {
    cfg.system = dynamics::SystemKind::lorenz;
    cfg.x0 = to_vector({-10.38, -4.5366, 35.1640});
    cfg.dt = 0.0271;
    cfg.train_points = 400;
    cfg.horizon = 50;
    cfg.eval_mode = "one_step";
    cfg.identify.r = 14;
    cfg.identify.solver.max_iters = 1200;
    cfg.identify.solver.tol_primal = 3e-8;
    cfg.identify.max_reweight = 6;
  } else if (id == "duffing") {
    cfg.system = dynamics::SystemKind::duffing;
    cfg.x0 = to_vector({1.0, 0.0, 1.0, 0.0});
    cfg.dt = 0.1;
    cfg.train_points = 150;
    cfg.horizon = 50;
    cfg.eval_mode = "one_step";
    cfg.identify.r = 8;
    cfg.identify.solver.max_iters = 1500;
    cfg.identify.solver.tol_primal = 1e-8;
  } else if (id == "predator_prey") {
    cfg.system = dynamics::SystemKind::predator_prey;
    cfg.x0 = to_vector({0.8, 0.8});
    cfg.dt = 0.2;
    cfg.train_points = 120;
    cfg.horizon = 80;
    cfg.eval_mode = "rollout";
    cfg.identify.r = 8;
    cfg.identify.rank_tol = 1e-8;
    cfg.identify.solver.max_iters = 1800;
    cfg.identify.solver.tol_primal = 1e-9;
  } else if (id == "quintic" || id == "quintic_chaos") {
    cfg.system = dynamics::SystemKind::quintic_chaos;
    cfg.x0 = to_vector({2.0, 3.0, 0.0, 6.0});
    cfg.dt = 0.05;
    cfg.train_points = 100;
    cfg.horizon = 100;
    cfg.eval_mode = "one_step";
    cfg.identify.r = 8;
    cfg.identify.solver.max_iters = 1500;
    cfg.identify.solver.tol_primal = 1e-8;
  } else if (id == "custom") {
    // caller fills everything in
  } else {
    throw std::invalid_argument("unknown experiment id '" + id + "'");
  }
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  const auto kv = textio::KeyValueFile::parse(path);
  ExperimentConfig cfg = builtin_experiment(kv.get_string("experiment.example", "custom"));
  cfg.name = kv.get_string("experiment.name", cfg.name);
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("experiment.seed", static_cast<int>(cfg.seed)));

  if (kv.has("simulate.system")) {
    cfg.system = dynamics::system_kind_from_string(kv.get_string("simulate.system"));
  }
  if (kv.has("simulate.x0")) cfg.x0 = to_vector(kv.get_doubles("simulate.x0"));
  cfg.dt = kv.get_double("simulate.dt", cfg.dt);
  cfg.substeps = kv.get_int("simulate.substeps", cfg.substeps);
  for (const auto& [key, value] : kv.entries()) {
    constexpr const char prefix[] = "simulate.param_";
    if (key.rfind(prefix, 0) == 0) {
      cfg.system_params[key.substr(sizeof(prefix) - 1)] = std::stod(value);
    }
  }

  auto& idc = cfg.identify;
  idc.r = kv.get_int("identify.r", idc.r);
  idc.delta = kv.get_double("identify.delta", idc.delta);
  idc.M_u = kv.get_double("identify.M_u", idc.M_u);
  idc.M_l = kv.get_double("identify.M_l", idc.M_l);
  idc.lambda1 = kv.get_double("identify.lambda1", idc.lambda1);
  idc.lambda2 = kv.get_double("identify.lambda2", idc.lambda2);
  idc.lambda3 = kv.get_double("identify.lambda3", idc.lambda3);
  idc.sigma_shift = kv.get_double("identify.sigma_shift", idc.sigma_shift);
  idc.nuclear_scale = kv.get_double("identify.nuclear_scale", idc.nuclear_scale);
  idc.max_reweight = kv.get_int("identify.max_reweight", idc.max_reweight);
  idc.rank_tol = kv.get_double("identify.rank_tol", idc.rank_tol);
  idc.chordal = kv.get_bool("identify.chordal", idc.chordal);
  idc.energy = kv.get_double("identify.energy", idc.energy);
  idc.full_anchors = kv.get_bool("identify.full_anchors", idc.full_anchors);
  idc.max_loewner_neighbors =
      kv.get_int("identify.max_loewner_neighbors", idc.max_loewner_neighbors);
  idc.solver.rho = kv.get_double("identify.solver_rho", idc.solver.rho);
  idc.solver.max_iters = kv.get_int("identify.solver_max_iters", idc.solver.max_iters);
  idc.solver.tol_primal = kv.get_double("identify.solver_tol_primal", idc.solver.tol_primal);
  idc.solver.tol_dual = kv.get_double("identify.solver_tol_dual", idc.solver.tol_dual);

  auto& dc = cfg.decode;
  cfg.decode_delta = kv.get_double("decode.delta", cfg.decode_delta);
  dc.M_u = kv.get_double("decode.M_u", dc.M_u);
  dc.M_l = kv.get_double("decode.M_l", dc.M_l);
  dc.min_neighbors = kv.get_int("decode.min_neighbors", dc.min_neighbors);
  dc.max_neighbors = kv.get_int("decode.max_neighbors", dc.max_neighbors);
  dc.lambda_hinge = kv.get_double("decode.lambda_hinge", dc.lambda_hinge);
  dc.max_reweight = kv.get_int("decode.max_reweight", dc.max_reweight);
  dc.solver.max_iters = kv.get_int("decode.solver_max_iters", dc.solver.max_iters);
  dc.solver.tol_primal = kv.get_double("decode.solver_tol_primal", dc.solver.tol_primal);

  cfg.train_points = kv.get_int("eval.train_points", cfg.train_points);
  cfg.horizon = kv.get_int("eval.horizon", cfg.horizon);
  cfg.eval_mode = kv.get_string("eval.mode", cfg.eval_mode);
  cfg.per_component = kv.get_bool("eval.per_component", cfg.per_component);
  if (cfg.eval_mode != "one_step" && cfg.eval_mode != "rollout") {
    throw std::runtime_error("eval.mode must be one_step or rollout");
  }
  return cfg;
}

namespace {

struct PredictionContext {
  const dynamics::Trajectory* traj = nullptr;
  decode::Dataset data;
  decode::DecodeConfig dcfg;
  int train = 0;
  std::map<int, Eigen::VectorXd> encoded;

  // Training points keep their identified embeddings; everything else goes
  // through the out-of-sample encoder once.
  Eigen::VectorXd embedding_of(int idx) {
    if (idx < train) return data.Y.col(idx);
    auto it = encoded.find(idx);
    if (it != encoded.end()) return it->second;
    Eigen::VectorXd y = decode::encode_point(traj->samples.col(idx), data, dcfg).first;
    encoded.emplace(idx, y);
    return y;
  }
};

// Per-component scalar recursions fitted to each embedding row.
std::vector<koopman::KoopmanModel> component_models(const Eigen::MatrixXd& Y, int order) {
  std::vector<koopman::KoopmanModel> models;
  for (int j = 0; j < Y.rows(); ++j) {
    const Eigen::MatrixXd row = Y.row(j);
    const auto H = structmat::build_hankel(row, order + 1);
    models.push_back(koopman::extract_model(structmat::nullspace_coeffs(H.data), 1));
  }
  return models;
}

Eigen::VectorXd step_embedding(const Eigen::MatrixXd& y_window,
                               const koopman::KoopmanModel& joint,
                               const std::vector<koopman::KoopmanModel>& per_comp) {
  if (per_comp.empty()) return koopman::ar_predict(joint, y_window);
  Eigen::VectorXd y_next(y_window.rows());
  for (int j = 0; j < y_window.rows(); ++j) {
    y_next(j) = koopman::ar_predict(per_comp[j], y_window.row(j)).value();
  }
  return y_next;
}

}  // namespace

EvalReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  EvalReport report;
  report.experiment = cfg.name;
  fs::create_directories(out_dir);

  auto timed = [&](const std::string& stage, const std::function<void()>& body) {
    const auto t0 = Clock::now();
    try {
      body();
    } catch (...) {
      report.times.push_back({stage, seconds_since(t0)});
      report.failed_stage = stage;
      throw;
    }
    report.times.push_back({stage, seconds_since(t0)});
  };

  dynamics::Trajectory traj;
  embed::EmbeddingResult ident;
  koopman::KoopmanModel model;
  std::vector<koopman::KoopmanModel> comp_models;

  try {
    timed("simulate", [&] {
      const auto sys = dynamics::OdeSystem::make(cfg.system, cfg.system_params);
      const int steps = cfg.train_points + cfg.horizon + cfg.identify.r + 1;
      traj = dynamics::simulate(sys, cfg.x0, cfg.dt, steps, cfg.substeps);
      dynamics::write_trajectory(out_dir / "trajectory.txt", traj);
    });

    timed("identify", [&] {
      dynamics::Trajectory train = traj;
      train.samples = traj.samples.leftCols(cfg.train_points);
      ident = embed::run_identification({train}, cfg.identify);
      embed::save_result(out_dir / "embedding", ident);
    });

    timed("extract", [&] {
      model = koopman::extract_model(ident.model_coeffs, ident.embed_dim);
      koopman::save_model(out_dir / "model.txt", model);
      if (cfg.per_component) {
        comp_models = component_models(ident.embeddings[0], model.r_star);
        for (std::size_t j = 0; j < comp_models.size(); ++j) {
          koopman::save_model(out_dir / ("model_component_" + std::to_string(j) + ".txt"),
                              comp_models[j]);
        }
      }
    });

    PredictionContext ctx;
    Eigen::MatrixXd preds, truths;
    timed("predict", [&] {
      ctx.traj = &traj;
      ctx.train = cfg.train_points;
      ctx.data.X = traj.samples.leftCols(cfg.train_points);
      ctx.data.Y = ident.embeddings[0];
      ctx.dcfg = cfg.decode;
      ctx.dcfg.delta = cfg.decode_delta > 0.0 ? cfg.decode_delta : ident.delta;

      const int order = model.r_star;
      const int n = traj.dim();
      preds.resize(n, cfg.horizon);
      truths.resize(n, cfg.horizon);

      if (cfg.eval_mode == "one_step") {
        for (int h = 0; h < cfg.horizon; ++h) {
          const int target = cfg.train_points + h;
          Eigen::MatrixXd y_window(ident.embed_dim, order);
          for (int i = 0; i < order; ++i) {
            y_window.col(i) = ctx.embedding_of(target - order + i);
          }
          const Eigen::VectorXd y_next = step_embedding(y_window, model, comp_models);
          preds.col(h) = decode::decode_point(y_next, ctx.data, ctx.dcfg).first;
          truths.col(h) = traj.samples.col(target);
        }
      } else {
        // Free rollout seeded with unseen states right past the training set.
        Eigen::MatrixXd y_window(ident.embed_dim, order);
        for (int i = 0; i < order; ++i) {
          y_window.col(i) = ctx.embedding_of(cfg.train_points + i);
        }
        const double bound = 100.0 * traj.samples.leftCols(cfg.train_points)
                                          .colwise().norm().maxCoeff();
        for (int h = 0; h < cfg.horizon; ++h) {
          const Eigen::VectorXd y_next = step_embedding(y_window, model, comp_models);
          const Eigen::VectorXd x_next = decode::decode_point(y_next, ctx.data, ctx.dcfg).first;
          preds.col(h) = x_next;
          truths.col(h) = traj.samples.col(cfg.train_points + model.r_star + h);
          if (!x_next.allFinite() || x_next.norm() > bound) {
            report.rollout_bounded = false;
            for (int rest = h; rest < cfg.horizon; ++rest) {
              preds.col(rest) = x_next;
              truths.col(rest) = traj.samples.col(cfg.train_points + model.r_star + rest);
            }
            break;
          }
          // Close the loop through state space: re-encode the decoded state.
          const Eigen::VectorXd y_reenc = decode::encode_point(x_next, ctx.data, ctx.dcfg).first;
          y_window.leftCols(order - 1) = y_window.rightCols(order - 1).eval();
          y_window.col(order - 1) = y_reenc;
        }
      }

      double num = 0.0, den = 0.0;
      for (int h = 0; h < cfg.horizon; ++h) {
        const double e = (preds.col(h) - truths.col(h)).norm();
        const double t = truths.col(h).norm();
        report.per_step_rel_err.push_back(e / std::max(t, 1e-300));
        num += e * e;
        den += t * t;
      }
      report.rmse_rel = std::sqrt(num / std::max(den, 1e-300));

      std::ofstream csv(out_dir / "predictions.csv");
      csv << "t";
      for (int i = 0; i < n; ++i) csv << ",x" << i + 1 << "_true";
      for (int i = 0; i < n; ++i) csv << ",x" << i + 1 << "_pred";
      csv << "\n";
      for (int h = 0; h < cfg.horizon; ++h) {
        csv << cfg.train_points + (cfg.eval_mode == "one_step" ? h : model.r_star + h);
        for (int i = 0; i < n; ++i) csv << "," << textio::fmt(truths(i, h));
        for (int i = 0; i < n; ++i) csv << "," << textio::fmt(preds(i, h));
        csv << "\n";
      }

      std::vector<Series> s = {{"truth", truths}, {"prediction", preds}};
      emit_plot(s, n >= 3 ? PlotKind::trajectory3d_projection : PlotKind::trajectory2d,
                out_dir / "prediction.svg");
      const Eigen::VectorXd sv = structmat::singular_values(ident.gram);
      emit_plot({{"singular values of G", sv.transpose()}}, PlotKind::spectrum,
                out_dir / "spectrum.svg");
      if (!ident.reports.empty() && !ident.reports.front().objective_trace.empty()) {
        const auto& tr = ident.reports.front().objective_trace;
        Eigen::MatrixXd trace(1, tr.size());
        for (std::size_t i = 0; i < tr.size(); ++i) trace(0, i) = tr[i];
        emit_plot({{"objective", trace}}, PlotKind::trace, out_dir / "trace.svg");
      }
    });

    timed("report", [&] {
      // Round trip through the decoder on training points.
      const int samples = std::min(50, cfg.train_points);
      std::vector<double> errs;
      for (int k = 0; k < samples; ++k) {
        const int idx = k * cfg.train_points / samples;
        const Eigen::VectorXd x_hat =
            decode::decode_point(ctx.data.Y.col(idx), ctx.data, ctx.dcfg).first;
        errs.push_back((x_hat - ctx.data.X.col(idx)).norm() /
                       std::max(ctx.data.X.col(idx).norm(), 1e-300));
      }
      std::sort(errs.begin(), errs.end());
      report.roundtrip_median = errs[errs.size() / 2];

      report.r_star = ident.achieved_rank;
      report.model_order = model.r_star;
      report.m = ident.embed_dim;
      report.certificate = ident.cert.exact ? "exact" : "approximate";
      report.bound = ident.cert.bound;
      write_report(out_dir / "report.txt", report);
    });
  } catch (const std::exception& err) {
    report.certificate = report.certificate.empty() ? "unavailable" : report.certificate;
    std::ofstream(out_dir / "error.txt") << report.failed_stage << ": " << err.what() << "\n";
    write_report(out_dir / "report.txt", report);
  }
  return report;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  textio::KeyValueFile kv;
  kv.set("report.experiment", report.experiment);
  kv.set_double("report.rmse_rel", report.rmse_rel);
  kv.set("report.r_star", std::to_string(report.r_star));
  kv.set("report.model_order", std::to_string(report.model_order));
  kv.set("report.m", std::to_string(report.m));
  kv.set("report.certificate", report.certificate.empty() ? "unavailable" : report.certificate);
  kv.set_double("report.bound", report.bound);
  kv.set_double("report.roundtrip_median", report.roundtrip_median);
  kv.set("report.rollout_bounded", report.rollout_bounded ? "true" : "false");
  if (!report.failed_stage.empty()) kv.set("report.failed_stage", report.failed_stage);
  for (const auto& st : report.times) kv.set_double("times." + st.stage, st.seconds);
  kv.write(path);
}

}  // namespace koop::cli
