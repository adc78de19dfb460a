#include "boostdepth/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <regex>
#include <sstream>

#include "boostdepth/error.hpp"
#include "boostdepth/io.hpp"

namespace boostdepth {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw DataError("cannot write " + path.string());
}

std::string numbered(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.%s", prefix, i, ext);
  return buf;
}

std::vector<std::string> scene_echo(const ExperimentConfig& cfg) {
  std::vector<std::string> lines;
  std::istringstream in(echo_config(cfg));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("seed ", 0) == 0 || line.rfind("scene.", 0) == 0) lines.push_back(line);
  }
  return lines;
}

}  // namespace

Sequence cmd_synth(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  Sequence seq = render(cfg.scene_spec());
  ensure_dir(out_dir);
  export_sequence(seq, out_dir, scene_echo(cfg));
  write_text(out_dir / "effective_config.txt", echo_config(cfg));
  return seq;
}

void write_checkpoint(const std::map<int, OptimizerState>& states, const fs::path& dir) {
  ensure_dir(dir);
  for (const auto& [t, state] : states) {
    for (int l = 0; l < state.level_count(); ++l) {
      char name[64];
      std::snprintf(name, sizeof(name), "logdepth_%03d_%d.pfm", t, l);
      io::write_pfm(dir / name, state.levels[static_cast<std::size_t>(l)]);
    }
  }
}

std::map<int, OptimizerState> read_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("checkpoint directory " + dir.string() + " does not exist");
  static const std::regex pattern(R"(logdepth_(\d{3})_(\d)\.pfm)");
  std::map<int, std::map<int, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) files[std::stoi(m[1].str())][std::stoi(m[2].str())] = entry.path();
  }
  if (files.empty()) throw DataError("checkpoint directory " + dir.string() + " holds no log-depth levels");
  std::map<int, OptimizerState> out;
  for (const auto& [t, levels] : files) {
    std::vector<Grid<double>> grids;
    for (int l = 0; l < static_cast<int>(levels.size()); ++l) {
      const auto it = levels.find(l);
      if (it == levels.end()) throw DataError("checkpoint level " + std::to_string(l) + " missing for frame " + std::to_string(t));
      grids.push_back(io::read_pfm(it->second));
    }
    out.emplace(t, OptimizerState::from_levels(std::move(grids)));
  }
  return out;
}

RunResult cmd_optimize(const ExperimentConfig& cfg, const fs::path& scene_dir, const fs::path& out_dir,
                       const OptimizeOptions& options) {
  cfg.validate();
  auto seq = std::make_shared<const Sequence>(import_sequence(scene_dir));
  const PoseEstimator estimator =
      PoseEstimator::for_sequence(*seq, cfg.estimator, cfg.drift_model(), cfg.base_estimator);

  std::map<int, OptimizerState> initial;
  if (options.checkpoint) {
    initial = read_checkpoint(*options.checkpoint);
    for (int t : resolve_targets(cfg.run, *seq)) {
      const auto it = initial.find(t);
      if (it == initial.end()) throw DataError("checkpoint has no state for frame " + std::to_string(t));
      if (it->second.width() != seq->intrinsics.width || it->second.height() != seq->intrinsics.height) {
        throw DataError("checkpoint size does not match the scene");
      }
    }
  }

  ensure_dir(out_dir);
  write_text(out_dir / "effective_config.txt", echo_config(cfg));
  EpochCallback on_epoch;
  std::mutex snapshot_mutex;
  if (cfg.snapshots) {
    ensure_dir(out_dir / "snapshots");
    on_epoch = [&](int epoch, int target, const DepthMap& depth) {
      char name[64];
      std::snprintf(name, sizeof(name), "epoch_%02d_depth_%03d.pfm", epoch, target);
      const std::lock_guard lock(snapshot_mutex);
      io::write_depth(out_dir / "snapshots" / name, depth);
    };
  }
  RunResult result = run(seq, estimator, cfg.run, cfg.loss, options.checkpoint ? &initial : nullptr, on_epoch);

  for (const auto& [t, depth] : result.depths) io::write_depth(out_dir / numbered("depth", t, "pfm"), depth);
  write_text(out_dir / "training_log.csv", log_to_csv(result.log));
  write_checkpoint(result.states, out_dir / "checkpoint");

  if (options.dump_errors) {
    ensure_dir(out_dir / "errors");
    const bool boosted = cfg.run.boost_epochs > 0;
    const Stage stage = boosted ? Stage::boost : Stage::warmup;
    const int epoch = boosted ? cfg.run.boost_start_epoch + cfg.run.boost_epochs - 1 : cfg.run.warmup_epochs - 1;
    const StepSettings settings = settings_for_epoch(cfg.run, cfg.loss, epoch, stage);
    for (const auto& [t, state] : result.states) {
      const FrameWindow window(seq, t);
      const EpochSources src = sources_for_epoch(window, estimator, cfg.run, epoch, stage);
      const LossEvaluation ev = evaluate_loss(state, window, src.selection.sources, estimator, settings, false);
      io::write_depth(out_dir / "errors" / numbered("error", t, "pfm"),
                      DepthMap(ev.aggregated, ev.aggregated_valid));
    }
  }
  return result;
}

EvalResult cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const MetricOptions& options,
                    const fs::path& out_dir) {
  options.validate();
  if (!fs::is_directory(pred_dir)) throw DataError("prediction directory " + pred_dir.string() + " does not exist");
  const Intrinsics k = import_sequence(gt_dir).intrinsics;
  static const std::regex pattern(R"(depth_\d+\.pfm)");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, pattern)) names.push_back(name);
  }
  if (names.empty()) throw DataError("no depth_*.pfm files in " + pred_dir.string());
  std::sort(names.begin(), names.end());
  EvalResult r;
  for (const auto& name : names) {
    if (!fs::exists(gt_dir / name)) throw DataError("ground truth " + (gt_dir / name).string() + " is missing");
    const DepthMap pred = io::read_depth(pred_dir / name);
    const DepthMap gt = io::read_depth(gt_dir / name);
    r.images.push_back(evaluate_depth(pred, gt, k, options, name.substr(0, name.size() - 4)));
  }
  r.aggregate = aggregate_reports(r.images);
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_text(out_dir / "metrics.json", reports_to_json(r.images, r.aggregate));
    write_text(out_dir / "metrics.csv", reports_to_csv(r.images, r.aggregate));
  }
  return r;
}

std::vector<DriftRow> cmd_posesim(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const std::vector<RigidTransform> trajectory = camera_trajectory(cfg.scene_spec());
  PoseEstimator est = PoseEstimator::oracle(trajectory);
  const EstimatorKind kind = cfg.estimator == EstimatorKind::optimized ? cfg.base_estimator : cfg.estimator;
  if (kind == EstimatorKind::noisy_oracle) est = PoseEstimator::noisy_oracle(trajectory, cfg.drift_model());
  const std::vector<DriftRow> rows = simulate_drift(est, cfg.drift_max_separation);
  ensure_dir(out_dir);
  write_drift_csv(out_dir / "drift.csv", rows);
  write_text(out_dir / "effective_config.txt", echo_config(cfg));
  return rows;
}

}  // namespace boostdepth
