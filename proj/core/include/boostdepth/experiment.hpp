#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "boostdepth/config.hpp"
#include "boostdepth/metrics.hpp"
#include "boostdepth/optimizer.hpp"
#include "boostdepth/pose_chain.hpp"

namespace boostdepth {

/// Renders the configured scene into `out_dir` (frames, depths, manifest, effective config).
Sequence cmd_synth(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct OptimizeOptions {
  bool dump_errors = false;
  /// Directory of a previous run's checkpoint/ to start from.
  std::optional<std::filesystem::path> checkpoint;
};

/// Optimizes depth for the scene in `scene_dir`. Writes depth_NNN.pfm per target,
/// training_log.csv, effective_config.txt, checkpoint/ (log-depth levels),
/// snapshots/ when enabled and errors/ when requested.
RunResult cmd_optimize(const ExperimentConfig& cfg, const std::filesystem::path& scene_dir,
                       const std::filesystem::path& out_dir, const OptimizeOptions& options = {});

struct EvalResult {
  std::vector<MetricReport> images;
  MetricReport aggregate;
};

/// Scores every depth_*.pfm of `pred_dir` against the same file in `gt_dir` (a scene
/// directory, whose manifest supplies the intrinsics). Writes metrics.json and
/// metrics.csv into `out_dir` when it is non-empty.
EvalResult cmd_eval(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                    const MetricOptions& options, const std::filesystem::path& out_dir = {});

/// Direct vs incremental translation drift of the configured estimator over the
/// scene trajectory; writes drift.csv and effective_config.txt.
std::vector<DriftRow> cmd_posesim(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Log-depth pyramid files of a checkpoint directory, per target.
void write_checkpoint(const std::map<int, OptimizerState>& states, const std::filesystem::path& dir);
std::map<int, OptimizerState> read_checkpoint(const std::filesystem::path& dir);

}  // namespace boostdepth
