#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "boostdepth/curriculum.hpp"
#include "boostdepth/geometry.hpp"
#include "boostdepth/grid.hpp"
#include "boostdepth/photometric.hpp"
#include "boostdepth/pose_chain.hpp"
#include "boostdepth/synth_world.hpp"

namespace boostdepth {

/// Which frames of a sequence get their depth optimized.
enum class TargetSet { center, all, list };
const char* to_string(TargetSet set);
TargetSet target_set_from_string(const std::string& name);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Schedule and ablation switches of a full warmup + boost run.
struct RunConfig {
  int warmup_epochs = 10;
  int boost_epochs = 10;
  /// Absolute epoch number of the first boost epoch (thresholds and milestones use it).
  int boost_start_epoch = 10;
  int iterations_per_epoch = 40;

  double learning_rate = 0.005;
  double lr_decay = 0.4;
  std::vector<int> lr_milestones{11, 13, 15, 16, 17, 18, 19};
  double pose_learning_rate = 1e-3;
  AdamParams adam;

  int warmup_scales = 4;
  int boost_scales = 1;

  bool curriculum = true;  ///< false: fixed {t+1, t-1, s} in both stages
  bool use_stereo = true;
  bool tri_min = true;
  bool incremental_pose = true;
  bool partial_incremental = true;
  bool error_reconstructions = true;
  double error_alpha = 5.5;
  CurriculumParams curriculum_params;

  TargetSet targets = TargetSet::center;
  std::vector<int> target_list;
  double init_depth = 0.0;  ///< <= 0: median ground-truth depth of the target
  double max_depth = 100.0;
  int threads = 1;

  void validate() const;
  /// Learning rate in effect during an absolute epoch.
  double learning_rate_at(int epoch) const;
  /// Pose policy used in a stage (incremental modes only apply while boosting).
  PosePolicy pose_policy(Stage stage) const;
};

/// Log-depth of one target, parameterised as a pyramid: level 0 is full resolution
/// and level l has ceil(W/2^l) x ceil(H/2^l) entries. The prediction at scale s is
/// the sum of every level l >= s bilinearly upsampled to full resolution.
struct OptimizerState {
  std::vector<Grid<double>> levels;
  std::vector<Grid<double>> first_moment;
  std::vector<Grid<double>> second_moment;
  long step = 0;

  /// Per-pair pose corrections (optimized estimators only) and their moments.
  std::map<PairKey, RigidTransform> corrections;
  std::map<PairKey, Vector6d> pose_first_moment;
  std::map<PairKey, Vector6d> pose_second_moment;
  long pose_step = 0;

  /// Constant depth: the coarsest level holds log(depth), the others zero.
  static OptimizerState constant(int width, int height, int level_count, double depth);
  /// Starts from given log-depth levels (e.g. a checkpoint).
  static OptimizerState from_levels(std::vector<Grid<double>> levels);

  int width() const { return levels.front().width(); }
  int height() const { return levels.front().height(); }
  int level_count() const { return static_cast<int>(levels.size()); }
  /// Composite log-depth at a scale (unclamped).
  Grid<double> log_depth(int scale = 0) const;
  /// exp(log_depth) clamped to [kMinDepth, max_depth].
  DepthMap depth(int scale = 0, double max_depth = 100.0) const;
};

/// Size of pyramid level l for a W x H image.
int level_extent(int full, int level);
/// Bilinear (half-pixel centred) upsampling of a level to full resolution, and its adjoint.
Grid<double> upsample(const Grid<double>& level, int width, int height);
Grid<double> upsample_adjoint(const Grid<double>& full, int level_width, int level_height);

/// Everything a single loss evaluation needs besides the state and the frames.
struct StepSettings {
  Stage stage = Stage::warmup;
  int scales = 1;
  LossConfig loss;
  PosePolicy policy;
  bool error_reconstructions = false;
  double error_alpha = 5.5;
  double learning_rate = 0.005;
  double pose_learning_rate = 1e-3;
  AdamParams adam;
  double max_depth = 100.0;
};

struct LossEvaluation {
  double loss = 0.0;
  std::vector<double> scale_losses;
  std::vector<Grid<double>> gradient;          ///< dL/dlevel, one grid per level
  std::map<PairKey, Vector6d> pose_gradient;   ///< optimized estimators only
  Grid<double> aggregated;                     ///< scale-0 per-pixel aggregated error
  Mask aggregated_valid;                       ///< valid and automask-true at scale 0
};

/// L = mean over scales of [mean over mu-true pixels of min_j pe(I_t, I_{j->t})
/// + lambda * smoothness]. Error-induced reconstructions join the minimum during
/// the boost stage when enabled; they pass depth gradients but no pose gradients.
/// Throws NumericError when no pixel survives masking or the loss is not finite.
LossEvaluation evaluate_loss(const OptimizerState& state, const FrameWindow& window,
                             const std::vector<SourceId>& sources, const PoseEstimator& estimator,
                             const StepSettings& settings, bool with_gradient = true);

/// One Adam step on log-depth (and pose corrections for optimized estimators).
/// The scale-0 depth is clamped to [kMinDepth, max_depth] afterwards. Returns the
/// loss before the update.
double step(OptimizerState& state, const FrameWindow& window, const std::vector<SourceId>& sources,
            const PoseEstimator& estimator, const StepSettings& settings);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Central differences on `samples` randomly chosen log-depth entries (all levels
/// when `level` < 0) against the analytic gradient.
GradientCheckResult gradient_check(const OptimizerState& state, const FrameWindow& window,
                                   const std::vector<SourceId>& sources, const PoseEstimator& estimator,
                                   const StepSettings& settings, int samples, std::uint64_t seed,
                                   double h = 1e-6, int level = 0);

struct LogRow {
  int epoch = 0;
  long iteration = 0;
  int target = 0;
  double loss = 0.0;
  double lr = 0.0;
  Stage stage = Stage::warmup;
  std::string sources;  ///< e.g. "+5 +4 +3 -5 -4 -3"
};

struct RunResult {
  std::map<int, DepthMap> depths;
  std::map<int, OptimizerState> states;
  std::vector<LogRow> log;
  std::vector<std::string> warnings;
};

/// Called after every epoch of every target with the current scale-0 depth.
using EpochCallback = std::function<void(int epoch, int target, const DepthMap& depth)>;

/// Source set for one target in one epoch.
struct EpochSources {
  CurriculumSchedule schedule;
  SourceSelection selection;       ///< chosen source and the in-window set
  std::vector<SourceId> dropped;   ///< requested by the rules but outside the window
  double baseline = 0.0;           ///< one-step translation norm used for G
  bool narrowed = false;           ///< candidate offsets were capped because nothing else existed
};

/// Curriculum selection (or the fixed adjacent set) plus triplet expansion, clipped
/// to the frames that exist. Throws DataError if nothing is left.
EpochSources sources_for_epoch(const FrameWindow& window, const PoseEstimator& estimator, const RunConfig& cfg,
                               int epoch, Stage stage);

/// Loss evaluation settings for a stage and epoch of a run.
StepSettings settings_for_epoch(const RunConfig& cfg, const LossConfig& loss_cfg, int epoch, Stage stage);

/// Frames whose depth a run optimizes.
std::vector<int> resolve_targets(const RunConfig& cfg, const Sequence& sequence);

/// Warmup then boost over the selected targets. `initial` (optional) supplies
/// starting states per target, e.g. from a checkpoint.
RunResult run(std::shared_ptr<const Sequence> sequence, const PoseEstimator& estimator, const RunConfig& cfg,
              const LossConfig& loss_cfg, const std::map<int, OptimizerState>* initial = nullptr,
              const EpochCallback& on_epoch = {});

std::string log_to_csv(const std::vector<LogRow>& log);

}  // namespace boostdepth
