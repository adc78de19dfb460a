#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "boostdepth/curriculum.hpp"
#include "boostdepth/geometry.hpp"

namespace boostdepth {

struct Sequence;

enum class EstimatorKind { oracle, noisy_oracle, optimized };
const char* to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& name);

/// Drift of the noisy oracle. A one-step-or-longer estimate over a true baseline b
/// is shortened by e(b) = c * b^p (translation direction kept) and its rotation is
/// perturbed by a zero-mean axis-angle draw with per-axis std rotation_noise_deg.
struct DriftModel {
  double c = 0.5;
  double p = 2.0;
  double rotation_noise_deg = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
  /// Translation shortfall for a true baseline b.
  double shortfall(double b) const;
};

/// (from, to) frame pair of a relative pose P_{from->to}.
using PairKey = std::pair<int, int>;

/// Source of relative poses. Oracle and noisy-oracle estimators are pure functions of
/// the ground-truth trajectory; the optimized kind wraps another estimator and
/// left-multiplies per-pair corrections owned by the caller.
class PoseEstimator {
 public:
  /// `trajectory` holds camera-to-world poses; `stereo` holds P_{t->s} per frame (may be empty).
  static PoseEstimator oracle(std::vector<RigidTransform> trajectory, std::vector<RigidTransform> stereo = {});
  static PoseEstimator noisy_oracle(std::vector<RigidTransform> trajectory, const DriftModel& drift,
                                    std::vector<RigidTransform> stereo = {});
  static PoseEstimator optimized(const PoseEstimator& base,
                                 std::map<PairKey, RigidTransform> corrections = {});
  /// Estimator of the given kind over a rendered sequence (optimized wraps `base_kind`).
  static PoseEstimator for_sequence(const Sequence& seq, EstimatorKind kind, const DriftModel& drift = {},
                                    EstimatorKind base_kind = EstimatorKind::noisy_oracle);

  EstimatorKind kind() const { return kind_; }
  int frame_count() const { return static_cast<int>(trajectory_->size()); }
  const DriftModel& drift() const { return drift_; }

  /// P_{from->to}. Throws DataError when either frame is missing.
  RigidTransform estimate(int from, int to) const;
  /// Ground truth P_{from->to}.
  RigidTransform ground_truth(int from, int to) const;
  /// Fixed rig extrinsics P_{t->s}.
  RigidTransform stereo(int t) const;

  const std::map<PairKey, RigidTransform>& corrections() const { return corrections_; }
  PoseEstimator with_corrections(std::map<PairKey, RigidTransform> corrections) const;

 private:
  PoseEstimator() = default;
  RigidTransform base_estimate(int from, int to) const;

  EstimatorKind kind_ = EstimatorKind::oracle;
  EstimatorKind base_kind_ = EstimatorKind::oracle;
  std::shared_ptr<const std::vector<RigidTransform>> trajectory_;
  std::shared_ptr<const std::vector<RigidTransform>> stereo_;
  DriftModel drift_;
  std::map<PairKey, RigidTransform> corrections_;
};

/// Product of one-step estimates from t to t+n (n may be negative):
/// P_{t->t+n} = S_n ... S_1 with S_i = P_{t+(i-1)s -> t+is}, s = sign(n).
RigidTransform incremental_pose(const PoseEstimator& est, int t, int n);

enum class PoseMode { direct, full_incremental, partial_incremental };
const char* to_string(PoseMode mode);

struct PosePolicy {
  PoseMode mode = PoseMode::direct;
  double error_alpha = 5.5;

  void validate() const;
};

/// Derivative of a source pose with respect to one component of a per-pair
/// correction exp(xi) (xi = (v, w), left-multiplied): component 0..2 = v, 3..5 = w.
struct PoseDerivative {
  PairKey key;
  int component = 0;
  Eigen::Matrix3d d_rotation = Eigen::Matrix3d::Zero();
  Eigen::Vector3d d_translation = Eigen::Vector3d::Zero();
};

struct SourcePose {
  RigidTransform pose;
  std::vector<PoseDerivative> derivatives;  ///< empty unless the estimator is optimized
};

/// Poses for every source of a selection according to the policy. The stereo source
/// always uses the rig extrinsics. partial_incremental uses the full chain for the
/// monocular source(s) with the smallest |k| and (chain rotation | direct translation)
/// for the rest.
std::map<SourceId, RigidTransform> poses_for_sources(const PoseEstimator& est, const PosePolicy& policy,
                                                     const std::vector<SourceId>& sources, int t);
/// Same, with derivatives with respect to the estimator's correction parameters.
std::map<SourceId, SourcePose> poses_with_derivatives(const PoseEstimator& est, const PosePolicy& policy,
                                                      const std::vector<SourceId>& sources, int t);

/// (R | t / alpha). Throws ConfigError for alpha <= 0.
RigidTransform error_induced_pose(const RigidTransform& pose, double alpha);

struct DriftRow {
  int separation = 0;
  std::string policy;  ///< "direct" or "incremental"
  double mean_error = 0.0;
  double std_error = 0.0;
};

/// Translation error of direct vs incremental estimates for separations 1..max_separation,
/// averaged over every start frame of the trajectory.
std::vector<DriftRow> simulate_drift(const PoseEstimator& est, int max_separation);
void write_drift_csv(const std::filesystem::path& path, const std::vector<DriftRow>& rows);

}  // namespace boostdepth
