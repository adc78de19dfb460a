#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "boostdepth/curriculum.hpp"
#include "boostdepth/geometry.hpp"
#include "boostdepth/grid.hpp"

namespace boostdepth {

enum class Layout { textured_plane, two_plane_step, ramp_plus_occluder };
const char* to_string(Layout layout);
Layout layout_from_string(const std::string& name);

/// Brightness drift applied after rendering: p <- clamp(gain^|k| p + bias |k|, 0, 1),
/// with k the frame's signed distance to the sequence's reference (centre) frame.
struct BrightnessModel {
  double gain = 1.0;
  double bias = 0.0;

  void validate() const;
};

/// Everything needed to render a sequence. Lengths are in model units, in which
/// the stereo baseline is 0.1 (about 0.54 m).
struct SceneSpec {
  Layout layout = Layout::textured_plane;
  int width = 96;
  int height = 64;
  double fx = 80.0;
  double fy = 80.0;
  double cx = 47.5;
  double cy = 31.5;
  int frames = 15;
  std::uint64_t seed = 7;

  Eigen::Vector3d velocity{0.06, 0.0, 0.04};  ///< per-frame camera translation (world)
  double yaw_rate = 0.0;                       ///< per-frame yaw, radians
  double stereo_baseline = 0.1;
  double meters_per_unit = 5.4;
  BrightnessModel brightness;

  int texture_octaves = 5;
  double texture_scale = 0.4;  ///< lattice spacing of the coarsest octave
  double texture_persistence = 0.6;
  double texture_contrast = 2.2;
  int supersample = 3;  ///< n x n colour samples per pixel

  // textured_plane: plane at far_depth. two_plane_step: near half-plane x < step_x
  // in front of the far plane.
  double near_depth = 2.0;
  double far_depth = 3.5;
  double step_x = 0.0;

  // ramp_plus_occluder: z = ramp_base - ramp_slope * y, plus an axis-aligned
  // rectangle at occluder_depth.
  double ramp_base = 4.0;
  double ramp_slope = 1.5;
  double occluder_depth = 1.8;
  double occluder_x0 = -0.25;
  double occluder_x1 = 0.15;
  double occluder_y0 = -0.3;
  double occluder_y1 = 0.2;

  void validate() const;
  Intrinsics intrinsics() const { return {fx, fy, cx, cy, width, height}; }
  int reference_frame() const { return frames / 2; }
};

struct Frame {
  ImageBuffer image;
  DepthMap depth;
  RigidTransform camera_to_world;
};

/// A rendered sequence: monocular frames 0..N-1 and their stereo partners.
struct Sequence {
  SceneSpec spec;
  Intrinsics intrinsics;
  std::vector<Frame> frames;
  std::vector<Frame> stereo;

  int size() const { return static_cast<int>(frames.size()); }
  bool has_frame(int i) const { return i >= 0 && i < size(); }
  /// Ground-truth P_{from->to} between monocular frames.
  RigidTransform relative_pose(int from, int to) const;
  /// Ground-truth P_{t->s} (rig extrinsics).
  RigidTransform stereo_pose(int t) const;
  /// Norm of the one-step ground-truth translation at frame t.
  double ground_truth_baseline(int t) const;
};

/// Target frame plus access to its neighbours.
class FrameWindow {
 public:
  FrameWindow(std::shared_ptr<const Sequence> sequence, int target);

  int target() const { return target_; }
  const Sequence& sequence() const { return *sequence_; }
  const Intrinsics& intrinsics() const { return sequence_->intrinsics; }
  const Frame& target_frame() const { return sequence_->frames[static_cast<std::size_t>(target_)]; }

  bool has(SourceId id) const;
  /// Frame for a source; throws DataError when it does not exist.
  const Frame& frame(SourceId id) const;
  WindowExtent extent() const;

 private:
  std::shared_ptr<const Sequence> sequence_;
  int target_;
};

/// Camera-to-world pose of every monocular frame.
std::vector<RigidTransform> camera_trajectory(const SceneSpec& spec);

/// Ray-cast rendering with procedural multi-octave textures. Deterministic in its input.
Sequence render(const SceneSpec& spec);

/// p <- clamp(gain^|k| p + bias |k|, 0, 1).
ImageBuffer perturb_brightness(const ImageBuffer& frame, int k, const BrightnessModel& model);

/// Writes frame_NNN.ppm, stereo_NNN.ppm, depth_NNN.pfm, stereo_depth_NNN.pfm and manifest.txt.
/// `spec_echo` lines are appended to the manifest verbatim.
void export_sequence(const Sequence& sequence, const std::filesystem::path& dir,
                     const std::vector<std::string>& spec_echo = {});
/// Reads a directory written by export_sequence.
Sequence import_sequence(const std::filesystem::path& dir);

}  // namespace boostdepth
