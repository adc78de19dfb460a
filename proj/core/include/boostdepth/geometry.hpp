#pragma once

#include <vector>

#include <Eigen/Core>

#include "boostdepth/grid.hpp"

namespace boostdepth {

using Vector6d = Eigen::Matrix<double, 6, 1>;

/// Points closer than this (in the destination camera) are treated as behind it.
inline constexpr double kMinDepth = 1e-3;

/// Pinhole camera. Convention: +z forward, u right, v down.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws ConfigError unless fx, fy > 0 and the principal point lies inside the image.
  void validate() const;

  /// Viewing ray with unit z component through pixel (u, v).
  Eigen::Vector3d ray(double u, double v) const {
    return {(u - cx) / fx, (v - cy) / fy, 1.0};
  }
  Eigen::Vector2d project(const Eigen::Vector3d& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
};

/// SE(3) element. Used as P_{t->t'}: maps points expressed in the target camera
/// into the source camera, x' = R x + t.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
  RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Eigen::Vector3d& t) {
    return {Eigen::Matrix3d::Identity(), t};
  }
  /// Rotation given as an axis-angle vector (radians).
  static RigidTransform from_axis_angle(const Eigen::Vector3d& axis_angle,
                                        const Eigen::Vector3d& t = Eigen::Vector3d::Zero());
  /// Exponential map of a twist (v, w): translation part first, rotation second.
  static RigidTransform exp(const Vector6d& twist);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  RigidTransform operator*(const RigidTransform& rhs) const {
    return {rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_};
  }
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

  RigidTransform inverse() const {
    Eigen::Matrix3d rt = rotation_.transpose();
    return {rt, -(rt * translation_)};
  }

  /// ‖RᵀR − I‖∞ plus |det R − 1|.
  double orthonormality_error() const;

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& w);
/// Rodrigues formula.
Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& w);
/// Rotation angle in radians of a rotation matrix.
double rotation_angle(const Eigen::Matrix3d& r);

/// Per-pixel projected coordinates (2 channels: u, v) and a front-of-camera flag.
struct Projection {
  Grid<double> coords;
  Mask in_front;
};

/// Back-projects every valid depth pixel, moves it by `pose`, and reprojects it.
/// Pixels with invalid depth or transformed z <= kMinDepth get in_front = 0 and NaN coords.
Projection project(const DepthMap& depth, const RigidTransform& pose, const Intrinsics& k);

/// Result of sampling an image at arbitrary coordinates.
struct Sampled {
  ImageBuffer image;
  Mask valid;
};

/// Coordinates this close (in pixels) outside the image snap onto the border, so that
/// rounding noise in an exact border projection cannot flip validity.
inline constexpr double kBorderTolerance = 1e-6;

/// Bilinear interpolation. Coordinates outside [0, W-1] x [0, H-1] (beyond
/// kBorderTolerance, or non-finite) are masked invalid and produce zeros; there is
/// no clamping at the border.
Sampled sample_bilinear(const ImageBuffer& source, const Grid<double>& coords);

/// Inverse warp: the source image resampled into the target view, I_{t'->t}.
Sampled synthesize(const DepthMap& target_depth, const ImageBuffer& source,
                   const RigidTransform& pose, const Intrinsics& k);

/// Reconstruction together with its derivatives.
///
/// d_depth holds d(recon)/d(depth) per pixel and channel. When requested, d_point
/// holds d(recon)/d(x') (3 entries per channel, channel-major) and target_points the
/// back-projected points x in the target frame, which is enough to chain any pose
/// derivative through x' = R x + t.
struct SynthesisJacobian {
  Sampled reconstruction;
  Grid<double> d_depth;
  Grid<double> d_point;
  Grid<double> target_points;
};

SynthesisJacobian synthesize_with_jacobian(const DepthMap& target_depth, const ImageBuffer& source,
                                           const RigidTransform& pose, const Intrinsics& k,
                                           bool with_point_derivatives = false);

/// One point per valid pixel: x_out = pose * (depth * K^-1 [u v 1]^T).
std::vector<Eigen::Vector3d> backproject(const DepthMap& depth, const Intrinsics& k,
                                         const RigidTransform& pose = RigidTransform());

}  // namespace boostdepth
