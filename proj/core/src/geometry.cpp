#include "boostdepth/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/LU>

namespace boostdepth {

DepthMap DepthMap::from_values(Grid<double> v) {
  Mask m(v.width(), v.height(), 1, 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    m[i] = (std::isfinite(v[i]) && v[i] > 0.0) ? 1 : 0;
  }
  return DepthMap(std::move(v), std::move(m));
}

std::size_t DepthMap::valid_count() const {
  std::size_t n = 0;
  for (auto m : valid.data()) n += m != 0;
  return n;
}

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw ConfigError("intrinsics: principal point must lie inside the image");
  }
}

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d s;
  s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return s;
}

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d k = skew(w);
  if (theta < 1e-12) return Eigen::Matrix3d::Identity() + k;
  return Eigen::Matrix3d::Identity() + std::sin(theta) / theta * k +
         (1.0 - std::cos(theta)) / (theta * theta) * k * k;
}

double rotation_angle(const Eigen::Matrix3d& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

RigidTransform RigidTransform::from_axis_angle(const Eigen::Vector3d& axis_angle,
                                               const Eigen::Vector3d& t) {
  return {rotation_from_axis_angle(axis_angle), t};
}

RigidTransform RigidTransform::exp(const Vector6d& twist) {
  const Eigen::Vector3d v = twist.head<3>();
  const Eigen::Vector3d w = twist.tail<3>();
  const double theta = w.norm();
  const Eigen::Matrix3d k = skew(w);
  Eigen::Matrix3d jac = Eigen::Matrix3d::Identity();
  if (theta > 1e-12) {
    const double t2 = theta * theta;
    jac += (1.0 - std::cos(theta)) / t2 * k + (theta - std::sin(theta)) / (t2 * theta) * k * k;
  } else {
    jac += 0.5 * k;
  }
  return {rotation_from_axis_angle(w), jac * v};
}

double RigidTransform::orthonormality_error() const {
  const Eigen::Matrix3d e = rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity();
  return e.cwiseAbs().maxCoeff() + std::abs(rotation_.determinant() - 1.0);
}

namespace {

void check_extent(const DepthMap& depth, const Intrinsics& k) {
  k.validate();
  if (depth.width() != k.width || depth.height() != k.height) {
    throw ConfigError("depth map is " + std::to_string(depth.width()) + "x" +
                      std::to_string(depth.height()) + " but intrinsics describe " +
                      std::to_string(k.width) + "x" + std::to_string(k.height));
  }
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Bilinear cell lookup shared by sampling and its derivative. Returns false when
// (u, v) needs pixels outside the image.
struct Cell {
  int x0, y0;
  double ax, ay;
};

inline bool locate(double u, double v, int w, int h, Cell& cell) {
  if (!(u >= -kBorderTolerance && v >= -kBorderTolerance && u <= w - 1 + kBorderTolerance &&
        v <= h - 1 + kBorderTolerance)) {
    return false;
  }
  u = std::clamp(u, 0.0, static_cast<double>(w - 1));
  v = std::clamp(v, 0.0, static_cast<double>(h - 1));
  int x0 = static_cast<int>(u);
  int y0 = static_cast<int>(v);
  if (x0 > w - 2) x0 = w - 2;
  if (y0 > h - 2) y0 = h - 2;
  cell = {x0, y0, u - x0, v - y0};
  return true;
}

}  // namespace

Projection project(const DepthMap& depth, const RigidTransform& pose, const Intrinsics& k) {
  check_extent(depth, k);
  Projection out{Grid<double>(k.width, k.height, 2, kNaN), Mask(k.width, k.height, 1, 0)};
  const Eigen::Matrix3d& r = pose.rotation();
  const Eigen::Vector3d& t = pose.translation();
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      if (!depth.is_valid(x, y)) continue;
      const Eigen::Vector3d p = r * (depth.values(x, y) * k.ray(x, y)) + t;
      if (p.z() <= kMinDepth) continue;
      out.coords(x, y, 0) = k.fx * p.x() / p.z() + k.cx;
      out.coords(x, y, 1) = k.fy * p.y() / p.z() + k.cy;
      out.in_front(x, y) = 1;
    }
  }
  return out;
}

Sampled sample_bilinear(const ImageBuffer& source, const Grid<double>& coords) {
  if (coords.channels() != 2) throw DataError("sample_bilinear: coordinates need two channels");
  if (source.width() < 2 || source.height() < 2) {
    throw DataError("sample_bilinear: source must be at least 2x2");
  }
  const int w = coords.width();
  const int h = coords.height();
  const int ch = source.channels();
  Sampled out{ImageBuffer(w, h, ch, 0.0), Mask(w, h, 1, 0)};
  Cell cell{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!locate(coords(x, y, 0), coords(x, y, 1), source.width(), source.height(), cell)) continue;
      out.valid(x, y) = 1;
      const double w00 = (1.0 - cell.ax) * (1.0 - cell.ay);
      const double w10 = cell.ax * (1.0 - cell.ay);
      const double w01 = (1.0 - cell.ax) * cell.ay;
      const double w11 = cell.ax * cell.ay;
      for (int c = 0; c < ch; ++c) {
        out.image(x, y, c) = w00 * source(cell.x0, cell.y0, c) + w10 * source(cell.x0 + 1, cell.y0, c) +
                             w01 * source(cell.x0, cell.y0 + 1, c) +
                             w11 * source(cell.x0 + 1, cell.y0 + 1, c);
      }
    }
  }
  return out;
}

Sampled synthesize(const DepthMap& target_depth, const ImageBuffer& source, const RigidTransform& pose,
                   const Intrinsics& k) {
  if (source.width() != k.width || source.height() != k.height) {
    throw ConfigError("synthesize: source image does not match intrinsics");
  }
  const Projection proj = project(target_depth, pose, k);
  Sampled s = sample_bilinear(source, proj.coords);
  for (std::size_t i = 0; i < s.valid.size(); ++i) s.valid[i] &= proj.in_front[i];
  return s;
}

SynthesisJacobian synthesize_with_jacobian(const DepthMap& target_depth, const ImageBuffer& source,
                                           const RigidTransform& pose, const Intrinsics& k,
                                           bool with_point_derivatives) {
  check_extent(target_depth, k);
  if (source.width() != k.width || source.height() != k.height) {
    throw ConfigError("synthesize: source image does not match intrinsics");
  }
  const int w = k.width;
  const int h = k.height;
  const int ch = source.channels();
  SynthesisJacobian out;
  out.reconstruction = {ImageBuffer(w, h, ch, 0.0), Mask(w, h, 1, 0)};
  out.d_depth = Grid<double>(w, h, ch, 0.0);
  if (with_point_derivatives) {
    out.d_point = Grid<double>(w, h, 3 * ch, 0.0);
    out.target_points = Grid<double>(w, h, 3, 0.0);
  }
  const Eigen::Matrix3d& r = pose.rotation();
  const Eigen::Vector3d& t = pose.translation();
  Cell cell{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!target_depth.is_valid(x, y)) continue;
      const Eigen::Vector3d ray = k.ray(x, y);
      const double d = target_depth.values(x, y);
      const Eigen::Vector3d p = r * (d * ray) + t;
      if (p.z() <= kMinDepth) continue;
      const double iz = 1.0 / p.z();
      const double u = k.fx * p.x() / p.z() + k.cx;
      const double v = k.fy * p.y() / p.z() + k.cy;
      if (!locate(u, v, w, h, cell)) continue;
      out.reconstruction.valid(x, y) = 1;
      if (with_point_derivatives) {
        out.target_points(x, y, 0) = d * ray.x();
        out.target_points(x, y, 1) = d * ray.y();
        out.target_points(x, y, 2) = d * ray.z();
      }
      // d(u,v)/dp
      const double du_dx = k.fx * iz;
      const double du_dz = -k.fx * p.x() * iz * iz;
      const double dv_dy = k.fy * iz;
      const double dv_dz = -k.fy * p.y() * iz * iz;
      const Eigen::Vector3d dp_dd = r * ray;
      const double w00 = (1.0 - cell.ax) * (1.0 - cell.ay);
      const double w10 = cell.ax * (1.0 - cell.ay);
      const double w01 = (1.0 - cell.ax) * cell.ay;
      const double w11 = cell.ax * cell.ay;
      for (int c = 0; c < ch; ++c) {
        const double i00 = source(cell.x0, cell.y0, c);
        const double i10 = source(cell.x0 + 1, cell.y0, c);
        const double i01 = source(cell.x0, cell.y0 + 1, c);
        const double i11 = source(cell.x0 + 1, cell.y0 + 1, c);
        const double top = i00 + cell.ax * (i10 - i00);
        const double bottom = i01 + cell.ax * (i11 - i01);
        out.reconstruction.image(x, y, c) = w00 * i00 + w10 * i10 + w01 * i01 + w11 * i11;
        const double gu = (1.0 - cell.ay) * (i10 - i00) + cell.ay * (i11 - i01);
        const double gv = bottom - top;
        const double gx = gu * du_dx;
        const double gy = gv * dv_dy;
        const double gz = gu * du_dz + gv * dv_dz;
        out.d_depth(x, y, c) = gx * dp_dd.x() + gy * dp_dd.y() + gz * dp_dd.z();
        if (with_point_derivatives) {
          out.d_point(x, y, 3 * c + 0) = gx;
          out.d_point(x, y, 3 * c + 1) = gy;
          out.d_point(x, y, 3 * c + 2) = gz;
        }
      }
    }
  }
  return out;
}

std::vector<Eigen::Vector3d> backproject(const DepthMap& depth, const Intrinsics& k,
                                         const RigidTransform& pose) {
  check_extent(depth, k);
  std::vector<Eigen::Vector3d> points;
  points.reserve(depth.valid_count());
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      if (!depth.is_valid(x, y)) continue;
      points.push_back(pose * (depth.values(x, y) * k.ray(x, y)));
    }
  }
  return points;
}

}  // namespace boostdepth
