#include "boostdepth/synth_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "boostdepth/error.hpp"
#include "boostdepth/io.hpp"

namespace boostdepth {

const char* to_string(Layout layout) {
  switch (layout) {
    case Layout::textured_plane:
      return "textured_plane";
    case Layout::two_plane_step:
      return "two_plane_step";
    case Layout::ramp_plus_occluder:
      return "ramp_plus_occluder";
  }
  return "?";
}

Layout layout_from_string(const std::string& name) {
  if (name == "textured_plane") return Layout::textured_plane;
  if (name == "two_plane_step") return Layout::two_plane_step;
  if (name == "ramp_plus_occluder") return Layout::ramp_plus_occluder;
  throw ConfigError("unknown scene layout '" + name + "'");
}

void BrightnessModel::validate() const {
  if (!(gain > 0.0 && gain <= 2.0)) throw ConfigError("brightness gain must be in (0, 2]");
  if (!(bias >= -0.5 && bias <= 0.5)) throw ConfigError("brightness bias must be in [-0.5, 0.5]");
}

void SceneSpec::validate() const {
  intrinsics().validate();
  if (width < 2 || height < 2) throw ConfigError("scene must be at least 2x2 pixels");
  if (frames < 1) throw ConfigError("scene.frames must be >= 1");
  if (!(stereo_baseline > 0.0)) throw ConfigError("scene.stereo_baseline must be > 0");
  if (!(meters_per_unit > 0.0)) throw ConfigError("scene.meters_per_unit must be > 0");
  if (texture_octaves < 1) throw ConfigError("scene.texture_octaves must be >= 1");
  if (supersample < 1 || supersample > 8) throw ConfigError("scene.supersample must be in [1, 8]");
  if (!(texture_scale > 0.0)) throw ConfigError("scene.texture_scale must be > 0");
  if (!velocity.allFinite()) throw ConfigError("scene.velocity must be finite");
  brightness.validate();
  switch (layout) {
    case Layout::textured_plane:
      if (!(far_depth > kMinDepth)) throw ConfigError("scene.far_depth must be positive");
      break;
    case Layout::two_plane_step:
      if (!(near_depth > kMinDepth && near_depth < far_depth)) {
        throw ConfigError("two_plane_step needs 0 < near_depth < far_depth");
      }
      break;
    case Layout::ramp_plus_occluder:
      if (!(ramp_base > kMinDepth && occluder_depth > kMinDepth)) {
        throw ConfigError("ramp_plus_occluder needs positive ramp_base and occluder_depth");
      }
      if (!(occluder_x0 < occluder_x1 && occluder_y0 < occluder_y1)) {
        throw ConfigError("occluder rectangle is empty");
      }
      break;
  }
}

RigidTransform Sequence::relative_pose(int from, int to) const {
  return frames.at(static_cast<std::size_t>(to)).camera_to_world.inverse() *
         frames.at(static_cast<std::size_t>(from)).camera_to_world;
}

RigidTransform Sequence::stereo_pose(int t) const {
  return stereo.at(static_cast<std::size_t>(t)).camera_to_world.inverse() *
         frames.at(static_cast<std::size_t>(t)).camera_to_world;
}

double Sequence::ground_truth_baseline(int t) const {
  if (size() < 2) return 0.0;
  const int next = t + 1 < size() ? t + 1 : t - 1;
  return relative_pose(t, next).translation().norm();
}

FrameWindow::FrameWindow(std::shared_ptr<const Sequence> sequence, int target)
    : sequence_(std::move(sequence)), target_(target) {
  if (!sequence_ || !sequence_->has_frame(target)) throw DataError("frame window: target out of range");
}

bool FrameWindow::has(SourceId id) const {
  if (id.stereo) return static_cast<int>(sequence_->stereo.size()) > target_;
  return id.offset != 0 && sequence_->has_frame(target_ + id.offset);
}

const Frame& FrameWindow::frame(SourceId id) const {
  if (!has(id)) throw DataError("frame window: source " + id.str() + " is not available");
  if (id.stereo) return sequence_->stereo[static_cast<std::size_t>(target_)];
  return sequence_->frames[static_cast<std::size_t>(target_ + id.offset)];
}

WindowExtent FrameWindow::extent() const {
  return {target_, sequence_->size() - 1 - target_, has(SourceId::stereo_partner())};
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t h, std::int64_t v) {
  return splitmix(h ^ static_cast<std::uint64_t>(v));
}

double lattice(std::uint64_t key, std::int64_t ix, std::int64_t iy) {
  const std::uint64_t h = mix(mix(key, ix), iy);
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

// Bilinearly interpolated lattice noise in [0,1].
double value_noise(std::uint64_t key, double u, double v) {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const auto ix = static_cast<std::int64_t>(fu);
  const auto iy = static_cast<std::int64_t>(fv);
  const double au = u - fu;
  const double av = v - fv;
  const double v00 = lattice(key, ix, iy);
  const double v10 = lattice(key, ix + 1, iy);
  const double v01 = lattice(key, ix, iy + 1);
  const double v11 = lattice(key, ix + 1, iy + 1);
  const double top = v00 + au * (v10 - v00);
  const double bottom = v01 + au * (v11 - v01);
  return top + av * (bottom - top);
}

class Texture {
 public:
  Texture(const SceneSpec& spec, int surface) : spec_(spec) {
    base_key_ = mix(mix(splitmix(spec.seed), 0x5eed), surface);
    double sum = 0.0;
    double a = 1.0;
    for (int o = 0; o < spec.texture_octaves; ++o) {
      sum += a;
      a *= spec.texture_persistence;
    }
    norm_ = 1.0 / sum;
  }

  double fbm(std::uint64_t key, double u, double v) const {
    double acc = 0.0;
    double a = 1.0;
    double freq = 1.0 / spec_.texture_scale;
    for (int o = 0; o < spec_.texture_octaves; ++o) {
      acc += a * value_noise(mix(key, o), u * freq + 17.0 * o, v * freq - 11.0 * o);
      a *= spec_.texture_persistence;
      freq *= 2.0;
    }
    return acc * norm_;
  }

  void sample(double u, double v, double* rgb) const {
    const double luma = fbm(mix(base_key_, 100), u, v);
    for (int c = 0; c < 3; ++c) {
      const double chroma = fbm(mix(base_key_, c), u, v);
      const double raw = 0.7 * luma + 0.3 * chroma;
      rgb[c] = std::clamp(0.5 + spec_.texture_contrast * (raw - 0.5), 0.0, 1.0);
    }
  }

 private:
  const SceneSpec& spec_;
  std::uint64_t base_key_ = 0;
  double norm_ = 1.0;
};

struct Hit {
  double depth = std::numeric_limits<double>::infinity();
  int surface = -1;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
};

// Ray-casts all surfaces of the layout; the ray direction has unit camera-z, so the
// ray parameter is the camera-frame depth.
Hit cast(const SceneSpec& spec, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  Hit best;
  auto consider = [&](double s, int surface, auto&& inside) {
    if (!(s > kMinDepth) || s >= best.depth) return;
    const Eigen::Vector3d p = origin + s * dir;
    if (!inside(p)) return;
    best = {s, surface, p};
  };
  auto fronto = [&](double z, int surface, auto&& inside) {
    if (dir.z() == 0.0) return;
    consider((z - origin.z()) / dir.z(), surface, inside);
  };
  auto anywhere = [](const Eigen::Vector3d&) { return true; };
  switch (spec.layout) {
    case Layout::textured_plane:
      fronto(spec.far_depth, 0, anywhere);
      break;
    case Layout::two_plane_step:
      fronto(spec.far_depth, 0, anywhere);
      fronto(spec.near_depth, 1, [&](const Eigen::Vector3d& p) { return p.x() < spec.step_x; });
      break;
    case Layout::ramp_plus_occluder: {
      const Eigen::Vector3d n(0.0, spec.ramp_slope, 1.0);
      const double nd = n.dot(dir);
      if (nd != 0.0) consider((spec.ramp_base - n.dot(origin)) / nd, 0, anywhere);
      fronto(spec.occluder_depth, 1, [&](const Eigen::Vector3d& p) {
        return p.x() >= spec.occluder_x0 && p.x() <= spec.occluder_x1 && p.y() >= spec.occluder_y0 &&
               p.y() <= spec.occluder_y1;
      });
      break;
    }
  }
  return best;
}

Frame render_view(const SceneSpec& spec, const std::vector<Texture>& textures,
                  const RigidTransform& camera_to_world, int brightness_k) {
  const Intrinsics k = spec.intrinsics();
  Frame f;
  f.camera_to_world = camera_to_world;
  f.image = ImageBuffer(spec.width, spec.height, 3, 0.0);
  Grid<double> depth(spec.width, spec.height, 1, 0.0);
  Mask valid(spec.width, spec.height, 1, 0);
  const Eigen::Vector3d origin = camera_to_world.translation();
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Hit centre = cast(spec, origin, camera_to_world.rotation() * k.ray(x, y));
      if (centre.surface >= 0) {
        depth(x, y) = centre.depth;
        valid(x, y) = 1;
      }
      // Colour is the box-filtered average of n x n sub-pixel rays (anti-aliasing).
      const int n = spec.supersample;
      double sum[3] = {0.0, 0.0, 0.0};
      int hits = 0;
      for (int sy = 0; sy < n; ++sy) {
        for (int sx = 0; sx < n; ++sx) {
          const double u = x + (sx + 0.5) / n - 0.5;
          const double v = y + (sy + 0.5) / n - 0.5;
          const Hit hit = cast(spec, origin, camera_to_world.rotation() * k.ray(u, v));
          if (hit.surface < 0) continue;
          double rgb[3];
          const auto& tex = textures[static_cast<std::size_t>(hit.surface)];
          if (spec.layout == Layout::ramp_plus_occluder && hit.surface == 0) {
            tex.sample(hit.point.x(), hit.point.z(), rgb);
          } else {
            tex.sample(hit.point.x(), hit.point.y(), rgb);
          }
          for (int c = 0; c < 3; ++c) sum[c] += rgb[c];
          ++hits;
        }
      }
      if (hits == 0) continue;
      for (int c = 0; c < 3; ++c) f.image(x, y, c) = sum[c] / hits;
    }
  }
  f.depth = DepthMap(std::move(depth), std::move(valid));
  f.image = perturb_brightness(f.image, brightness_k, spec.brightness);
  return f;
}

}  // namespace

ImageBuffer perturb_brightness(const ImageBuffer& frame, int k, const BrightnessModel& model) {
  if (k == 0) return frame;
  const int ak = std::abs(k);
  const double g = std::pow(model.gain, ak);
  const double c = model.bias * ak;
  ImageBuffer out = frame;
  for (auto& p : out.data()) p = std::clamp(g * p + c, 0.0, 1.0);
  return out;
}

std::vector<RigidTransform> camera_trajectory(const SceneSpec& spec) {
  spec.validate();
  std::vector<RigidTransform> out;
  const int ref = spec.reference_frame();
  for (int i = 0; i < spec.frames; ++i) {
    const double step = i - ref;
    out.push_back(RigidTransform::from_axis_angle(Eigen::Vector3d(0.0, spec.yaw_rate * step, 0.0),
                                                  step * spec.velocity));
  }
  return out;
}

Sequence render(const SceneSpec& spec) {
  spec.validate();
  Sequence seq;
  seq.spec = spec;
  seq.intrinsics = spec.intrinsics();
  std::vector<Texture> textures;
  for (int s = 0; s < 2; ++s) textures.emplace_back(spec, s);
  const int ref = spec.reference_frame();
  const RigidTransform rig = RigidTransform::from_translation({spec.stereo_baseline, 0.0, 0.0});
  const std::vector<RigidTransform> trajectory = camera_trajectory(spec);
  for (int i = 0; i < spec.frames; ++i) {
    const RigidTransform& pose = trajectory[static_cast<std::size_t>(i)];
    seq.frames.push_back(render_view(spec, textures, pose, i - ref));
    seq.stereo.push_back(render_view(spec, textures, pose * rig, i - ref));
  }
  return seq;
}

namespace {

std::string frame_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.%s", prefix, i, ext);
  return buf;
}

void write_pose(std::ostream& out, const char* tag, int i, const RigidTransform& p) {
  char buf[64];
  out << tag << ' ' << i;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      const double v = c < 3 ? p.rotation()(r, c) : p.translation()(r);
      std::snprintf(buf, sizeof(buf), " %.17g", v);
      out << buf;
    }
  }
  out << '\n';
}

RigidTransform parse_pose(std::istringstream& ls) {
  Eigen::Matrix3d r;
  Eigen::Vector3d t;
  for (int row = 0; row < 3; ++row) {
    for (int c = 0; c < 4; ++c) {
      double v = 0.0;
      if (!(ls >> v)) throw DataError("manifest: pose rows need 12 numbers");
      if (c < 3) {
        r(row, c) = v;
      } else {
        t(row) = v;
      }
    }
  }
  return {r, t};
}

}  // namespace

void export_sequence(const Sequence& seq, const std::filesystem::path& dir,
                     const std::vector<std::string>& spec_echo) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  for (int i = 0; i < seq.size(); ++i) {
    io::write_ppm(dir / frame_name("frame", i, "ppm"), seq.frames[static_cast<std::size_t>(i)].image);
    io::write_depth(dir / frame_name("depth", i, "pfm"), seq.frames[static_cast<std::size_t>(i)].depth);
    io::write_ppm(dir / frame_name("stereo", i, "ppm"), seq.stereo[static_cast<std::size_t>(i)].image);
    io::write_depth(dir / frame_name("stereo_depth", i, "pfm"),
                    seq.stereo[static_cast<std::size_t>(i)].depth);
  }
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw DataError("cannot write manifest in " + dir.string());
  const Intrinsics& k = seq.intrinsics;
  char buf[160];
  out << "# boostdepth scene manifest\n";
  out << "width " << k.width << "\nheight " << k.height << '\n';
  std::snprintf(buf, sizeof(buf), "intrinsics %.17g %.17g %.17g %.17g\n", k.fx, k.fy, k.cx, k.cy);
  out << buf;
  out << "frames " << seq.size() << '\n';
  std::snprintf(buf, sizeof(buf), "stereo_baseline %.17g\nmeters_per_unit %.17g\n",
                seq.spec.stereo_baseline, seq.spec.meters_per_unit);
  out << buf;
  for (int i = 0; i < seq.size(); ++i) write_pose(out, "pose", i, seq.frames[static_cast<std::size_t>(i)].camera_to_world);
  for (int i = 0; i < seq.size(); ++i) {
    write_pose(out, "stereo_pose", i, seq.stereo[static_cast<std::size_t>(i)].camera_to_world);
  }
  for (const auto& line : spec_echo) out << "spec " << line << '\n';
  if (!out) throw DataError("failed writing manifest in " + dir.string());
}

Sequence import_sequence(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw DataError("no manifest.txt in " + dir.string());
  Sequence seq;
  int frames = -1;
  std::map<int, RigidTransform> poses;
  std::map<int, RigidTransform> stereo_poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "width") {
      ls >> seq.intrinsics.width;
    } else if (key == "height") {
      ls >> seq.intrinsics.height;
    } else if (key == "intrinsics") {
      ls >> seq.intrinsics.fx >> seq.intrinsics.fy >> seq.intrinsics.cx >> seq.intrinsics.cy;
    } else if (key == "frames") {
      ls >> frames;
    } else if (key == "stereo_baseline") {
      ls >> seq.spec.stereo_baseline;
    } else if (key == "meters_per_unit") {
      ls >> seq.spec.meters_per_unit;
    } else if (key == "pose" || key == "stereo_pose") {
      int i = -1;
      ls >> i;
      (key == "pose" ? poses : stereo_poses)[i] = parse_pose(ls);
    } else if (key == "spec") {
      continue;
    } else {
      throw DataError("manifest: unknown entry '" + key + "'");
    }
    if (ls.fail()) throw DataError("manifest: malformed line '" + line + "'");
  }
  if (frames < 1) throw DataError("manifest: missing frame count");
  try {
    seq.intrinsics.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  const Intrinsics& k = seq.intrinsics;
  seq.spec.width = k.width;
  seq.spec.height = k.height;
  seq.spec.fx = k.fx;
  seq.spec.fy = k.fy;
  seq.spec.cx = k.cx;
  seq.spec.cy = k.cy;
  seq.spec.frames = frames;
  auto load = [&](const char* img, const char* dep, const RigidTransform& pose) {
    Frame f;
    f.image = io::read_ppm(dir / img);
    f.depth = io::read_depth(dir / dep);
    f.camera_to_world = pose;
    if (f.image.width() != k.width || f.image.height() != k.height || f.depth.width() != k.width ||
        f.depth.height() != k.height) {
      throw DataError(std::string("scene frame has the wrong size: ") + img);
    }
    return f;
  };
  for (int i = 0; i < frames; ++i) {
    if (!poses.count(i) || !stereo_poses.count(i)) throw DataError("manifest: missing pose rows");
    seq.frames.push_back(load(frame_name("frame", i, "ppm").c_str(), frame_name("depth", i, "pfm").c_str(),
                              poses[i]));
    seq.stereo.push_back(load(frame_name("stereo", i, "ppm").c_str(),
                              frame_name("stereo_depth", i, "pfm").c_str(), stereo_poses[i]));
  }
  return seq;
}

}  // namespace boostdepth
