#include "boostdepth/pose_chain.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>

#include "boostdepth/error.hpp"
#include "boostdepth/synth_world.hpp"

namespace boostdepth {

const char* to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::oracle:
      return "oracle";
    case EstimatorKind::noisy_oracle:
      return "noisy_oracle";
    case EstimatorKind::optimized:
      return "optimized";
  }
  return "?";
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
  if (name == "oracle") return EstimatorKind::oracle;
  if (name == "noisy_oracle") return EstimatorKind::noisy_oracle;
  if (name == "optimized") return EstimatorKind::optimized;
  throw ConfigError("unknown pose estimator '" + name + "'");
}

const char* to_string(PoseMode mode) {
  switch (mode) {
    case PoseMode::direct:
      return "direct";
    case PoseMode::full_incremental:
      return "full_incremental";
    case PoseMode::partial_incremental:
      return "partial_incremental";
  }
  return "?";
}

void DriftModel::validate() const {
  if (!(c >= 0.0)) throw ConfigError("pose.drift_c must be >= 0");
  if (!(p > 0.0)) throw ConfigError("pose.drift_p must be > 0");
  if (!(rotation_noise_deg >= 0.0)) throw ConfigError("pose.rotation_noise_deg must be >= 0");
}

double DriftModel::shortfall(double b) const { return b > 0.0 ? c * std::pow(b, p) : 0.0; }

void PosePolicy::validate() const {
  if (!(error_alpha > 0.0)) throw ConfigError("pose.error_alpha must be > 0");
}

PoseEstimator PoseEstimator::oracle(std::vector<RigidTransform> trajectory, std::vector<RigidTransform> stereo) {
  PoseEstimator e;
  e.kind_ = e.base_kind_ = EstimatorKind::oracle;
  e.trajectory_ = std::make_shared<const std::vector<RigidTransform>>(std::move(trajectory));
  e.stereo_ = std::make_shared<const std::vector<RigidTransform>>(std::move(stereo));
  return e;
}

PoseEstimator PoseEstimator::noisy_oracle(std::vector<RigidTransform> trajectory, const DriftModel& drift,
                                          std::vector<RigidTransform> stereo) {
  drift.validate();
  PoseEstimator e = oracle(std::move(trajectory), std::move(stereo));
  e.kind_ = e.base_kind_ = EstimatorKind::noisy_oracle;
  e.drift_ = drift;
  return e;
}

PoseEstimator PoseEstimator::optimized(const PoseEstimator& base, std::map<PairKey, RigidTransform> corrections) {
  PoseEstimator e = base;
  e.kind_ = EstimatorKind::optimized;
  e.corrections_ = std::move(corrections);
  return e;
}

PoseEstimator PoseEstimator::for_sequence(const Sequence& seq, EstimatorKind kind, const DriftModel& drift,
                                          EstimatorKind base_kind) {
  std::vector<RigidTransform> traj;
  std::vector<RigidTransform> stereo;
  for (int i = 0; i < seq.size(); ++i) {
    traj.push_back(seq.frames[static_cast<std::size_t>(i)].camera_to_world);
    if (static_cast<int>(seq.stereo.size()) > i) stereo.push_back(seq.stereo_pose(i));
  }
  auto make = [&](EstimatorKind k) {
    if (k == EstimatorKind::noisy_oracle) return noisy_oracle(traj, drift, stereo);
    if (k == EstimatorKind::oracle) return oracle(traj, stereo);
    throw ConfigError("optimized estimators need an oracle or noisy_oracle base");
  };
  if (kind == EstimatorKind::optimized) return optimized(make(base_kind));
  return make(kind);
}

RigidTransform PoseEstimator::ground_truth(int from, int to) const {
  const int n = frame_count();
  if (from < 0 || to < 0 || from >= n || to >= n) {
    throw DataError("pose estimate requested for missing frame (" + std::to_string(from) + " -> " +
                    std::to_string(to) + ")");
  }
  return (*trajectory_)[static_cast<std::size_t>(to)].inverse() * (*trajectory_)[static_cast<std::size_t>(from)];
}

namespace {

std::uint64_t pair_hash(std::uint64_t seed, int from, int to) {
  std::uint64_t x = seed ^ 0x243F6A8885A308D3ULL;
  for (std::uint64_t v : {static_cast<std::uint64_t>(static_cast<std::uint32_t>(from)),
                          static_cast<std::uint64_t>(static_cast<std::uint32_t>(to))}) {
    x ^= v + 0x9E3779B97F4A7C15ULL + (x << 6) + (x >> 2);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    x ^= x >> 31;
  }
  return x;
}

}  // namespace

RigidTransform PoseEstimator::base_estimate(int from, int to) const {
  const RigidTransform truth = ground_truth(from, to);
  if (base_kind_ == EstimatorKind::oracle || from == to) return truth;
  const double b = truth.translation().norm();
  const double scale = b > 0.0 ? std::max(0.0, 1.0 - drift_.shortfall(b) / b) : 1.0;
  Eigen::Matrix3d r = truth.rotation();
  if (drift_.rotation_noise_deg > 0.0) {
    std::mt19937_64 rng(pair_hash(drift_.seed, from, to));
    std::normal_distribution<double> normal(0.0, drift_.rotation_noise_deg * std::numbers::pi / 180.0);
    Eigen::Vector3d w;
    for (int i = 0; i < 3; ++i) w(i) = normal(rng);
    r = rotation_from_axis_angle(w) * r;
  }
  return {r, scale * truth.translation()};
}

RigidTransform PoseEstimator::estimate(int from, int to) const {
  RigidTransform base = base_estimate(from, to);
  if (kind_ != EstimatorKind::optimized) return base;
  const auto it = corrections_.find({from, to});
  return it == corrections_.end() ? base : it->second * base;
}

RigidTransform PoseEstimator::stereo(int t) const {
  if (t < 0 || t >= static_cast<int>(stereo_->size())) {
    throw DataError("no stereo extrinsics for frame " + std::to_string(t));
  }
  return (*stereo_)[static_cast<std::size_t>(t)];
}

PoseEstimator PoseEstimator::with_corrections(std::map<PairKey, RigidTransform> corrections) const {
  PoseEstimator e = *this;
  e.corrections_ = std::move(corrections);
  return e;
}

namespace {

// Chain S_n ... S_1 plus (optionally) the derivative with respect to each step's correction.
SourcePose chain(const PoseEstimator& est, int t, int n, bool derivs) {
  if (n == 0) throw ConfigError("incremental pose needs a non-zero separation");
  const int s = n > 0 ? 1 : -1;
  const int steps = std::abs(n);
  std::vector<RigidTransform> step(static_cast<std::size_t>(steps));
  std::vector<PairKey> keys(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    keys[static_cast<std::size_t>(i)] = {t + i * s, t + (i + 1) * s};
    step[static_cast<std::size_t>(i)] = est.estimate(t + i * s, t + (i + 1) * s);
  }
  // prefix[j] = S_j ... S_1 (1-based j), suffix[j] = S_n ... S_{j+1}
  std::vector<RigidTransform> prefix(static_cast<std::size_t>(steps) + 1);
  for (int j = 1; j <= steps; ++j) prefix[static_cast<std::size_t>(j)] = step[static_cast<std::size_t>(j - 1)] * prefix[static_cast<std::size_t>(j - 1)];
  SourcePose out{prefix[static_cast<std::size_t>(steps)], {}};
  if (!derivs) return out;
  std::vector<RigidTransform> suffix(static_cast<std::size_t>(steps) + 1);
  for (int j = steps - 1; j >= 0; --j) {
    suffix[static_cast<std::size_t>(j)] = suffix[static_cast<std::size_t>(j + 1)] * step[static_cast<std::size_t>(j)];
  }
  for (int j = 1; j <= steps; ++j) {
    const Eigen::Matrix3d& ra = suffix[static_cast<std::size_t>(j)].rotation();
    const RigidTransform& c = prefix[static_cast<std::size_t>(j)];
    for (int a = 0; a < 3; ++a) {
      const Eigen::Vector3d e = Eigen::Vector3d::Unit(a);
      PoseDerivative dv{keys[static_cast<std::size_t>(j - 1)], a, Eigen::Matrix3d::Zero(), ra * e};
      const Eigen::Matrix3d ex = skew(e);
      PoseDerivative dw{keys[static_cast<std::size_t>(j - 1)], 3 + a, ra * ex * c.rotation(),
                        ra * ex * c.translation()};
      out.derivatives.push_back(dv);
      out.derivatives.push_back(dw);
    }
  }
  return out;
}

SourcePose direct(const PoseEstimator& est, int t, int k, bool derivs) {
  SourcePose out{est.estimate(t, t + k), {}};
  if (!derivs) return out;
  const PairKey key{t, t + k};
  for (int a = 0; a < 3; ++a) {
    const Eigen::Vector3d e = Eigen::Vector3d::Unit(a);
    const Eigen::Matrix3d ex = skew(e);
    out.derivatives.push_back({key, a, Eigen::Matrix3d::Zero(), e});
    out.derivatives.push_back({key, 3 + a, ex * out.pose.rotation(), ex * out.pose.translation()});
  }
  return out;
}

}  // namespace

RigidTransform incremental_pose(const PoseEstimator& est, int t, int n) {
  return chain(est, t, n, false).pose;
}

namespace {

std::map<SourceId, SourcePose> compute_poses(const PoseEstimator& est, const PosePolicy& policy,
                                             const std::vector<SourceId>& sources, int t, bool derivs) {
  policy.validate();
  int min_abs = 0;
  for (const auto& id : sources) {
    if (id.is_mono() && (min_abs == 0 || std::abs(id.offset) < min_abs)) min_abs = std::abs(id.offset);
  }
  std::map<SourceId, SourcePose> out;
  for (const auto& id : sources) {
    if (id.stereo) {
      out[id] = {est.stereo(t), {}};
      continue;
    }
    const int k = id.offset;
    switch (policy.mode) {
      case PoseMode::direct:
        out[id] = direct(est, t, k, derivs);
        break;
      case PoseMode::full_incremental:
        out[id] = chain(est, t, k, derivs);
        break;
      case PoseMode::partial_incremental: {
        if (std::abs(k) == min_abs) {
          out[id] = chain(est, t, k, derivs);
          break;
        }
        SourcePose rot = chain(est, t, k, derivs);
        SourcePose trans = direct(est, t, k, derivs);
        SourcePose mixed{RigidTransform(rot.pose.rotation(), trans.pose.translation()), {}};
        for (auto& d : rot.derivatives) {
          if (d.component < 3) continue;
          d.d_translation.setZero();
          mixed.derivatives.push_back(d);
        }
        for (auto& d : trans.derivatives) {
          d.d_rotation.setZero();
          mixed.derivatives.push_back(d);
        }
        out[id] = std::move(mixed);
        break;
      }
    }
  }
  return out;
}

}  // namespace

std::map<SourceId, SourcePose> poses_with_derivatives(const PoseEstimator& est, const PosePolicy& policy,
                                                      const std::vector<SourceId>& sources, int t) {
  return compute_poses(est, policy, sources, t, est.kind() == EstimatorKind::optimized);
}

std::map<SourceId, RigidTransform> poses_for_sources(const PoseEstimator& est, const PosePolicy& policy,
                                                     const std::vector<SourceId>& sources, int t) {
  std::map<SourceId, RigidTransform> out;
  for (auto& [id, sp] : compute_poses(est, policy, sources, t, false)) out[id] = sp.pose;
  return out;
}

RigidTransform error_induced_pose(const RigidTransform& pose, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("error-induced pose needs alpha > 0");
  return {pose.rotation(), pose.translation() / alpha};
}

std::vector<DriftRow> simulate_drift(const PoseEstimator& est, int max_separation) {
  if (max_separation < 1) throw ConfigError("posesim.max_separation must be >= 1");
  if (est.frame_count() <= max_separation) {
    throw ConfigError("drift simulation needs a trajectory longer than the maximum separation");
  }
  std::vector<DriftRow> rows;
  for (int n = 1; n <= max_separation; ++n) {
    std::vector<double> direct_err;
    std::vector<double> inc_err;
    for (int t = 0; t + n < est.frame_count(); ++t) {
      const Eigen::Vector3d truth = est.ground_truth(t, t + n).translation();
      direct_err.push_back((est.estimate(t, t + n).translation() - truth).norm());
      inc_err.push_back((incremental_pose(est, t, n).translation() - truth).norm());
    }
    for (const auto& [name, errs] : {std::pair<const char*, const std::vector<double>*>{"direct", &direct_err},
                                     {"incremental", &inc_err}}) {
      double mean = 0.0;
      for (double e : *errs) mean += e;
      mean /= static_cast<double>(errs->size());
      double var = 0.0;
      for (double e : *errs) var += (e - mean) * (e - mean);
      var /= static_cast<double>(errs->size());
      rows.push_back({n, name, mean, std::sqrt(var)});
    }
  }
  return rows;
}

void write_drift_csv(const std::filesystem::path& path, const std::vector<DriftRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "separation,policy,mean_error,std_error\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.17g,%.17g\n", r.separation, r.policy.c_str(), r.mean_error,
                  r.std_error);
    out << buf;
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace boostdepth
