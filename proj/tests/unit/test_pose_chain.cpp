#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <doctest.h>

#include "boostdepth/error.hpp"
#include "boostdepth/pose_chain.hpp"

using namespace boostdepth;

namespace {

double deg(double d) { return d * std::numbers::pi / 180.0; }

// Camera-to-world poses whose one-step relative pose P_{i->i+1} equals `step`.
std::vector<RigidTransform> trajectory_with_step(const RigidTransform& step, int n) {
  std::vector<RigidTransform> traj{RigidTransform()};
  for (int i = 1; i < n; ++i) traj.push_back(traj.back() * step.inverse());
  return traj;
}

// Constant-velocity motion without rotation.
std::vector<RigidTransform> straight(int n, const Eigen::Vector3d& v) {
  std::vector<RigidTransform> traj;
  for (int i = 0; i < n; ++i) traj.push_back(RigidTransform::from_translation(i * v));
  return traj;
}

double pose_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.rotation() - b.rotation()).cwiseAbs().maxCoeff() +
         (a.translation() - b.translation()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("incremental pose with constant translation steps") {
  const auto traj = trajectory_with_step(RigidTransform::from_translation({0, 0, 0.1}), 8);
  const PoseEstimator est = PoseEstimator::oracle(traj);
  const RigidTransform p = incremental_pose(est, 2, 3);
  CHECK((p.translation() - Eigen::Vector3d(0, 0, 0.3)).norm() < 1e-15);
  CHECK((p.rotation() - Eigen::Matrix3d::Identity()).norm() < 1e-15);
  const RigidTransform back = incremental_pose(est, 5, -3);
  CHECK((back.translation() - Eigen::Vector3d(0, 0, -0.3)).norm() < 1e-15);
  CHECK(pose_distance(incremental_pose(est, 4, 1), est.estimate(4, 5)) == 0.0);
}

TEST_CASE("incremental pose with per-step rotation") {
  const Eigen::Vector3d t(0.05, 0.0, 0.1);
  const RigidTransform step = RigidTransform::from_axis_angle({0, deg(1.0), 0}, t);
  const auto traj = trajectory_with_step(step, 6);
  const PoseEstimator est = PoseEstimator::oracle(traj);
  const RigidTransform p = incremental_pose(est, 0, 4);
  CHECK(rotation_angle(p.rotation()) == doctest::Approx(deg(4.0)).epsilon(1e-10));
  const Eigen::Matrix3d r = step.rotation();
  // S4 S3 S2 S1 applied to the origin: t + R t + R^2 t + R^3 t.
  const Eigen::Vector3d expected = t + r * t + r * r * t + r * r * r * t;
  CHECK((p.translation() - expected).norm() < 1e-14);
}

TEST_CASE("identity increments compose to the identity") {
  const PoseEstimator est = PoseEstimator::oracle(std::vector<RigidTransform>(6));
  for (int n = 1; n <= 5; ++n) CHECK(pose_distance(incremental_pose(est, 0, n), RigidTransform()) == 0.0);
}

TEST_CASE("forward and backward chains cancel for the oracle") {
  const RigidTransform step = RigidTransform::from_axis_angle({0.01, 0.02, -0.005}, {0.03, -0.01, 0.08});
  const PoseEstimator est = PoseEstimator::oracle(trajectory_with_step(step, 10));
  for (int n = 1; n <= 6; ++n) {
    const RigidTransform round = incremental_pose(est, 2 + n, -n) * incremental_pose(est, 2, n);
    CHECK(pose_distance(round, RigidTransform()) < 1e-9);
  }
  CHECK_THROWS_AS(incremental_pose(est, 8, 3), DataError);
}

TEST_CASE("noisy oracle underestimates translation by e(b)") {
  DriftModel drift;
  drift.rotation_noise_deg = 0.0;
  const PoseEstimator est = PoseEstimator::noisy_oracle(straight(10, {0.0, 0.0, 0.2}), drift);
  for (int n = 1; n <= 5; ++n) {
    const double b = 0.2 * n;
    const double truth = est.ground_truth(0, n).translation().norm();
    CHECK(truth == doctest::Approx(b));
    const double reported = est.estimate(0, n).translation().norm();
    CHECK(reported == doctest::Approx(b - 0.5 * b * b).epsilon(1e-12));
    CHECK(reported < truth);
  }
  CHECK(drift.shortfall(0.1) == doctest::Approx(0.005));
}

TEST_CASE("poses_for_sources policies") {
  DriftModel drift;
  drift.seed = 4;
  const RigidTransform step = RigidTransform::from_axis_angle({0, deg(0.5), 0}, {0.02, 0, 0.09});
  auto traj = trajectory_with_step(step, 15);
  std::vector<RigidTransform> stereo(15, RigidTransform::from_translation({-0.1, 0, 0}));
  const PoseEstimator noisy = PoseEstimator::noisy_oracle(traj, drift, stereo);
  const int t = 7;
  const SourceId s = SourceId::stereo_partner();

  SUBCASE("one-step sources agree across policies") {
    const std::vector<SourceId> set{SourceId::mono(1), SourceId::mono(-1), s};
    for (PoseMode mode : {PoseMode::full_incremental, PoseMode::partial_incremental}) {
      const auto a = poses_for_sources(noisy, {PoseMode::direct}, set, t);
      const auto b = poses_for_sources(noisy, {mode}, set, t);
      for (const auto& id : set) CHECK(pose_distance(a.at(id), b.at(id)) == 0.0);
      CHECK(pose_distance(b.at(s), stereo[t]) == 0.0);
    }
  }
  SUBCASE("partial incremental uses the chain only for the smallest separation") {
    const std::vector<SourceId> set{SourceId::mono(4),  SourceId::mono(3),  SourceId::mono(2),
                                    SourceId::mono(-4), SourceId::mono(-3), SourceId::mono(-2)};
    const auto poses = poses_for_sources(noisy, {PoseMode::partial_incremental}, set, t);
    for (const auto& id : set) {
      const RigidTransform chain = incremental_pose(noisy, t, id.offset);
      const RigidTransform direct = noisy.estimate(t, t + id.offset);
      const RigidTransform& got = poses.at(id);
      CHECK((got.rotation() - chain.rotation()).cwiseAbs().maxCoeff() == 0.0);
      if (std::abs(id.offset) == 2) {
        CHECK((got.translation() - chain.translation()).norm() == 0.0);
      } else {
        CHECK((got.translation() - direct.translation()).norm() == 0.0);
        CHECK((got.translation() - chain.translation()).norm() > 0.0);
      }
    }
  }
  SUBCASE("the oracle makes every policy agree") {
    const PoseEstimator oracle = PoseEstimator::oracle(traj, stereo);
    std::vector<SourceId> set;
    for (int k = 1; k <= 7; ++k) {
      set.push_back(SourceId::mono(k));
      set.push_back(SourceId::mono(-k));
    }
    const auto d = poses_for_sources(oracle, {PoseMode::direct}, set, t);
    const auto f = poses_for_sources(oracle, {PoseMode::full_incremental}, set, t);
    const auto p = poses_for_sources(oracle, {PoseMode::partial_incremental}, set, t);
    for (const auto& id : set) {
      CHECK(pose_distance(d.at(id), f.at(id)) < 1e-12);
      CHECK(pose_distance(d.at(id), p.at(id)) < 1e-12);
    }
  }
}

TEST_CASE("pose derivatives of an optimized estimator match finite differences") {
  DriftModel drift;
  drift.seed = 9;
  const RigidTransform step = RigidTransform::from_axis_angle({0.01, deg(1.0), 0}, {0.03, 0.01, 0.1});
  const auto traj = trajectory_with_step(step, 12);
  std::map<PairKey, RigidTransform> corrections;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.01);
  for (int a = 0; a < 12; ++a) {
    for (int b = 0; b < 12; ++b) {
      if (a == b) continue;
      Vector6d xi;
      for (int i = 0; i < 6; ++i) xi(i) = n(rng);
      corrections[{a, b}] = RigidTransform::exp(xi);
    }
  }
  const PoseEstimator est =
      PoseEstimator::optimized(PoseEstimator::noisy_oracle(traj, drift), corrections);
  const std::vector<SourceId> set{SourceId::mono(3), SourceId::mono(2), SourceId::mono(-3), SourceId::mono(-2)};
  const int t = 6;
  const double h = 1e-6;
  for (PoseMode mode : {PoseMode::direct, PoseMode::full_incremental, PoseMode::partial_incremental}) {
    const auto poses = poses_with_derivatives(est, {mode}, set, t);
    for (const auto& [id, sp] : poses) {
      REQUIRE(!sp.derivatives.empty());
      for (const auto& d : sp.derivatives) {
        auto perturbed = [&](double eps) {
          auto c = est.corrections();
          Vector6d xi = Vector6d::Zero();
          xi(d.component) = eps;
          c[d.key] = RigidTransform::exp(xi) * c.at(d.key);
          return poses_for_sources(est.with_corrections(c), {mode}, set, t).at(id);
        };
        const RigidTransform p = perturbed(h);
        const RigidTransform m = perturbed(-h);
        const Eigen::Matrix3d dr = (p.rotation() - m.rotation()) / (2 * h);
        const Eigen::Vector3d dt = (p.translation() - m.translation()) / (2 * h);
        INFO(std::string(to_string(mode)), " ", id.str(), " key ", d.key.first, "->", d.key.second, " c ", d.component);
        CHECK((dr - d.d_rotation).cwiseAbs().maxCoeff() < 1e-7);
        CHECK((dt - d.d_translation).cwiseAbs().maxCoeff() < 1e-7);
      }
    }
  }
}

TEST_CASE("error-induced pose") {
  const RigidTransform p = RigidTransform::from_axis_angle({0.1, 0.2, -0.3}, {0.55, 0, 0});
  const RigidTransform same = error_induced_pose(p, 1.0);
  CHECK(pose_distance(same, p) == 0.0);
  const RigidTransform e = error_induced_pose(p, 5.5);
  CHECK((e.translation() - Eigen::Vector3d(0.1, 0, 0)).norm() < 1e-15);
  CHECK(e.rotation() == p.rotation());
  CHECK(e.orthonormality_error() == p.orthonormality_error());
  const RigidTransform rot_only = RigidTransform::from_axis_angle({0, 0.4, 0});
  for (double a : {0.3, 1.0, 5.5, 40.0}) CHECK(pose_distance(error_induced_pose(rot_only, a), rot_only) == 0.0);
  CHECK_THROWS_AS(error_induced_pose(p, 0.0), ConfigError);
  CHECK_THROWS_AS(error_induced_pose(p, -2.0), ConfigError);
}

TEST_CASE("drift simulation") {
  SUBCASE("oracle: both curves are zero") {
    const auto rows = simulate_drift(PoseEstimator::oracle(straight(12, {0.03, 0, 0.07})), 7);
    REQUIRE(rows.size() == 14);
    for (const auto& r : rows) CHECK(r.mean_error < 1e-15);
  }
  SUBCASE("quadratic drift: direct/incremental ratio equals n") {
    DriftModel drift;
    drift.rotation_noise_deg = 0.0;
    const double b = 0.08;
    const auto rows = simulate_drift(PoseEstimator::noisy_oracle(straight(12, {0, 0, b}), drift), 7);
    for (int n = 1; n <= 7; ++n) {
      const DriftRow& d = rows[static_cast<std::size_t>(2 * (n - 1))];
      const DriftRow& i = rows[static_cast<std::size_t>(2 * (n - 1) + 1)];
      REQUIRE(d.policy == "direct");
      REQUIRE(i.policy == "incremental");
      CHECK(d.separation == n);
      CHECK(i.mean_error == doctest::Approx(n * 0.5 * b * b).epsilon(1e-9));
      CHECK(d.mean_error == doctest::Approx(0.5 * (n * b) * (n * b)).epsilon(1e-9));
      if (n == 1) CHECK(d.mean_error == doctest::Approx(i.mean_error).epsilon(1e-12));
      if (n >= 2) CHECK(d.mean_error / i.mean_error == doctest::Approx(n).epsilon(1e-9));
    }
  }
  SUBCASE("superlinear drift with rotation noise: incremental beats direct for n >= 2") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      DriftModel drift;
      drift.seed = seed;
      drift.p = 1.5;
      const auto rows = simulate_drift(PoseEstimator::noisy_oracle(straight(15, {0.04, 0, 0.06}), drift), 7);
      for (std::size_t j = 2; j < rows.size(); j += 2) CHECK(rows[j + 1].mean_error < rows[j].mean_error);
    }
  }
  CHECK_THROWS_AS(simulate_drift(PoseEstimator::oracle(straight(5, {0, 0, 1})), 5), ConfigError);
}

TEST_CASE("estimator bookkeeping") {
  CHECK(estimator_kind_from_string("noisy_oracle") == EstimatorKind::noisy_oracle);
  CHECK_THROWS_AS(estimator_kind_from_string("posenet"), ConfigError);
  const PoseEstimator est = PoseEstimator::oracle(straight(3, {0, 0, 1}));
  CHECK_THROWS_AS(est.estimate(0, 3), DataError);
  CHECK_THROWS_AS(est.stereo(0), DataError);
  DriftModel bad;
  bad.p = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
