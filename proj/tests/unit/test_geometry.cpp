#include <cmath>
#include <random>

#include <doctest.h>

#include "boostdepth/error.hpp"
#include "boostdepth/geometry.hpp"
#include "helpers.hpp"

using namespace boostdepth;

TEST_CASE("intrinsics validation") {
  CHECK_NOTHROW(Intrinsics{100, 100, 64, 48, 128, 96}.validate());
  CHECK_THROWS_AS(Intrinsics({0, 100, 64, 48, 128, 96}).validate(), ConfigError);
  CHECK_THROWS_AS(Intrinsics({100, -1, 64, 48, 128, 96}).validate(), ConfigError);
  CHECK_THROWS_AS(Intrinsics({100, 100, 128, 48, 128, 96}).validate(), ConfigError);
  CHECK_THROWS_AS(Intrinsics({100, 100, 10, -0.5, 128, 96}).validate(), ConfigError);
}

TEST_CASE("rigid transform algebra") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.7);
  auto random_pose = [&] {
    return RigidTransform::from_axis_angle({n(rng), n(rng), n(rng)}, {n(rng), n(rng), n(rng)});
  };
  for (int i = 0; i < 200; ++i) {
    const RigidTransform a = random_pose();
    const RigidTransform b = random_pose();
    const RigidTransform c = random_pose();
    CHECK(a.orthonormality_error() < 1e-9);
    const RigidTransform l = (a * b) * c;
    const RigidTransform r = a * (b * c);
    CHECK((l.rotation() - r.rotation()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((l.translation() - r.translation()).cwiseAbs().maxCoeff() < 1e-12);
    const RigidTransform inv_ab = (a * b).inverse();
    const RigidTransform ba = b.inverse() * a.inverse();
    CHECK((inv_ab.rotation() - ba.rotation()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((inv_ab.translation() - ba.translation()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("axis-angle and exponential map") {
  const double angle = 0.3;
  const Eigen::Matrix3d r = rotation_from_axis_angle({0.0, angle, 0.0});
  Eigen::Matrix3d expected;
  expected << std::cos(angle), 0, std::sin(angle), 0, 1, 0, -std::sin(angle), 0, std::cos(angle);
  CHECK((r - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(rotation_angle(r) == doctest::Approx(angle).epsilon(1e-12));

  // Pure translation twist.
  Vector6d twist = Vector6d::Zero();
  twist << 0.1, -0.2, 0.3, 0.0, 0.0, 0.0;
  const RigidTransform e = RigidTransform::exp(twist);
  CHECK((e.translation() - Eigen::Vector3d(0.1, -0.2, 0.3)).norm() < 1e-15);
  // Rotation about z by pi/2 with translation along the axis: the screw motion keeps t on the axis.
  twist << 0.0, 0.0, 1.0, 0.0, 0.0, std::acos(-1.0) / 2.0;
  const RigidTransform s = RigidTransform::exp(twist);
  CHECK((s.translation() - Eigen::Vector3d(0, 0, 1)).norm() < 1e-12);
  CHECK(s.orthonormality_error() < 1e-12);
}

TEST_CASE("project: identity pose reproduces the pixel grid") {
  const Intrinsics k = testutil::camera(20, 12, 15.0);
  DepthMap d = DepthMap::constant(20, 12, 3.0);
  d.values(4, 5) = 7.5;
  const Projection p = project(d, RigidTransform::identity(), k);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 20; ++x) {
      CHECK(p.in_front(x, y) == 1);
      CHECK(p.coords(x, y, 0) == doctest::Approx(x).epsilon(1e-14));
      CHECK(p.coords(x, y, 1) == doctest::Approx(y).epsilon(1e-14));
    }
  }
}

TEST_CASE("project: closed-form lateral translation") {
  const Intrinsics k{100, 100, 64, 48, 128, 96};
  const DepthMap d = DepthMap::constant(128, 96, 10.0);
  // Camera moves +1 along x, so in the source frame x' = x - 1.
  const RigidTransform pose = RigidTransform::from_translation({-1.0, 0.0, 0.0});
  const Projection p = project(d, pose, k);
  CHECK(p.coords(64, 48, 0) == doctest::Approx(64.0 - 100.0 * (1.0 / 10.0)));
  CHECK(p.coords(64, 48, 1) == doctest::Approx(48.0));
}

TEST_CASE("project: points behind the camera are flagged") {
  const Intrinsics k = testutil::camera(8, 6, 10.0);
  const DepthMap d = DepthMap::constant(8, 6, 2.0);
  const Projection p = project(d, RigidTransform::from_translation({0, 0, -2.5}), k);
  for (auto f : p.in_front.data()) CHECK(f == 0);
  CHECK(std::isnan(p.coords(3, 3, 0)));

  DepthMap bad = DepthMap::constant(9, 6, 2.0);
  CHECK_THROWS_AS(project(bad, RigidTransform(), k), ConfigError);
}

TEST_CASE("sample_bilinear basics") {
  ImageBuffer img(2, 2, 1);
  img(0, 0) = 0.0;
  img(1, 0) = 1.0;
  img(0, 1) = 0.25;
  img(1, 1) = 0.75;
  Grid<double> coords(3, 1, 2);
  coords(0, 0, 0) = 0.5;
  coords(0, 0, 1) = 0.0;
  coords(1, 0, 0) = -0.6;
  coords(1, 0, 1) = 0.0;
  coords(2, 0, 0) = 0.5;
  coords(2, 0, 1) = 0.5;
  const Sampled s = sample_bilinear(img, coords);
  CHECK(s.valid(0, 0) == 1);
  CHECK(s.image(0, 0) == 0.5);
  CHECK(s.valid(1, 0) == 0);
  CHECK(s.valid(2, 0) == 1);
  CHECK(s.image(2, 0) == doctest::Approx(0.5));
}

TEST_CASE("sample_bilinear: integer grid is exact, far border is masked") {
  std::mt19937_64 rng(5);
  const ImageBuffer img = testutil::random_image(9, 7, 3, rng);
  Grid<double> coords(9, 7, 2);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 9; ++x) {
      coords(x, y, 0) = x;
      coords(x, y, 1) = y;
    }
  }
  Sampled s = sample_bilinear(img, coords);
  CHECK(s.image == img);
  coords(8, 6, 0) = 8.01;
  coords(0, 0, 1) = std::nan("");
  s = sample_bilinear(img, coords);
  CHECK(s.valid(8, 6) == 0);
  CHECK(s.valid(0, 0) == 0);
  CHECK(s.valid(4, 3) == 1);
}

TEST_CASE("sample_bilinear is linear in the source image") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 12.0);
  const ImageBuffer a = testutil::random_image(12, 10, 3, rng);
  const ImageBuffer b = testutil::random_image(12, 10, 3, rng);
  Grid<double> coords(30, 30, 2);
  for (auto& c : coords.data()) c = u(rng);
  const double wa = 0.37;
  const double wb = -1.6;
  ImageBuffer mix(12, 10, 3);
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = wa * a[i] + wb * b[i];
  const Sampled sa = sample_bilinear(a, coords);
  const Sampled sb = sample_bilinear(b, coords);
  const Sampled sm = sample_bilinear(mix, coords);
  CHECK(sa.valid == sm.valid);
  for (std::size_t i = 0; i < sm.image.size(); ++i) {
    CHECK(std::abs(sm.image[i] - (wa * sa.image[i] + wb * sb.image[i])) < 1e-12);
  }
}

TEST_CASE("synthesize: identity pose is the identity map") {
  std::mt19937_64 rng(2);
  const Intrinsics k = testutil::camera(16, 12, 14.0);
  const ImageBuffer img = testutil::random_image(16, 12, 3, rng);
  const Sampled s = synthesize(DepthMap::constant(16, 12, 4.0), img, RigidTransform(), k);
  CHECK(s.image == img);
  for (auto v : s.valid.data()) CHECK(v == 1);
}

TEST_CASE("synthesize: fronto-parallel plane under lateral motion") {
  // Texture painted on a plane at depth z. A camera shifted by tx sees the texture
  // shifted by fx*tx/z pixels; rendering both views analytically gives the oracle.
  const int w = 64;
  const int h = 48;
  const Intrinsics k = testutil::camera(w, h, 50.0);
  const double z = 5.0;
  const double tx = 0.3;
  auto texture = [](double X, double Y) { return 0.5 + 0.3 * std::sin(2.1 * X) * std::cos(1.7 * Y); };
  auto render = [&](double cam_x) {
    ImageBuffer img(w, h, 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Eigen::Vector3d ray = k.ray(x, y);
        img(x, y) = texture(cam_x + z * ray.x(), z * ray.y());
      }
    }
    return img;
  };
  const ImageBuffer target = render(0.0);
  const ImageBuffer source = render(tx);
  const Sampled s = synthesize(DepthMap::constant(w, h, z), source,
                               RigidTransform::from_translation({-tx, 0.0, 0.0}), k);
  double err = 0.0;
  int n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!s.valid(x, y)) continue;
      err += std::abs(s.image(x, y) - target(x, y));
      ++n;
    }
  }
  CHECK(n > w * h / 2);
  CHECK(err / n < 1e-3);
  // Pixels whose source position leaves the image are masked (shift of 3 px to the left).
  CHECK(s.valid(1, 20) == 0);
  CHECK(s.valid(w - 1, 20) == 1);
}

TEST_CASE("round trip: forward then inverse projection recovers the grid") {
  const int w = 40;
  const int h = 30;
  const Intrinsics k = testutil::camera(w, h, 35.0);
  Grid<double> depth(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) depth(x, y) = 3.0 + 0.02 * x + 0.01 * y;
  }
  const RigidTransform pose = RigidTransform::from_axis_angle({0.01, -0.02, 0.005}, {0.05, -0.02, 0.03});
  const Projection p = project(DepthMap(depth, Mask(w, h, 1, 1)), pose, k);
  for (int y = 2; y < h - 2; y += 3) {
    for (int x = 2; x < w - 2; x += 3) {
      const Eigen::Vector3d src = pose * (depth(x, y) * k.ray(x, y));
      const Eigen::Vector3d back = pose.inverse() * src;
      const Eigen::Vector2d uv = k.project(back);
      CHECK(std::abs(uv.x() - x) < 1e-6);
      CHECK(std::abs(uv.y() - y) < 1e-6);
      const Eigen::Vector2d fwd = k.project(src);
      CHECK(std::abs(fwd.x() - p.coords(x, y, 0)) < 1e-9);
    }
  }
}

TEST_CASE("depth Jacobian of synthesize matches central differences") {
  const int w = 32;
  const int h = 24;
  const Intrinsics k = testutil::camera(w, h, 30.0);
  const ImageBuffer source = testutil::smooth_image(w, h);
  Grid<double> depth(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) depth(x, y) = 4.0 + 0.5 * std::sin(0.2 * x) + 0.1 * y;
  }
  const DepthMap d(depth, Mask(w, h, 1, 1));
  const RigidTransform pose = RigidTransform::from_axis_angle({0.0, 0.03, 0.0}, {0.2, 0.05, 0.1});
  const SynthesisJacobian jac = synthesize_with_jacobian(d, source, pose, k);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> ux(0, w - 1);
  std::uniform_int_distribution<int> uy(0, h - 1);
  int checked = 0;
  double worst = 0.0;
  while (checked < 100) {
    const int x = ux(rng);
    const int y = uy(rng);
    if (!jac.reconstruction.valid(x, y)) continue;
    const double step = 1e-4 * depth(x, y);
    DepthMap plus = d;
    DepthMap minus = d;
    plus.values(x, y) += step;
    minus.values(x, y) -= step;
    const Sampled sp = synthesize(plus, source, pose, k);
    const Sampled sm = synthesize(minus, source, pose, k);
    if (!sp.valid(x, y) || !sm.valid(x, y)) continue;
    const double numeric = (sp.image(x, y) - sm.image(x, y)) / (2.0 * step);
    const double analytic = jac.d_depth(x, y);
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic) / scale);
    ++checked;
  }
  CHECK(worst < 1e-3);
  CHECK(jac.reconstruction.image == synthesize(d, source, pose, k).image);
}

TEST_CASE("backproject") {
  const Intrinsics k{10, 10, 2, 1, 5, 3};
  DepthMap d = DepthMap::constant(5, 3, 1.0);
  auto pts = backproject(d, k);
  REQUIRE(pts.size() == 15);
  // Principal point pixel (2, 1) is index 1*5 + 2.
  CHECK((pts[7] - Eigen::Vector3d(0, 0, 1)).norm() == 0.0);

  d.values(4, 0) = 2.0;
  d.valid(0, 0) = 0;
  d.valid(1, 2) = 0;
  pts = backproject(d, k);
  REQUIRE(pts.size() == 13);
  // (4, 0) at depth 2: ((4-2)/10*2, (0-1)/10*2, 2) = (0.4, -0.2, 2); it is the 3rd valid point.
  CHECK((pts[3] - Eigen::Vector3d(0.4, -0.2, 2.0)).norm() < 1e-15);

  const RigidTransform pose = RigidTransform::from_translation({1, 2, 3});
  const auto moved = backproject(d, k, pose);
  CHECK((moved[3] - Eigen::Vector3d(1.4, 1.8, 5.0)).norm() < 1e-15);
}
