#include <doctest.h>

#include <cmath>
#include <random>

#include "mvalign/errors.hpp"
#include "mvalign/geometry.hpp"
#include "support.hpp"

using namespace mvalign;
using testing::random_rotation;
using testing::random_vec3;

namespace {

CameraFrame diag100() {
  CameraFrame f;
  f.K << 100, 0, 50, 0, 100, 50, 0, 0, 1;
  f.image_width = 100;
  f.image_height = 100;
  return f;
}

// Pinhole projection written out by hand.
Vec2 pinhole(const Mat3& K, const Mat3& E_R, const Vec3& e_t, const Vec3& p_world) {
  const Vec3 c = E_R * p_world + e_t;
  const Vec3 h = K * c;
  return {h.x() / h.z(), h.y() / h.z()};
}

}  // namespace

TEST_CASE("object_to_world examples") {
  Pose9DoF p;
  CHECK((object_to_world(p, {1, 2, 3}) - Vec3(1, 2, 3)).norm() < 1e-15);
  p.t = {1, 0, 0};
  p.s = {2, 2, 2};
  CHECK((object_to_world(p, Vec3::Zero()) - Vec3(1, 0, 0)).norm() < 1e-15);
  Pose9DoF r;
  r.rotation = rot_z(EIGEN_PI / 2);
  CHECK((object_to_world(r, {1, 0, 0}) - Vec3(0, 1, 0)).norm() < 1e-15);
}

TEST_CASE("world_to_camera examples") {
  CameraFrame f;
  CHECK((world_to_camera(f, {1, 2, 3}) - Vec3(1, 2, 3)).norm() == 0.0);
  f.e_t = {0, 0, -1};
  CHECK((world_to_camera(f, {0, 0, 3}) - Vec3(0, 0, 2)).norm() == 0.0);

  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    CameraFrame g;
    g.E_R = random_rotation(rng).matrix();
    g.e_t = random_vec3(rng, -2, 2);
    const Vec3 a = random_vec3(rng, -5, 5), b = random_vec3(rng, -5, 5);
    CHECK(std::abs((world_to_camera(g, a) - world_to_camera(g, b)).norm() - (a - b).norm()) < 1e-12);
  }
}

TEST_CASE("project examples") {
  const CameraFrame f = diag100();
  CHECK((project(f, {0, 0, 1}) - Vec2(50, 50)).norm() == 0.0);
  CHECK((project(f, {1, 0, 2}) - Vec2(100, 50)).norm() == 0.0);
  CHECK_THROWS_AS(project(f, {0, 0, -1}), NonPositiveDepth);
  CHECK_THROWS_AS(project(f, {0, 0, 0}), NonPositiveDepth);
}

TEST_CASE("backproject examples") {
  CameraFrame f = diag100();
  CHECK((backproject(f, {50, 50}, 1.0) - Vec3(0, 0, 1)).norm() < 1e-15);
  f.e_t = {0, 0, -1};
  CHECK((backproject(f, {50, 50}, 2.0) - Vec3(0, 0, 3)).norm() < 1e-15);
  CHECK_THROWS_AS(backproject(f, {50, 50}, 0.0), NonPositiveDepth);
}

TEST_CASE("backproject is the right-inverse of project") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    CameraFrame f = testing::simple_frame();
    f.E_R = random_rotation(rng).matrix();
    f.e_t = random_vec3(rng, -1, 1);
    Vec3 pc = random_vec3(rng, -2, 2);
    pc.z() = testing::uniform(rng, 0.1, 10.0);
    const Vec3 world = f.E_R.transpose() * (pc - f.e_t);
    const Vec2 px = project(f, pc);
    const Vec3 back = backproject(f, px, pc.z());
    CHECK((back - world).norm() < 1e-9);
    CHECK((project(f, world_to_camera(f, back)) - px).norm() < 1e-9);
  }
}

TEST_CASE("composite projection matches a hand-written pinhole") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    CameraFrame f = testing::simple_frame();
    f.E_R = random_rotation(rng).matrix();
    Pose9DoF pose;
    pose.rotation = random_rotation(rng);
    pose.s = random_vec3(rng, 0.2, 2.0);
    pose.t = f.E_R.transpose() * Vec3(testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1), 6.0);
    const Vec3 v = random_vec3(rng, -0.5, 0.5);
    const Vec3 world = pose.t + pose.rotation.matrix() * pose.s.cwiseProduct(v);
    const Vec2 expect = pinhole(f.K, f.E_R, f.e_t, world);
    CHECK((project(f, world_to_camera(f, object_to_world(pose, v))) - expect).norm() < 1e-9);
  }
}

TEST_CASE("pure rotation preserves distances") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    Pose9DoF p;
    p.rotation = random_rotation(rng);
    const Vec3 a = random_vec3(rng, -3, 3), b = random_vec3(rng, -3, 3);
    CHECK(std::abs((object_to_world(p, a) - object_to_world(p, b)).norm() - (a - b).norm()) < 1e-9);
  }
}

TEST_CASE("geodesic_angle examples") {
  const UnitQuaternion q = UnitQuaternion::from_axis_angle({1, 2, 3}, 0.7);
  CHECK(geodesic_angle(q, q) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(geodesic_angle(UnitQuaternion::identity(), UnitQuaternion::from_axis_angle(Vec3::UnitY(), EIGEN_PI / 2)) ==
        doctest::Approx(90.0).epsilon(1e-12));
  const UnitQuaternion neg(-q.w(), -q.x(), -q.y(), -q.z());
  CHECK(geodesic_angle(q, neg) < 1e-6);
}

TEST_CASE("geodesic_angle is symmetric and satisfies the triangle inequality") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 300; ++i) {
    const UnitQuaternion a = random_rotation(rng), b = random_rotation(rng), c = random_rotation(rng);
    const double ab = geodesic_angle(a, b), ba = geodesic_angle(b, a);
    CHECK(std::abs(ab - ba) < 1e-9);
    CHECK(ab >= 0.0);
    CHECK(ab <= 180.0);
    CHECK(ab <= geodesic_angle(a, c) + geodesic_angle(c, b) + 1e-7);
  }
}

TEST_CASE("geodesic_angle agrees with the matrix trace formula") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 100; ++i) {
    const UnitQuaternion a = random_rotation(rng), b = random_rotation(rng);
    const Mat3 rel = a.matrix().transpose() * b.matrix();
    const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
    CHECK(geodesic_angle(a, b) == doctest::Approx(rad2deg(std::acos(c))).epsilon(1e-6));
  }
}

TEST_CASE("symmetric geodesic angle absorbs the symmetry orbit") {
  std::mt19937_64 rng(19);
  for (int m : {2, 4}) {
    for (int i = 0; i < 50; ++i) {
      const UnitQuaternion a = random_rotation(rng);
      const UnitQuaternion b = a * rot_z(2.0 * EIGEN_PI / m);
      CHECK(symmetric_geodesic_angle(a, b, m) < 1e-6);
    }
  }
  const UnitQuaternion a = random_rotation(rng);
  CHECK(symmetric_geodesic_angle(a, a * rot_z(1.234), kContinuousSymmetryOrder) < 1e-6);
  CHECK(symmetric_geodesic_angle(a, a * rot_z(EIGEN_PI), 1) == doctest::Approx(180.0));
}

TEST_CASE("quaternion construction normalizes and rejects degenerate input") {
  const UnitQuaternion q(2, 0, 0, 0);
  CHECK(q.w() == 1.0);
  CHECK_THROWS_AS(UnitQuaternion(0, 0, 0, 0), ValidationError);
  CHECK_THROWS_AS(UnitQuaternion(NAN, 0, 0, 1), ValidationError);
  std::mt19937_64 rng(23);
  for (int i = 0; i < 50; ++i) {
    const UnitQuaternion r = random_rotation(rng);
    CHECK(std::abs(r.coeffs().norm() - 1.0) < 1e-12);
    const UnitQuaternion back = UnitQuaternion::from_matrix(r.matrix());
    CHECK(geodesic_angle(r, back) < 1e-6);
  }
}

TEST_CASE("pose validation") {
  Pose9DoF p;
  CHECK_NOTHROW(p.validate());
  p.s = {1, 0, 1};
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.s = {1, 1, 1};
  p.t = {NAN, 0, 0};
  CHECK_THROWS_AS(p.validate(), ValidationError);
}
