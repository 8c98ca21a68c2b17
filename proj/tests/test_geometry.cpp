#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "magicvo/geometry.hpp"
#include "magicvo/tensor.hpp"

using namespace magicvo::geometry;
using std::numbers::pi;

namespace {

Vec3 random_euler(std::mt19937_64& rng, double pitch_margin) {
  std::uniform_real_distribution<double> ang(-pi, pi);
  std::uniform_real_distribution<double> pitch(-pi / 2 + pitch_margin, pi / 2 - pitch_margin);
  return {ang(rng), pitch(rng), ang(rng)};
}

SE3 random_se3(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(-5, 5);
  return {euler_to_rotation(random_euler(rng, 0.01)), Vec3(t(rng), t(rng), t(rng))};
}

// Elementary-axis rotations written out independently.
Mat3 rx(double a) {
  Mat3 m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return m;
}
Mat3 ry(double a) {
  Mat3 m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return m;
}
Mat3 rz(double a) {
  Mat3 m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}

}  // namespace

TEST_CASE("euler_to_rotation basics") {
  CHECK((euler_to_rotation(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);
  const Vec3 y_axis = euler_to_rotation({0, 0, pi / 2}) * Vec3::UnitX();
  CHECK((y_axis - Vec3::UnitY()).norm() < 1e-15);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vec3 e = random_euler(rng, 0.0);
    const Mat3 r = euler_to_rotation(e);
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-12);
    CHECK((r - rz(e.z()) * ry(e.y()) * rx(e.x())).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("rotation_to_euler roundtrip away from gimbal lock") {
  CHECK(rotation_to_euler(Mat3::Identity()).norm() == 0.0);
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 5000; ++i) {
    const Vec3 e = random_euler(rng, 1e-3);
    const Vec3 back = rotation_to_euler(euler_to_rotation(e));
    worst = std::max(worst, (euler_to_rotation(back) - euler_to_rotation(e)).norm());
    if (std::abs(e.y()) < pi / 2 - 0.1) CHECK((back - e).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(back.y()) <= pi / 2);
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("rotation_to_euler at gimbal lock sets roll to zero") {
  for (double pitch : {pi / 2, -pi / 2}) {
    const Mat3 r = euler_to_rotation({0.4, pitch, -1.1});
    const Vec3 e = rotation_to_euler(r);
    CHECK(e.x() == 0.0);
    CHECK(std::abs(std::abs(e.y()) - pi / 2) < 1e-7);
    CHECK((euler_to_rotation(e) - r).norm() < 1e-7);
  }
}

TEST_CASE("rotation_to_euler rejects non-orthonormal input") {
  Mat3 m = Mat3::Identity();
  m(0, 0) = 1.01;
  CHECK_THROWS_AS(rotation_to_euler(m), magicvo::ContractError);
}

TEST_CASE("relative_pose examples") {
  const SE3 a{euler_to_rotation({0.1, -0.2, 0.3}), Vec3(1, 2, 3)};
  const Pose6DoF same = relative_pose(a, a);
  CHECK(same.translation.norm() < 1e-15);
  CHECK(same.euler.norm() < 1e-15);

  const Pose6DoF shift = relative_pose(SE3::identity(), SE3{Mat3::Identity(), Vec3(1, 2, 3)});
  CHECK(shift.translation == Vec3(1, 2, 3));
  CHECK(shift.euler == Vec3::Zero());

  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const SE3 p = random_se3(rng), q = random_se3(rng);
    const SE3 rebuilt = p * to_se3(relative_pose(p, q));
    CHECK((rebuilt.rotation - q.rotation).norm() < 1e-9);
    CHECK((rebuilt.translation - q.translation).norm() < 1e-9);
  }
}

TEST_CASE("compose_trajectory examples") {
  const Trajectory still = compose_trajectory(std::vector<Pose6DoF>(5));
  REQUIRE(still.size() == 6);
  for (const auto& p : still.poses) {
    CHECK(p.translation.norm() == 0.0);
    CHECK((p.rotation - Mat3::Identity()).norm() == 0.0);
  }
  std::vector<Pose6DoF> steps(7, Pose6DoF{Vec3(1, 0, 0), Vec3::Zero()});
  const Trajectory line = compose_trajectory(steps);
  for (std::size_t i = 0; i < line.size(); ++i) {
    CHECK(line.poses[i].translation == Vec3(static_cast<double>(i), 0, 0));
  }
  CHECK(compose_trajectory({}).size() == 1);
}

TEST_CASE("decompose then compose reproduces a 1000-pose trajectory") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> small(-0.2, 0.2), step(-1, 1);
  Trajectory truth;
  truth.poses.push_back(SE3::identity());
  for (int i = 0; i < 999; ++i) {
    const Pose6DoF rel{Vec3(step(rng), step(rng), step(rng)), Vec3(small(rng), small(rng), small(rng))};
    SE3 next = truth.poses.back() * to_se3(rel);
    next.rotation = nearest_rotation(next.rotation);
    truth.poses.push_back(next);
  }
  const Trajectory rebuilt = compose_trajectory(decompose_trajectory(truth));
  REQUIRE(rebuilt.size() == truth.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    worst = std::max(worst, (rebuilt.poses[i].translation - truth.poses[i].translation).norm());
    worst = std::max(worst, (rebuilt.poses[i].rotation - truth.poses[i].rotation).norm());
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("composition is associative") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const SE3 a = random_se3(rng), b = random_se3(rng), c = random_se3(rng);
    const SE3 l = (a * b) * c, r = a * (b * c);
    CHECK((l.rotation - r.rotation).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((l.translation - r.translation).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("long compositions stay orthonormal") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> a(-0.3, 0.3);
  std::vector<Pose6DoF> rel(10000);
  for (auto& r : rel) r = {Vec3(a(rng), a(rng), a(rng)), Vec3(a(rng), a(rng), a(rng))};
  const Trajectory t = compose_trajectory(rel);
  double worst = 0.0;
  for (const auto& p : t.poses) worst = std::max(worst, orthonormality_error(p.rotation));
  CHECK(worst < 1e-9);
}

TEST_CASE("rotation_angle and nearest_rotation") {
  CHECK(rotation_angle(Mat3::Identity()) == 0.0);
  CHECK(rotation_angle(euler_to_rotation({0, 0, 0.5})) == doctest::Approx(0.5).epsilon(1e-12));
  Mat3 noisy = euler_to_rotation({0.2, 0.1, -0.3});
  noisy(0, 1) += 1e-4;
  CHECK(orthonormality_error(nearest_rotation(noisy)) < 1e-12);
  CHECK((SE3{noisy, Vec3(1, 2, 3)}.inverse() * SE3{noisy, Vec3(1, 2, 3)}).translation.norm() < 1e-3);
}

TEST_CASE("rotation_angle agrees with the trace formula") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> a(-1.5, 1.5);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 r = euler_to_rotation({a(rng), a(rng), a(rng)});
    const double ref = std::acos(std::clamp((r.trace() - 1) / 2, -1.0, 1.0));
    CHECK(rotation_angle(r) == doctest::Approx(ref).epsilon(1e-9));
  }
  CHECK(rotation_angle(euler_to_rotation({1e-9, 0, 0})) == doctest::Approx(1e-9).epsilon(1e-6));
  CHECK(rotation_angle(euler_to_rotation({0, 0, 3.14159})) == doctest::Approx(3.14159).epsilon(1e-9));
}
