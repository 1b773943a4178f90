// Copyright 2026 The HoloProxy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <random>
#include <vector>

#include "holoproxy/anchor.hpp"

using namespace holoproxy;

namespace {

Eigen::Matrix4d to_matrix(const Pose& p) {
  Eigen::Quaterniond q(p.orientation.w, p.orientation.x, p.orientation.y, p.orientation.z);
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = q.toRotationMatrix();
  m.topRightCorner<3, 1>() = Eigen::Vector3d(p.position.x, p.position.y, p.position.z);
  return m;
}

Pose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-2, 2);
  std::normal_distribution<double> n(0, 1);
  Quaternion q{n(rng), n(rng), n(rng), n(rng)};
  return {{pos(rng), pos(rng), pos(rng)}, q.normalized()};
}

void expect_matches(const Pose& p, const Eigen::Matrix4d& m, double tol) {
  const Eigen::Matrix4d got = to_matrix(p);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(got(r, c), m(r, c), tol) << r << "," << c;
  }
}

}  // namespace

TEST(Compose, IdentityIsNeutral) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_pose(rng);
    const auto l = compose(Pose::identity(), p);
    const auto r = compose(p, Pose::identity());
    expect_matches(l, to_matrix(p), 1e-12);
    expect_matches(r, to_matrix(p), 1e-12);
  }
}

TEST(Compose, Translations) {
  EXPECT_EQ(compose(Pose::translation(1, 0, 0), Pose::translation(0, 1, 0)), Pose::translation(1, 1, 0));
}

TEST(Compose, MatchesHomogeneousMatrices) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    expect_matches(compose(a, b), to_matrix(a) * to_matrix(b), 1e-9);
    const auto left = compose(compose(a, b), c);
    const auto right = compose(a, compose(b, c));
    const Eigen::Matrix4d m = to_matrix(a) * to_matrix(b) * to_matrix(c);
    expect_matches(left, m, 1e-9);
    expect_matches(right, m, 1e-9);
    EXPECT_NEAR(left.orientation.norm(), 1.0, 1e-9);
  }
}

TEST(Compose, NormStaysUnitOverLongChains) {
  std::mt19937_64 rng(3);
  Pose acc = Pose::identity();
  for (int i = 0; i < 10000; ++i) {
    acc = compose(acc, random_pose(rng));
    ASSERT_NEAR(acc.orientation.norm(), 1.0, 1e-9);
    ASSERT_TRUE(acc.valid());
  }
}

TEST(Quaternion, RotateMatchesEigen) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 1000; ++i) {
    const auto q = random_pose(rng).orientation;
    const Vec3 v{u(rng), u(rng), u(rng)};
    const Eigen::Vector3d want = Eigen::Quaterniond(q.w, q.x, q.y, q.z) * Eigen::Vector3d(v.x, v.y, v.z);
    const auto got = q.rotate(v);
    EXPECT_NEAR(got.x, want.x(), 1e-12);
    EXPECT_NEAR(got.y, want.y(), 1e-12);
    EXPECT_NEAR(got.z, want.z(), 1e-12);
  }
}

TEST(Hologram, IdentityProxySitsAtMount) {
  const auto mount = MountOffset::over_selection_area();
  EXPECT_EQ(hologram_pose(Pose::identity(), mount), mount.offset_pose);
}

TEST(Hologram, QuarterTurnAboutVertical) {
  const Pose proxy{{0, 0, 0}, Quaternion::from_axis_angle({0, 1, 0}, M_PI / 2)};
  const MountOffset mount{Pose::translation(-0.04, 0, 0)};
  const auto h = hologram_pose(proxy, mount);
  const Eigen::Matrix4d want = to_matrix(proxy) * to_matrix(mount.offset_pose);
  expect_matches(h, want, 1e-12);
  // +90 deg about y takes -x to +z.
  EXPECT_NEAR(h.position.x, 0.0, 1e-15);
  EXPECT_NEAR(h.position.z, 0.04, 1e-15);
}

TEST(Hologram, TranslationEquivarianceExactOnDyadics) {
  // Half turns and third turns about diagonals rotate dyadic vectors without rounding.
  const std::vector<Quaternion> exact = {{1, 0, 0, 0},       {0, 1, 0, 0},         {0, 0, 1, 0},
                                         {0, 0, 0, 1},       {0.5, 0.5, 0.5, 0.5}, {0.5, -0.5, 0.5, -0.5},
                                         {-0.5, 0.5, 0.5, 0.5}};
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> k(-64, 64);
  std::uniform_int_distribution<std::size_t> pick(0, exact.size() - 1);
  const auto mount = MountOffset::over_selection_area();
  const MountOffset dyadic{Pose::translation(-0.0625, 0.125, 0)};
  for (int i = 0; i < 1000; ++i) {
    const Pose proxy{{k(rng) / 8.0, k(rng) / 8.0, k(rng) / 8.0}, exact[pick(rng)]};
    const Vec3 dt{k(rng) / 4.0, k(rng) / 4.0, k(rng) / 4.0};
    Pose moved = proxy;
    moved.position = proxy.position + dt;
    EXPECT_EQ(hologram_pose(moved, dyadic).position - hologram_pose(proxy, dyadic).position, dt);
    EXPECT_EQ(hologram_pose(moved, mount).orientation, hologram_pose(proxy, mount).orientation);
  }
}

TEST(Hologram, TranslationEquivarianceRandom) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  const auto mount = MountOffset::over_selection_area();
  for (int i = 0; i < 10000; ++i) {
    const auto proxy = random_pose(rng);
    const Vec3 dt{u(rng), u(rng), u(rng)};
    Pose moved = proxy;
    moved.position = proxy.position + dt;
    const auto d = hologram_pose(moved, mount).position - hologram_pose(proxy, mount).position;
    EXPECT_NEAR(d.x, dt.x, 1e-12);
    EXPECT_NEAR(d.y, dt.y, 1e-12);
    EXPECT_NEAR(d.z, dt.z, 1e-12);
    EXPECT_EQ(hologram_pose(moved, mount).orientation, hologram_pose(proxy, mount).orientation);
  }
}

TEST(Pose, ValidityChecksNorm) {
  EXPECT_TRUE(Pose::identity().valid());
  Pose p;
  p.orientation = {1.0 + 1e-6, 0, 0, 0};
  EXPECT_FALSE(p.valid());
  p.position.x = NAN;
  EXPECT_FALSE(p.valid());
}

TEST(Jitter, ZeroSigmaIsIdentityAndSeedsReproduce) {
  PoseJitter off(0.0, 1);
  const Pose p = Pose::translation(0.1, 0.2, 0.3);
  EXPECT_EQ(off.apply(p), p);
  PoseJitter a(0.01, 9), b(0.01, 9);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.apply(p), y = b.apply(p);
    EXPECT_EQ(x, y);
    EXPECT_NE(x, p);
    EXPECT_EQ(x.orientation, p.orientation);
  }
}

TEST(Jitter, SampleSpreadMatchesSigma) {
  PoseJitter j(0.01, 3);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double d = j.apply(Pose::identity()).position.x;
    sum += d;
    sq += d * d;
  }
  const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.0005);
  EXPECT_NEAR(sd, 0.01, 0.0005);
}
