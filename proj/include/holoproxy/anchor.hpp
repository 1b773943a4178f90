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

#pragma once

#include <cmath>
#include <random>

namespace holoproxy {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const { return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x}; }

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Rotation as a unit quaternion, scalar first.
struct Quaternion {
  double w = 1, x = 0, y = 0, z = 0;

  static Quaternion identity() { return {}; }

  static Quaternion from_axis_angle(const Vec3& axis, double radians) {
    const double n = std::sqrt(axis.dot(axis));
    const double s = std::sin(radians / 2) / n;
    return {std::cos(radians / 2), axis.x * s, axis.y * s, axis.z * s};
  }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quaternion normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Quaternion conjugate() const { return {w, -x, -y, -z}; }

  /// Hamilton product: applying the result rotates by `o` first, then by *this.
  Quaternion operator*(const Quaternion& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
  }

  Vec3 rotate(const Vec3& v) const {
    const Vec3 u{x, y, z};
    const Vec3 t = u.cross(v) * 2.0;
    return v + t * w + u.cross(t);
  }

  friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

/// Rigid transform in meters: child frame expressed in the parent frame.
struct Pose {
  static constexpr double kNormTolerance = 1e-9;

  Vec3 position;
  Quaternion orientation;

  static Pose identity() { return {}; }
  static Pose translation(double x, double y, double z) { return {{x, y, z}, Quaternion::identity()}; }

  bool valid() const {
    return std::isfinite(position.x) && std::isfinite(position.y) && std::isfinite(position.z) &&
           std::abs(orientation.norm() - 1.0) <= kNormTolerance;
  }

  Vec3 transform_point(const Vec3& p) const { return position + orientation.rotate(p); }

  friend bool operator==(const Pose&, const Pose&) = default;
};

inline Pose compose(const Pose& parent, const Pose& child) {
  return {parent.position + parent.orientation.rotate(child.position),
          (parent.orientation * child.orientation).normalized()};
}

/// Hologram frame relative to the proxy frame.
struct MountOffset {
  Pose offset_pose;

  /// Chart base centred over the selection (left) half of a ~160 mm landscape phone,
  /// sitting on the screen plane.
  static MountOffset over_selection_area() { return {Pose::translation(-0.04, 0.0, 0.0)}; }
};

/// The hologram rides rigidly on the proxy.
inline Pose hologram_pose(const Pose& proxy, const MountOffset& mount) {
  return compose(proxy, mount.offset_pose);
}

/// Zero-mean Gaussian position noise standing in for marker-tracking jitter. sigma = 0
/// leaves poses untouched.
class PoseJitter {
 public:
  explicit PoseJitter(double sigma_m = 0.0, std::uint64_t seed = 0) : sigma_(sigma_m), rng_(seed) {}

  double sigma() const { return sigma_; }

  Pose apply(const Pose& pose) {
    if (sigma_ <= 0.0) return pose;
    std::normal_distribution<double> noise(0.0, sigma_);
    Pose out = pose;
    out.position.x += noise(rng_);
    out.position.y += noise(rng_);
    out.position.z += noise(rng_);
    return out;
  }

 private:
  double sigma_;
  std::mt19937_64 rng_;
};

}  // namespace holoproxy
