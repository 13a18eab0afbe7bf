#pragma once

// 3D rotation construction (yaw-pitch-roll product), rigid-body transforms,
// and random pose sampling for the simulator.

#include <cmath>
#include <random>
#include <stdexcept>

#include "rbl/core.hpp"

namespace rbl {

template <class S>
struct Pose {
  Vec3<S> angles;  // radians: (theta_x, theta_y, theta_z)
  Vec3<S> t;       // meters
};

template <class S>
Mat3<S> rotation_x(S a) {
  const S c = std::cos(a), s = std::sin(a);
  Mat3<S> q;
  q << 1, 0, 0, 0, c, -s, 0, s, c;
  return q;
}

template <class S>
Mat3<S> rotation_y(S a) {
  const S c = std::cos(a), s = std::sin(a);
  Mat3<S> q;
  q << c, 0, s, 0, 1, 0, -s, 0, c;
  return q;
}

template <class S>
Mat3<S> rotation_z(S a) {
  const S c = std::cos(a), s = std::sin(a);
  Mat3<S> q;
  q << c, -s, 0, s, c, 0, 0, 0, 1;
  return q;
}

// Q = Qz(theta_z) * Qy(theta_y) * Qx(theta_x).
template <class S>
Mat3<S> rotation_from_angles(const Vec3<S>& angles) {
  return Mat3<S>(rotation_z(angles[2]) * rotation_y(angles[1]) *
                 rotation_x(angles[0]));
}

// Normalize an angle into [-pi, pi].
template <class S>
S wrap_angle(S a) {
  const S two_pi = S(2) * pi_v<S>;
  a = std::fmod(a, two_pi);
  if (a > pi_v<S>) a -= two_pi;
  if (a < -pi_v<S>) a += two_pi;
  return a;
}

// S = Q C + t 1^T, column n = Q c_n + t.
template <class S, class Derived>
Mat3X<S> transform_body(const Eigen::MatrixBase<Derived>& conformation,
                        const Mat3<S>& q, const Vec3<S>& t) {
  return (q * conformation).colwise() + t;
}

// Angles i.i.d. N(0, phi_theta), variance given in squared degrees;
// translation entries i.i.d. N(0, phi_t) in square meters.
// Draw order is fixed (3 angles, then 3 translation entries) so that a
// seeded generator reproduces the same pose.
template <class S, class Rng>
Pose<S> sample_pose(S phi_theta_deg2, S phi_t_m2, Rng& rng) {
  if (!(phi_theta_deg2 > S(0)) || !(phi_t_m2 > S(0)))
    throw std::invalid_argument("sample_pose: variances must be positive");
  std::normal_distribution<S> unit(S(0), S(1));
  const S sd_theta = deg_to_rad(std::sqrt(phi_theta_deg2));
  const S sd_t = std::sqrt(phi_t_m2);
  Pose<S> pose;
  for (int i = 0; i < 3; ++i) pose.angles[i] = sd_theta * unit(rng);
  for (int i = 0; i < 3; ++i) pose.t[i] = sd_t * unit(rng);
  return pose;
}

}  // namespace rbl
