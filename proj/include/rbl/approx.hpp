#pragma once

// Rotation-matrix linearizations used by the pose estimators.
//
// Two models express vec(Q) as an affine function gamma_vec + slope * theta
// of the current angle vector, given (for the quadratic model) the previous
// iterate theta_prev:
//   * small-angle:  sin t ~ t, cos t ~ 1  (first order in the angles)
//   * quadratic:    sin t ~ alpha*t_prev*t + beta*t,  cos t ~ gamma - delta*t_prev*t
// with the second model's constants fitted over [-pi/4, pi/4] and the sign
// of t_prev selecting alpha_plus / alpha_minus.
//
// Also builds the effective channel matrices of the stacked pose system:
// rows -2*(c_n (x) a_m)^T * slope for the rotation and -2*a_m^T for the
// translation, one row per (landmark, anchor) pair.

#include <atomic>
#include <cmath>
#include <cstdint>

#include "rbl/core.hpp"

namespace rbl {

template <class S>
struct QuadParams {
  S alpha_plus = S(-0.16884);   // sine product coefficient, theta_prev > 0
  S alpha_minus = S(0.16884);   // sine product coefficient, theta_prev < 0
  S beta = S(1.03912);          // sine linear coefficient
  S gamma = S(577) / S(579);    // cosine constant term
  S delta = S(274) / S(589);    // cosine product coefficient
};

// Count of evaluations outside the fitted interval; degradation is graceful,
// so this is diagnostic only.
inline std::atomic<std::uint64_t> approx_out_of_range_count{0};

namespace detail {
template <class S>
inline void note_interval(S theta_prev) {
  if (std::abs(theta_prev) > pi_v<S> / S(4))
    approx_out_of_range_count.fetch_add(1, std::memory_order_relaxed);
}

// alpha_sel * theta_prev; zero when theta_prev == 0 (branch continuity).
template <class S>
inline S alpha_product(S theta_prev, const QuadParams<S>& p) {
  if (theta_prev > S(0)) return p.alpha_plus * theta_prev;
  if (theta_prev < S(0)) return p.alpha_minus * theta_prev;
  return S(0);
}
}  // namespace detail

template <class S>
S quad_sin(S theta, S theta_prev, const QuadParams<S>& p = {}) {
  detail::note_interval(theta_prev);
  return detail::alpha_product(theta_prev, p) * theta + p.beta * theta;
}

template <class S>
S quad_cos(S theta, S theta_prev, const QuadParams<S>& p = {}) {
  detail::note_interval(theta_prev);
  return p.gamma - p.delta * theta_prev * theta;
}

// Affine-in-theta rotation model: vec(Q) ~ gamma_vec + slope * theta.
template <class S>
struct VectorizedRotationModel {
  Vec9<S> gamma_vec;
  Mat93<S> slope;

  Mat3<S> reconstruct(const Vec3<S>& theta) const {
    return unvec3x3(Vec9<S>(gamma_vec + slope * theta));
  }
};

namespace detail {
// Sparse sign structure shared by both models: which vec entry carries which
// angle's sine term. Column-major vec indices (i + 3j for entry (i,j)):
//   1:(2,1)=+z  2:(3,1)=-y  3:(1,2)=-z  5:(3,2)=+x  6:(1,3)=+y  7:(2,3)=-x
// The quadratic model scales the entries paired with a cosine by gamma
// (rows 1, 3, 5, 7); rows 2 and 6 hold a bare sine.
template <class S>
Mat93<S> sine_structure(S paired_scale) {
  Mat93<S> l = Mat93<S>::Zero();
  l(1, 2) = paired_scale;
  l(2, 1) = S(-1);
  l(3, 2) = -paired_scale;
  l(5, 0) = paired_scale;
  l(6, 1) = S(1);
  l(7, 0) = -paired_scale;
  return l;
}

// Diagonal product structure of the quadratic model: vec entries 0, 4, 8
// each collect the two cosine product terms of the other two axes.
template <class S>
Mat93<S> diag_structure() {
  Mat93<S> d = Mat93<S>::Zero();
  d(0, 1) = d(0, 2) = S(1);
  d(4, 0) = d(4, 2) = S(1);
  d(8, 0) = d(8, 1) = S(1);
  return d;
}
}  // namespace detail

// gamma_vec = vec(I); slope reproduces the first-order rotation
// I + [0 -z y; z 0 -x; -y x 0].
template <class S>
VectorizedRotationModel<S> small_angle_model() {
  VectorizedRotationModel<S> m;
  m.gamma_vec = vec3x3(Mat3<S>::Identity());
  m.slope = detail::sine_structure<S>(S(1));
  return m;
}

// gamma_vec = gamma^2 vec(I);
// slope = beta*L + L*diag(alpha_sel .* theta_prev) - gamma*delta*D*diag(theta_prev).
template <class S>
VectorizedRotationModel<S> quadratic_model(const Vec3<S>& theta_prev,
                                           const QuadParams<S>& p = {}) {
  for (int k = 0; k < 3; ++k) detail::note_interval(theta_prev[k]);
  VectorizedRotationModel<S> m;
  m.gamma_vec = p.gamma * p.gamma * vec3x3(Mat3<S>::Identity());
  const Mat93<S> l = detail::sine_structure<S>(p.gamma);
  const Mat93<S> d = detail::diag_structure<S>();
  Vec3<S> sine_lin, cos_prod;
  for (int k = 0; k < 3; ++k) {
    sine_lin[k] = p.beta + detail::alpha_product(theta_prev[k], p);
    cos_prod[k] = p.gamma * p.delta * theta_prev[k];
  }
  m.slope = l * sine_lin.asDiagonal() - d * cos_prod.asDiagonal();
  return m;
}

// Direct elementwise evaluation of the approximated rotation matrix; the
// derivation-side oracle the affine form must reproduce exactly.
template <class S>
Mat3<S> quad_matrix(const Vec3<S>& theta, const Vec3<S>& theta_prev,
                    const QuadParams<S>& p = {}) {
  const S sx = quad_sin(theta[0], theta_prev[0], p);
  const S sy = quad_sin(theta[1], theta_prev[1], p);
  const S sz = quad_sin(theta[2], theta_prev[2], p);
  const S g = p.gamma, gd = p.gamma * p.delta;
  const S px = theta_prev[0] * theta[0];
  const S py = theta_prev[1] * theta[1];
  const S pz = theta_prev[2] * theta[2];
  Mat3<S> q;
  q(0, 0) = g * g - gd * py - gd * pz;
  q(1, 0) = g * sz;
  q(2, 0) = -sy;
  q(0, 1) = -g * sz;
  q(1, 1) = g * g - gd * px - gd * pz;
  q(2, 1) = g * sx;
  q(0, 2) = sy;
  q(1, 2) = -g * sx;
  q(2, 2) = g * g - gd * px - gd * py;
  return q;
}

// Stacked effective channel matrices; row n*M + m covers the pair
// (landmark n, anchor m).
template <class S>
struct ChannelMatrices {
  Eigen::Matrix<S, Eigen::Dynamic, 3> h_theta;  // -2 (c_n (x) a_m)^T slope
  Eigen::Matrix<S, Eigen::Dynamic, 3> h_t;      // -2 a_m^T
};

namespace detail {
// (c (x) a), column-major pairing: entry i + 3j = c_j * a_i.
template <class S>
Vec9<S> kron_ca(const Vec3<S>& c, const Vec3<S>& a) {
  Vec9<S> k;
  for (int j = 0; j < 3; ++j) k.template segment<3>(3 * j) = c[j] * a;
  return k;
}
}  // namespace detail

template <class S>
ChannelMatrices<S> build_channels(const Mat3X<S>& anchors,
                                  const Mat3X<S>& conformation,
                                  const Mat93<S>& slope) {
  const Eigen::Index m_count = anchors.cols(), n_count = conformation.cols();
  ChannelMatrices<S> ch;
  ch.h_theta.resize(m_count * n_count, 3);
  ch.h_t.resize(m_count * n_count, 3);
  for (Eigen::Index n = 0; n < n_count; ++n) {
    for (Eigen::Index m = 0; m < m_count; ++m) {
      const Eigen::Index r = n * m_count + m;
      const Vec9<S> k =
          detail::kron_ca<S>(conformation.col(n), anchors.col(m));
      ch.h_theta.row(r) = S(-2) * (k.transpose() * slope);
      ch.h_t.row(r) = S(-2) * anchors.col(m).transpose();
    }
  }
  return ch;
}

}  // namespace rbl
