#pragma once

// Shared scalar-templated dense types and unit conversions.
// All linear algebra is Eigen; column-major vectorization (stacked columns)
// is the convention for every 9-vector <-> 3x3 mapping in this library.

#include <Eigen/Core>

#include <cstdint>

namespace rbl {

template <class S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <class S>
using Vec4 = Eigen::Matrix<S, 4, 1>;
template <class S>
using Vec9 = Eigen::Matrix<S, 9, 1>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using Mat3 = Eigen::Matrix<S, 3, 3>;
template <class S>
using Mat3X = Eigen::Matrix<S, 3, Eigen::Dynamic>;
template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Mat93 = Eigen::Matrix<S, 9, 3>;
// One row per factor-graph edge, one column per variable component.
template <class S>
using EdgeMat = Eigen::Array<S, Eigen::Dynamic, 3>;

template <class S>
constexpr S pi_v = static_cast<S>(3.14159265358979323846264338327950288L);

template <class S>
constexpr S deg_to_rad(S deg) {
  return deg * pi_v<S> / S(180);
}

template <class S>
constexpr S rad_to_deg(S rad) {
  return rad * S(180) / pi_v<S>;
}

// vec(M) with columns stacked: entry (i,j) -> index i + 3j.
template <class Derived>
Vec9<typename Derived::Scalar> vec3x3(const Eigen::MatrixBase<Derived>& m) {
  Vec9<typename Derived::Scalar> v;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) v[i + 3 * j] = m(i, j);
  return v;
}

template <class Derived>
Mat3<typename Derived::Scalar> unvec3x3(const Eigen::MatrixBase<Derived>& v) {
  Mat3<typename Derived::Scalar> m;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) m(i, j) = v[i + 3 * j];
  return m;
}

}  // namespace rbl
