#pragma once

// Range simulation and observation assembly.
//
// Measured ranges d~ = ||a_m - s_n|| + w with w ~ N(0, sigma^2). Squaring
// them yields linear observations with a composite noise whose leading term
// 2 d w has variance 4 d^2 sigma^2; the measured range is the plug-in for d.

#include <random>
#include <stdexcept>

#include "rbl/core.hpp"

namespace rbl {

template <class S>
struct RangeObservations {
  MatX<S> dtil;  // M x N, meters; entry (m, n) pairs anchor m with landmark n
  S sigma_w = S(0);
};

// Per-sensor linear system in x = [s_n; ||s_n||^2]:
// y_m = d~^2_{m,n} - ||a_m||^2, row m of G = [-2 a_m^T, 1].
template <class S>
struct SensorLinearSystem {
  VecX<S> y;
  MatX<S> g;  // M x 4
};

template <class S, class Rng>
RangeObservations<S> generate_ranges(const Mat3X<S>& anchors,
                                     const Mat3X<S>& points, S sigma_w,
                                     Rng& rng) {
  if (sigma_w < S(0))
    throw std::invalid_argument("generate_ranges: sigma_w must be >= 0");
  RangeObservations<S> obs;
  obs.sigma_w = sigma_w;
  obs.dtil.resize(anchors.cols(), points.cols());
  std::normal_distribution<S> unit(S(0), S(1));
  // Fixed draw order (landmark-major) for reproducibility.
  for (Eigen::Index n = 0; n < points.cols(); ++n)
    for (Eigen::Index m = 0; m < anchors.cols(); ++m)
      obs.dtil(m, n) = (anchors.col(m) - points.col(n)).norm() +
                       sigma_w * unit(rng);
  return obs;
}

template <class S>
SensorLinearSystem<S> build_sensor_system(const Mat3X<S>& anchors,
                                          const RangeObservations<S>& obs,
                                          Eigen::Index n) {
  if (n < 0 || n >= obs.dtil.cols())
    throw std::out_of_range("build_sensor_system: landmark index");
  const Eigen::Index m_count = anchors.cols();
  SensorLinearSystem<S> sys;
  sys.y.resize(m_count);
  sys.g.resize(m_count, 4);
  for (Eigen::Index m = 0; m < m_count; ++m) {
    sys.y[m] = obs.dtil(m, n) * obs.dtil(m, n) - anchors.col(m).squaredNorm();
    sys.g.template block<1, 3>(m, 0) = S(-2) * anchors.col(m).transpose();
    sys.g(m, 3) = S(1);
  }
  return sys;
}

// Variance of the linearized composite noise per pair: 4 d~^2 sigma^2.
template <class S>
MatX<S> composite_noise_power(const RangeObservations<S>& obs) {
  return S(4) * obs.dtil.array().square().matrix() *
         (obs.sigma_w * obs.sigma_w);
}

// How the per-edge noise power fed to the message passing is chosen.
// PerRow follows the distance-dependent composite variance; Scalar uses one
// fixed value. The floor keeps weights finite on (near-)noiseless input.
template <class S>
struct NoisePowerOptions {
  enum class Mode { PerRow, Scalar };
  Mode mode = Mode::PerRow;
  S scalar_value = S(1);
  S floor = S(1e-9);
};

// Stacked edge noise powers, row r = n*M + m.
template <class S>
VecX<S> edge_noise_power(const RangeObservations<S>& obs,
                         const NoisePowerOptions<S>& opt) {
  const Eigen::Index m_count = obs.dtil.rows(), n_count = obs.dtil.cols();
  VecX<S> n0(m_count * n_count);
  if (opt.mode == NoisePowerOptions<S>::Mode::Scalar) {
    n0.setConstant(std::max(opt.scalar_value, opt.floor));
    return n0;
  }
  const MatX<S> per_pair = composite_noise_power(obs);
  for (Eigen::Index n = 0; n < n_count; ++n)
    for (Eigen::Index m = 0; m < m_count; ++m)
      n0[n * m_count + m] = std::max(per_pair(m, n), opt.floor);
  return n0;
}

// Effective observation of the stacked pose system, row r = n*M + m:
// z_r = d~^2_{m,n} - ||a_m||^2 - norm_sq[n] + 2 (c_n (x) a_m)^T gamma_vec.
template <class S>
VecX<S> build_parameter_observation(const Mat3X<S>& anchors,
                                    const Mat3X<S>& conformation,
                                    const RangeObservations<S>& obs,
                                    const VecX<S>& norm_sq,
                                    const Vec9<S>& gamma_vec) {
  const Eigen::Index m_count = anchors.cols(), n_count = conformation.cols();
  if (norm_sq.size() != n_count)
    throw std::invalid_argument("build_parameter_observation: norm_sq size");
  if (obs.dtil.rows() != m_count || obs.dtil.cols() != n_count)
    throw std::invalid_argument("build_parameter_observation: range shape");
  VecX<S> z(m_count * n_count);
  const Mat3<S> gamma_mat = unvec3x3(gamma_vec);
  for (Eigen::Index n = 0; n < n_count; ++n) {
    for (Eigen::Index m = 0; m < m_count; ++m) {
      // (c (x) a)^T gamma_vec = a^T unvec(gamma_vec) c.
      const S coupling =
          anchors.col(m).dot(gamma_mat * conformation.col(n));
      z[n * m_count + m] = obs.dtil(m, n) * obs.dtil(m, n) -
                           anchors.col(m).squaredNorm() - norm_sq[n] +
                           S(2) * coupling;
    }
  }
  return z;
}

}  // namespace rbl
