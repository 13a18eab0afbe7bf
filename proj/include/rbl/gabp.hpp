#pragma once

// Gaussian belief propagation engines.
//
// Two solvers share the same message structure:
//   * a per-sensor linear solver for x = [s_n; ||s_n||^2] on the squared-range
//     system (stage 0, used to estimate the landmark norms), and
//   * the bivariate pose solver: soft interference cancellation over the
//     stacked (rotation, translation) system, Gaussian-prior denoising,
//     damped replica updates, and a consensus readout; followed by a
//     translation-cancelled rotation refinement pass that reuses the final
//     rotation replicas and their MSEs.
//
// Per-edge quantities are (R x 3) arrays, one row per (landmark, anchor)
// pair, one column per variable component. Edges whose channel coefficient
// is zero carry no information and contribute zero weight. An extrinsic with
// no informative edges falls back to the prior (mean 0, variance phi).

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rbl/approx.hpp"
#include "rbl/core.hpp"
#include "rbl/measurement.hpp"

namespace rbl {

template <class S>
struct GabpConfig {
  S rho = S(0.5);                // damping factor in [0, 1)
  int j_max = 30;                // iteration budget per loop
  S phi_theta = S(0);            // prior variance per angle, rad^2
  S phi_t = S(0);                // prior variance per translation entry, m^2
  S convergence_tol = S(1e-6);   // early stop on max-abs consensus change
};

template <class S>
struct EdgeState {
  EdgeMat<S> theta_hat, t_hat;      // soft replicas
  EdgeMat<S> psi_theta, psi_t;      // replica MSEs

  static EdgeState prior_init(Eigen::Index edges, const GabpConfig<S>& cfg) {
    EdgeState st;
    st.theta_hat = EdgeMat<S>::Zero(edges, 3);
    st.t_hat = EdgeMat<S>::Zero(edges, 3);
    st.psi_theta = EdgeMat<S>::Constant(edges, 3, cfg.phi_theta);
    st.psi_t = EdgeMat<S>::Constant(edges, 3, cfg.phi_t);
    return st;
  }
};

template <class S>
struct ExtrinsicStats {
  EdgeMat<S> mean;
  EdgeMat<S> var;  // +inf on edges with no informative peers
};

template <class S>
struct DenoisedBeliefs {
  EdgeMat<S> mean;
  EdgeMat<S> mse;
};

// z~_{r,k} = z_r - sum_{i != k} h_theta_{r,i} theta^_{r,i} - sum_i h_t ... ,
// i.e. total interference minus the edge's own term added back.
template <class S>
std::pair<EdgeMat<S>, EdgeMat<S>> soft_ic(const VecX<S>& z,
                                          const EdgeMat<S>& h_theta,
                                          const EdgeMat<S>& h_t,
                                          const EdgeState<S>& st) {
  const auto residual =
      (z.array() - (h_theta * st.theta_hat).rowwise().sum() -
       (h_t * st.t_hat).rowwise().sum())
          .eval();
  EdgeMat<S> zt_theta = h_theta * st.theta_hat;
  zt_theta.colwise() += residual;
  EdgeMat<S> zt_t = h_t * st.t_hat;
  zt_t.colwise() += residual;
  return {std::move(zt_theta), std::move(zt_t)};
}

// sigma^2_{r,k} = sum over all other coefficients' |h|^2 psi plus the edge
// noise power.
template <class S>
std::pair<EdgeMat<S>, EdgeMat<S>> conditional_variances(
    const EdgeMat<S>& h_theta, const EdgeMat<S>& h_t, const EdgeState<S>& st,
    const VecX<S>& n0) {
  const auto total = ((h_theta.square() * st.psi_theta).rowwise().sum() +
                      (h_t.square() * st.psi_t).rowwise().sum() + n0.array())
                         .eval();
  EdgeMat<S> s2_theta = -(h_theta.square() * st.psi_theta);
  s2_theta.colwise() += total;
  EdgeMat<S> s2_t = -(h_t.square() * st.psi_t);
  s2_t.colwise() += total;
  return {std::move(s2_theta), std::move(s2_t)};
}

namespace detail {
// Per-edge Gaussian weights; zero-coefficient edges contribute nothing.
template <class S>
void edge_weights(const EdgeMat<S>& zt, const EdgeMat<S>& s2,
                  const EdgeMat<S>& h, EdgeMat<S>& w, EdgeMat<S>& u) {
  const auto informative = (h != S(0)).eval();
  w = informative.select(h.square() / s2, S(0));
  u = informative.select(h * zt / s2, S(0));
}
}  // namespace detail

// Leave-one-out Gaussian combining per edge: every peer row's statistics for
// the same variable component except the edge's own.
template <class S>
ExtrinsicStats<S> extrinsic_stats(const EdgeMat<S>& zt, const EdgeMat<S>& s2,
                                  const EdgeMat<S>& h) {
  EdgeMat<S> w, u;
  detail::edge_weights(zt, s2, h, w, u);
  const Eigen::Array<S, 1, 3> w_total = w.colwise().sum();
  const Eigen::Array<S, 1, 3> u_total = u.colwise().sum();
  EdgeMat<S> denom = (-w).rowwise() + w_total;
  EdgeMat<S> numer = (-u).rowwise() + u_total;
  ExtrinsicStats<S> ext;
  const auto ok = (denom > S(0)).eval();
  ext.var = ok.select(denom.inverse(),
                      std::numeric_limits<S>::infinity());
  ext.mean = ok.select(numer / denom, S(0));
  return ext;
}

// Gaussian-product shrinkage toward the zero-mean prior; an uninformative
// extrinsic (infinite variance) yields the prior itself.
template <class S>
DenoisedBeliefs<S> denoise(const ExtrinsicStats<S>& ext, S phi) {
  DenoisedBeliefs<S> out;
  const auto ok = ext.var.isFinite().eval();
  out.mean = ok.select(phi * ext.mean / (phi + ext.var), S(0));
  out.mse = ok.select(phi * ext.var / (phi + ext.var), phi);
  return out;
}

// In-place convex blend x <- rho x + (1 - rho) x_new.
template <class S>
void damped_update(EdgeMat<S>& x, const EdgeMat<S>& x_new, S rho) {
  x = rho * x + (S(1) - rho) * x_new;
}

// Full-sum (all edges) Gaussian combining; no prior involved.
template <class S>
Vec3<S> consensus(const EdgeMat<S>& zt, const EdgeMat<S>& s2,
                  const EdgeMat<S>& h) {
  EdgeMat<S> w, u;
  detail::edge_weights(zt, s2, h, w, u);
  Vec3<S> value;
  for (int k = 0; k < 3; ++k) {
    const S w_total = w.col(k).sum();
    value[k] = w_total > S(0) ? u.col(k).sum() / w_total : S(0);
  }
  return value;
}

template <class S>
VecX<S> cancel_translation(const VecX<S>& z, const EdgeMat<S>& h_t,
                           const Vec3<S>& t_tilde) {
  return z - (h_t.matrix() * t_tilde);
}

template <class S>
struct ConsensusTrace {
  std::vector<Vec3<S>> theta;
  std::vector<Vec3<S>> t;
};

template <class S>
struct BivariateResult {
  Vec3<S> theta = Vec3<S>::Zero();
  Vec3<S> t = Vec3<S>::Zero();
  int iterations = 0;
  bool diverged = false;
  int diverged_at = -1;
};

// Callback rebuilding the rotation channel matrix from the running consensus
// (used by the model that depends on the previous angle iterate).
template <class S>
using RotationChannelRebuild =
    std::function<Eigen::Matrix<S, Eigen::Dynamic, 3>(const Vec3<S>&)>;

namespace detail {
template <class S>
bool all_finite(const EdgeMat<S>& a) {
  return a.isFinite().all();
}
}  // namespace detail

// Joint (theta, t) message-passing loop over the stacked edge graph.
template <class S>
BivariateResult<S> bivariate_gabp(const VecX<S>& z, EdgeMat<S> h_theta,
                                  const EdgeMat<S>& h_t, const VecX<S>& n0,
                                  const GabpConfig<S>& cfg, EdgeState<S>& st,
                                  const RotationChannelRebuild<S>& rebuild = {},
                                  ConsensusTrace<S>* trace = nullptr) {
  BivariateResult<S> out;
  Vec3<S> prev_theta = Vec3<S>::Zero(), prev_t = Vec3<S>::Zero();
  for (int j = 0; j < cfg.j_max; ++j) {
    const auto [zt_theta, zt_t] = soft_ic(z, h_theta, h_t, st);
    const auto [s2_theta, s2_t] =
        conditional_variances(h_theta, h_t, st, n0);
    const auto den_theta =
        denoise(extrinsic_stats(zt_theta, s2_theta, h_theta), cfg.phi_theta);
    const auto den_t = denoise(extrinsic_stats(zt_t, s2_t, h_t), cfg.phi_t);
    damped_update(st.theta_hat, den_theta.mean, cfg.rho);
    damped_update(st.psi_theta, den_theta.mse, cfg.rho);
    damped_update(st.t_hat, den_t.mean, cfg.rho);
    damped_update(st.psi_t, den_t.mse, cfg.rho);
    out.theta = consensus(zt_theta, s2_theta, h_theta);
    out.t = consensus(zt_t, s2_t, h_t);
    out.iterations = j + 1;
    if (trace) {
      trace->theta.push_back(out.theta);
      trace->t.push_back(out.t);
    }
    if (!out.theta.allFinite() || !out.t.allFinite() ||
        !detail::all_finite(st.theta_hat) || !detail::all_finite(st.t_hat) ||
        !detail::all_finite(st.psi_theta) || !detail::all_finite(st.psi_t)) {
      out.diverged = true;
      out.diverged_at = j + 1;
      return out;
    }
    const S change = std::max((out.theta - prev_theta).cwiseAbs().maxCoeff(),
                              (out.t - prev_t).cwiseAbs().maxCoeff());
    if (j > 0 && change < cfg.convergence_tol) return out;
    prev_theta = out.theta;
    prev_t = out.t;
    if (rebuild) h_theta = rebuild(out.theta).array();
  }
  return out;
}

template <class S>
struct RotationEdgeState {
  EdgeMat<S> theta_hat;
  EdgeMat<S> psi_theta;
};

template <class S>
struct RotationResult {
  Vec3<S> theta = Vec3<S>::Zero();
  int iterations = 0;
  bool diverged = false;
  int diverged_at = -1;
};

// Rotation-only loop on the translation-cancelled observation. The channel
// matrix passed in reflects the caller's current angle estimate; when a
// rebuild callback is given it is refreshed each iteration from this loop's
// own running consensus.
template <class S>
RotationResult<S> rotation_refine(const VecX<S>& z_prime, EdgeMat<S> h_theta,
                                  const VecX<S>& n0, const GabpConfig<S>& cfg,
                                  RotationEdgeState<S>& st,
                                  const RotationChannelRebuild<S>& rebuild = {},
                                  ConsensusTrace<S>* trace = nullptr) {
  RotationResult<S> out;
  Vec3<S> prev = Vec3<S>::Zero();
  for (int j = 0; j < cfg.j_max; ++j) {
    const auto residual =
        (z_prime.array() - (h_theta * st.theta_hat).rowwise().sum()).eval();
    EdgeMat<S> zt = h_theta * st.theta_hat;
    zt.colwise() += residual;
    const auto total =
        ((h_theta.square() * st.psi_theta).rowwise().sum() + n0.array())
            .eval();
    EdgeMat<S> s2 = -(h_theta.square() * st.psi_theta);
    s2.colwise() += total;
    const auto den =
        denoise(extrinsic_stats(zt, s2, h_theta), cfg.phi_theta);
    damped_update(st.theta_hat, den.mean, cfg.rho);
    damped_update(st.psi_theta, den.mse, cfg.rho);
    out.theta = consensus(zt, s2, h_theta);
    out.iterations = j + 1;
    if (trace) trace->theta.push_back(out.theta);
    if (!out.theta.allFinite() || !detail::all_finite(st.theta_hat) ||
        !detail::all_finite(st.psi_theta)) {
      out.diverged = true;
      out.diverged_at = j + 1;
      return out;
    }
    if (j > 0 && (out.theta - prev).cwiseAbs().maxCoeff() <
                     cfg.convergence_tol)
      return out;
    prev = out.theta;
    if (rebuild) h_theta = rebuild(out.theta).array();
  }
  return out;
}

template <class S>
struct SensorEstimate {
  Vec3<S> s_hat = Vec3<S>::Zero();
  S norm_sq_hat = S(0);
  int iterations = 0;
  bool diverged = false;
  int diverged_at = -1;
};

// Single-family solver for the per-sensor system (4 unknowns): the same
// cancel / combine / denoise / damp cycle with a consensus readout.
template <class S>
SensorEstimate<S> linear_gabp_sensor(const SensorLinearSystem<S>& sys,
                                     const VecX<S>& n0, const Vec4<S>& prior_var,
                                     S rho, int j_max) {
  using Arr4 = Eigen::Array<S, Eigen::Dynamic, 4>;
  const Eigen::Index rows = sys.g.rows();
  if (rows < 4)
    throw std::invalid_argument(
        "linear_gabp_sensor: at least 4 anchors required");
  const Arr4 h = sys.g.array();
  const Eigen::Array<S, 1, 4> prior = prior_var.transpose().array();
  Arr4 x_hat = Arr4::Zero(rows, 4);
  Arr4 psi = prior.replicate(rows, 1);
  SensorEstimate<S> out;
  Eigen::Array<S, 1, 4> value = Eigen::Array<S, 1, 4>::Zero();
  for (int j = 0; j < j_max; ++j) {
    const auto residual =
        (sys.y.array() - (h * x_hat).rowwise().sum()).eval();
    Arr4 zt = h * x_hat;
    zt.colwise() += residual;
    const auto total = ((h.square() * psi).rowwise().sum() + n0.array()).eval();
    Arr4 s2 = -(h.square() * psi);
    s2.colwise() += total;
    const auto informative = (h != S(0)).eval();
    const Arr4 w = informative.select(h.square() / s2, S(0));
    const Arr4 u = informative.select(h * zt / s2, S(0));
    const Eigen::Array<S, 1, 4> w_total = w.colwise().sum();
    const Eigen::Array<S, 1, 4> u_total = u.colwise().sum();
    Arr4 denom = (-w).rowwise() + w_total;
    Arr4 numer = (-u).rowwise() + u_total;
    const auto ok = (denom > S(0)).eval();
    const Arr4 vbar =
        ok.select(denom.inverse(), std::numeric_limits<S>::infinity());
    const Arr4 xbar = ok.select(numer / denom, S(0));
    const auto finite = vbar.isFinite().eval();
    const Arr4 mean = finite.select(
        prior.replicate(rows, 1) * xbar /
            (prior.replicate(rows, 1) + vbar),
        S(0));
    const Arr4 mse = finite.select(
        prior.replicate(rows, 1) * vbar /
            (prior.replicate(rows, 1) + vbar),
        prior.replicate(rows, 1));
    x_hat = rho * x_hat + (S(1) - rho) * mean;
    psi = rho * psi + (S(1) - rho) * mse;
    for (int k = 0; k < 4; ++k)
      value[k] = w_total[k] > S(0) ? u_total[k] / w_total[k] : S(0);
    out.iterations = j + 1;
    if (!value.isFinite().all() || !x_hat.isFinite().all() ||
        !psi.isFinite().all()) {
      out.diverged = true;
      out.diverged_at = j + 1;
      break;
    }
  }
  out.s_hat = Vec3<S>(value[0], value[1], value[2]);
  out.norm_sq_hat = value[3];
  return out;
}

enum class Method { SmallAngle, Quadratic };

enum class NormMode { Oracle, Estimated };

template <class S>
struct PipelineOptions {
  NormMode norm_mode = NormMode::Estimated;
  NoisePowerOptions<S> noise;
  QuadParams<S> quad;
  int sensor_j_max = 60;          // stage-0 iteration budget
  VecX<S> oracle_norm_sq;         // required when norm_mode == Oracle
};

template <class S>
struct PoseEstimate {
  Vec3<S> theta = Vec3<S>::Zero();
  Vec3<S> t = Vec3<S>::Zero();
  int iterations_joint = 0;
  int iterations_refine = 0;
  bool diverged = false;
};

// Full pipeline: norm acquisition, joint loop, consensus, translation
// cancellation, warm-started rotation refinement.
template <class S>
PoseEstimate<S> run_algorithm(const Mat3X<S>& anchors,
                              const Mat3X<S>& conformation,
                              const RangeObservations<S>& obs, Method method,
                              const GabpConfig<S>& cfg,
                              const PipelineOptions<S>& opts,
                              ConsensusTrace<S>* trace_joint = nullptr,
                              ConsensusTrace<S>* trace_refine = nullptr) {
  const Eigen::Index m_count = anchors.cols(), n_count = conformation.cols();
  const VecX<S> n0 = edge_noise_power(obs, opts.noise);
  PoseEstimate<S> out;

  VecX<S> norm_sq(n_count);
  if (opts.norm_mode == NormMode::Oracle) {
    if (opts.oracle_norm_sq.size() != n_count)
      throw std::invalid_argument("run_algorithm: oracle norms missing");
    norm_sq = opts.oracle_norm_sq;
  } else {
    for (Eigen::Index n = 0; n < n_count; ++n) {
      const auto sys = build_sensor_system(anchors, obs, n);
      const S pos_var =
          cfg.phi_t + conformation.col(n).squaredNorm() / S(3);
      Vec4<S> prior_var;
      prior_var << pos_var, pos_var, pos_var, S(15) * pos_var * pos_var;
      const auto est = linear_gabp_sensor(
          sys, VecX<S>(n0.segment(n * m_count, m_count)), prior_var, cfg.rho,
          opts.sensor_j_max);
      if (est.diverged) {
        out.diverged = true;
        return out;
      }
      norm_sq[n] = std::max(est.norm_sq_hat, S(0));
    }
  }

  const bool quadratic = method == Method::Quadratic;
  const VectorizedRotationModel<S> model =
      quadratic ? quadratic_model(Vec3<S>::Zero().eval(), opts.quad)
                : small_angle_model<S>();
  const VecX<S> z = build_parameter_observation(anchors, conformation, obs,
                                                norm_sq, model.gamma_vec);
  const ChannelMatrices<S> ch =
      build_channels(anchors, conformation, model.slope);

  RotationChannelRebuild<S> rebuild;
  if (quadratic)
    rebuild = [&](const Vec3<S>& theta_prev) {
      return build_channels(anchors, conformation,
                            quadratic_model(theta_prev, opts.quad).slope)
          .h_theta;
    };

  EdgeState<S> st = EdgeState<S>::prior_init(m_count * n_count, cfg);
  const EdgeMat<S> h_t = ch.h_t.array();
  const auto joint = bivariate_gabp(z, EdgeMat<S>(ch.h_theta.array()), h_t,
                                    n0, cfg, st, rebuild, trace_joint);
  out.iterations_joint = joint.iterations;
  if (joint.diverged) {
    out.diverged = true;
    return out;
  }
  out.t = joint.t;

  const EdgeMat<S> h_theta_refine =
      quadratic ? EdgeMat<S>(rebuild(joint.theta).array())
                : EdgeMat<S>(ch.h_theta.array());
  const VecX<S> z_prime = cancel_translation(z, h_t, joint.t);
  RotationEdgeState<S> rot_state{st.theta_hat, st.psi_theta};
  const auto refined = rotation_refine(z_prime, h_theta_refine, n0, cfg,
                                       rot_state, rebuild, trace_refine);
  out.iterations_refine = refined.iterations;
  if (refined.diverged) {
    out.diverged = true;
    return out;
  }
  out.theta = refined.theta;
  return out;
}

}  // namespace rbl
