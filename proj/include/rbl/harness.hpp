#pragma once

// Experiment driver: scenario configuration, Monte-Carlo RMSE runs with a
// worker pool, approximation-error sweeps, and CSV emission.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "rbl/gabp.hpp"
#include "rbl/geometry.hpp"

namespace rbl::harness {

using Vec3d = Vec3<double>;
using Mat3Xd = Mat3X<double>;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Corners of an axis-aligned cube of the given half-width, ordered by sign
// pattern (-,-,-), (+,-,-), (+,+,-), (-,+,-), (-,-,+), (+,-,+), (-,+,+),
// (+,+,+).
Mat3Xd cube_corners(double half_width);

struct Scenario {
  Mat3Xd anchors;          // 3 x M
  Mat3Xd conformation;     // 3 x N
  double phi_theta_deg2 = 10.0;
  double phi_t_m2 = 5.0;
};

// Eight-landmark unit cube inside an eight-anchor cube of half-width 10.
Scenario default_scenario();

struct ExperimentConfig {
  Scenario scenario = default_scenario();
  std::vector<double> sigmas{0.01, 0.0316, 0.1, 0.316, 1.0};
  int trials = 1000;
  std::uint64_t seed = 1;
  std::vector<Method> methods{Method::SmallAngle, Method::Quadratic};
  NormMode norm_mode = NormMode::Estimated;
  NoisePowerOptions<double> noise;
  double rho = 0.5;
  int j_max = 30;
  double convergence_tol = 1e-6;
  int sensor_j_max = 60;
  int threads = 0;  // 0 = hardware concurrency

  GabpConfig<double> gabp_config() const;
  PipelineOptions<double> pipeline_options() const;  // oracle norms unset
};

// Plain-text configuration: "[section]" tables of "key = value" lines,
// '#' comments. Unknown sections or keys are errors.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

const char* method_name(Method m);

// sqrt(mean of squared estimate-minus-truth norms); truth varies per trial.
double rmse(const std::vector<Vec3d>& estimates,
            const std::vector<Vec3d>& truths);

struct TrialRecord {
  Pose<double> truth;
  std::vector<PoseEstimate<double>> estimates;  // one per configured method
};

// One Monte-Carlo trial: pose and ranges drawn from the trial's own seed
// stream, every configured method run on the same realization.
TrialRecord run_paired_trial(const ExperimentConfig& cfg,
                             std::size_t sigma_index, int trial_index);

struct RmseRow {
  double sigma = 0;
  Method method = Method::SmallAngle;
  double rmse_rotation_deg = 0;
  double rmse_translation_m = 0;
  int diverged = 0;
  double mean_iterations = 0;
};

std::vector<RmseRow> run_rmse_experiment(const ExperimentConfig& cfg);

void write_rmse_csv(const std::vector<RmseRow>& rows, std::ostream& out);

struct ApproxSweepResult {
  double max_err_sin_small = 0;
  double max_err_sin_quad = 0;
  double max_err_cos_small = 0;
  double max_err_cos_quad = 0;
};

// Errors of both models over a uniform grid on [-pi/4, pi/4] with the
// previous iterate equal to the grid angle; writes CSV rows when an output
// stream is given.
ApproxSweepResult run_approx_sweep(int points, std::ostream* out);

// One trial at the given noise level, both configured methods, true vs
// estimated pose printed to the stream.
void run_single(const ExperimentConfig& cfg, double sigma, std::uint64_t seed,
                std::ostream& out);

}  // namespace rbl::harness
