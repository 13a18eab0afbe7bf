#include "rbl/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

namespace rbl::harness {

Mat3Xd cube_corners(double half_width) {
  Mat3Xd corners(3, 8);
  const double h = half_width;
  corners << -h, h, h, -h, -h, h, -h, h,  //
      -h, -h, h, h, -h, -h, h, h,         //
      -h, -h, -h, -h, h, h, h, h;
  return corners;
}

Scenario default_scenario() {
  Scenario sc;
  sc.anchors = cube_corners(10.0);
  sc.conformation = cube_corners(0.5);
  return sc;
}

GabpConfig<double> ExperimentConfig::gabp_config() const {
  GabpConfig<double> cfg;
  cfg.rho = rho;
  cfg.j_max = j_max;
  cfg.convergence_tol = convergence_tol;
  const double sd_theta = deg_to_rad(std::sqrt(scenario.phi_theta_deg2));
  cfg.phi_theta = sd_theta * sd_theta;
  cfg.phi_t = scenario.phi_t_m2;
  return cfg;
}

PipelineOptions<double> ExperimentConfig::pipeline_options() const {
  PipelineOptions<double> opts;
  opts.norm_mode = norm_mode;
  opts.noise = noise;
  opts.sensor_j_max = sensor_j_max;
  return opts;
}

const char* method_name(Method m) {
  return m == Method::SmallAngle ? "small-angle" : "quadratic";
}

double rmse(const std::vector<Vec3d>& estimates,
            const std::vector<Vec3d>& truths) {
  if (estimates.empty() || estimates.size() != truths.size())
    throw std::invalid_argument("rmse: empty or mismatched inputs");
  double acc = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i)
    acc += (estimates[i] - truths[i]).squaredNorm();
  return std::sqrt(acc / static_cast<double>(estimates.size()));
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double parse_number(const std::string& tok, int line_no) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size())
    throw ConfigError("config line " + std::to_string(line_no) +
                      ": expected a number, got '" + tok + "'");
  return v;
}

long parse_int(const std::string& tok, int line_no) {
  const double v = parse_number(tok, line_no);
  const long i = static_cast<long>(v);
  if (static_cast<double>(i) != v)
    throw ConfigError("config line " + std::to_string(line_no) +
                      ": expected an integer, got '" + tok + "'");
  return i;
}

// Columns keyed "<prefix>1".."<prefix>K" in a section; contiguous from 1.
Mat3Xd parse_points(const std::map<std::string, std::pair<std::string, int>>&
                        entries,
                    const std::string& prefix, const std::string& section) {
  const std::size_t count = entries.size();
  Mat3Xd pts(3, static_cast<Eigen::Index>(count));
  for (std::size_t i = 1; i <= count; ++i) {
    const std::string key = prefix + std::to_string(i);
    auto it = entries.find(key);
    if (it == entries.end())
      throw ConfigError("config section [" + section + "]: missing key '" +
                        key + "'");
    const auto toks = split_ws(it->second.first);
    if (toks.size() != 3)
      throw ConfigError("config line " + std::to_string(it->second.second) +
                        ": '" + key + "' needs 3 coordinates");
    for (int r = 0; r < 3; ++r)
      pts(r, static_cast<Eigen::Index>(i - 1)) =
          parse_number(toks[r], it->second.second);
  }
  return pts;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.scenario.anchors.cols() < 4)
    throw ConfigError("config: at least 4 anchors required");
  if (cfg.scenario.conformation.cols() < 4)
    throw ConfigError("config: at least 4 landmarks required");
  if (!(cfg.scenario.phi_theta_deg2 > 0) || !(cfg.scenario.phi_t_m2 > 0))
    throw ConfigError("config: prior variances must be positive");
  if (cfg.trials < 1) throw ConfigError("config: trials must be >= 1");
  if (cfg.sigmas.empty()) throw ConfigError("config: empty sigma list");
  for (double s : cfg.sigmas)
    if (s < 0) throw ConfigError("config: sigma values must be >= 0");
  if (!(cfg.rho >= 0 && cfg.rho < 1))
    throw ConfigError("config: rho must lie in [0, 1)");
  if (cfg.j_max < 1 || cfg.sensor_j_max < 1)
    throw ConfigError("config: iteration budgets must be >= 1");
  if (cfg.methods.empty()) throw ConfigError("config: empty method list");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  // section -> key -> (raw value, line number)
  std::map<std::string, std::map<std::string, std::pair<std::string, int>>>
      sections;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      static const char* known[] = {"experiment", "priors", "gabp", "anchors",
                                    "conformation"};
      if (std::find_if(std::begin(known), std::end(known),
                       [&](const char* k) { return section == k; }) ==
          std::end(known))
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": unknown section [" + section + "]");
      sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || section.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value' inside a section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key or value");
    if (!sections[section].emplace(key, std::make_pair(value, line_no))
             .second)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
  }

  auto consume = [&](const std::string& section_name, const std::string& key)
      -> const std::pair<std::string, int>* {
    auto sit = sections.find(section_name);
    if (sit == sections.end()) return nullptr;
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return nullptr;
    const auto* entry = &kit->second;
    return entry;
  };
  std::map<std::string, std::vector<std::string>> consumed{
      {"experiment",
       {"sigma", "trials", "seed", "methods", "norm_mode", "noise_power",
        "noise_floor", "threads"}},
      {"priors", {"phi_theta_deg2", "phi_t_m2"}},
      {"gabp", {"rho", "j_max", "convergence_tol", "sensor_j_max"}}};

  if (const auto* e = consume("experiment", "sigma")) {
    cfg.sigmas.clear();
    for (const auto& tok : split_ws(e->first))
      cfg.sigmas.push_back(parse_number(tok, e->second));
  }
  if (const auto* e = consume("experiment", "trials"))
    cfg.trials = static_cast<int>(parse_int(e->first, e->second));
  if (const auto* e = consume("experiment", "seed"))
    cfg.seed = static_cast<std::uint64_t>(parse_int(e->first, e->second));
  if (const auto* e = consume("experiment", "methods")) {
    cfg.methods.clear();
    for (const auto& tok : split_ws(e->first)) {
      if (tok == "small-angle")
        cfg.methods.push_back(Method::SmallAngle);
      else if (tok == "quadratic")
        cfg.methods.push_back(Method::Quadratic);
      else
        throw ConfigError("config line " + std::to_string(e->second) +
                          ": unknown method '" + tok + "'");
    }
  }
  if (const auto* e = consume("experiment", "norm_mode")) {
    if (e->first == "oracle")
      cfg.norm_mode = NormMode::Oracle;
    else if (e->first == "estimated")
      cfg.norm_mode = NormMode::Estimated;
    else
      throw ConfigError("config line " + std::to_string(e->second) +
                        ": norm_mode must be 'oracle' or 'estimated'");
  }
  if (const auto* e = consume("experiment", "noise_power")) {
    auto toks = split_ws(e->first);
    if (auto colon = toks.empty() ? std::string::npos : toks[0].find(':');
        toks.size() == 1 && colon != std::string::npos) {
      toks = {toks[0].substr(0, colon), toks[0].substr(colon + 1)};
    }
    if (toks.size() == 1 && toks[0] == "per-row") {
      cfg.noise.mode = NoisePowerOptions<double>::Mode::PerRow;
    } else if (toks.size() == 2 && toks[0] == "scalar") {
      cfg.noise.mode = NoisePowerOptions<double>::Mode::Scalar;
      cfg.noise.scalar_value = parse_number(toks[1], e->second);
    } else {
      throw ConfigError("config line " + std::to_string(e->second) +
                        ": noise_power must be 'per-row' or 'scalar:<value>'");
    }
  }
  if (const auto* e = consume("experiment", "noise_floor"))
    cfg.noise.floor = parse_number(e->first, e->second);
  if (const auto* e = consume("experiment", "threads"))
    cfg.threads = static_cast<int>(parse_int(e->first, e->second));
  if (const auto* e = consume("priors", "phi_theta_deg2"))
    cfg.scenario.phi_theta_deg2 = parse_number(e->first, e->second);
  if (const auto* e = consume("priors", "phi_t_m2"))
    cfg.scenario.phi_t_m2 = parse_number(e->first, e->second);
  if (const auto* e = consume("gabp", "rho"))
    cfg.rho = parse_number(e->first, e->second);
  if (const auto* e = consume("gabp", "j_max"))
    cfg.j_max = static_cast<int>(parse_int(e->first, e->second));
  if (const auto* e = consume("gabp", "convergence_tol"))
    cfg.convergence_tol = parse_number(e->first, e->second);
  if (const auto* e = consume("gabp", "sensor_j_max"))
    cfg.sensor_j_max = static_cast<int>(parse_int(e->first, e->second));

  // Reject unknown keys in the scalar sections.
  for (const auto& [section_name, keys] : consumed) {
    auto sit = sections.find(section_name);
    if (sit == sections.end()) continue;
    for (const auto& [key, entry] : sit->second)
      if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw ConfigError("config line " + std::to_string(entry.second) +
                          ": unknown key '" + key + "' in [" + section_name +
                          "]");
  }

  if (auto sit = sections.find("anchors"); sit != sections.end())
    cfg.scenario.anchors = parse_points(sit->second, "a", "anchors");
  if (auto sit = sections.find("conformation"); sit != sections.end())
    cfg.scenario.conformation = parse_points(sit->second, "c", "conformation");

  validate(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

TrialRecord run_paired_trial(const ExperimentConfig& cfg,
                             std::size_t sigma_index, int trial_index) {
  // Independent, reproducible stream per (seed, sigma, trial).
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                    static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(sigma_index),
                    static_cast<std::uint32_t>(trial_index)};
  std::mt19937_64 rng(seq);

  const GabpConfig<double> gabp_cfg = cfg.gabp_config();
  TrialRecord rec;
  rec.truth = sample_pose(cfg.scenario.phi_theta_deg2, cfg.scenario.phi_t_m2,
                          rng);
  const Mat3<double> q = rotation_from_angles(rec.truth.angles);
  const Mat3Xd points =
      transform_body(cfg.scenario.conformation, q, rec.truth.t);
  const auto obs = generate_ranges(cfg.scenario.anchors, points,
                                   cfg.sigmas[sigma_index], rng);

  PipelineOptions<double> opts = cfg.pipeline_options();
  if (cfg.norm_mode == NormMode::Oracle)
    opts.oracle_norm_sq = points.colwise().squaredNorm().transpose();

  rec.estimates.reserve(cfg.methods.size());
  for (Method method : cfg.methods)
    rec.estimates.push_back(run_algorithm(cfg.scenario.anchors,
                                          cfg.scenario.conformation, obs,
                                          method, gabp_cfg, opts));
  return rec;
}

std::vector<RmseRow> run_rmse_experiment(const ExperimentConfig& cfg) {
  std::vector<RmseRow> rows;
  const int worker_count = [&] {
    if (cfg.threads > 0) return cfg.threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
  }();

  for (std::size_t si = 0; si < cfg.sigmas.size(); ++si) {
    std::vector<TrialRecord> records(static_cast<std::size_t>(cfg.trials));
    auto work = [&](int worker) {
      for (int i = worker; i < cfg.trials; i += worker_count)
        records[static_cast<std::size_t>(i)] = run_paired_trial(cfg, si, i);
    };
    if (worker_count == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(worker_count));
      for (int w = 0; w < worker_count; ++w) pool.emplace_back(work, w);
      for (auto& th : pool) th.join();
    }

    // Deterministic reduction in trial order.
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      RmseRow row;
      row.sigma = cfg.sigmas[si];
      row.method = cfg.methods[mi];
      double acc_rot = 0, acc_trans = 0, acc_iters = 0;
      int included = 0;
      for (const auto& rec : records) {
        const auto& est = rec.estimates[mi];
        if (est.diverged) {
          ++row.diverged;
          continue;
        }
        acc_rot += (est.theta - rec.truth.angles).squaredNorm();
        acc_trans += (est.t - rec.truth.t).squaredNorm();
        acc_iters += est.iterations_joint + est.iterations_refine;
        ++included;
      }
      if (included > 0) {
        row.rmse_rotation_deg = rad_to_deg(std::sqrt(acc_rot / included));
        row.rmse_translation_m = std::sqrt(acc_trans / included);
        row.mean_iterations = acc_iters / included;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

namespace {
std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace

void write_rmse_csv(const std::vector<RmseRow>& rows, std::ostream& out) {
  out << "sigma,method,rmse_rotation_deg,rmse_translation_m,diverged,"
         "mean_iterations\n";
  for (const auto& r : rows)
    out << format_double(r.sigma) << ',' << method_name(r.method) << ','
        << format_double(r.rmse_rotation_deg) << ','
        << format_double(r.rmse_translation_m) << ',' << r.diverged << ','
        << format_double(r.mean_iterations) << '\n';
}

ApproxSweepResult run_approx_sweep(int points, std::ostream* out) {
  if (points < 2)
    throw std::invalid_argument("run_approx_sweep: need at least 2 points");
  const QuadParams<double> p;
  ApproxSweepResult res;
  if (out)
    *out << "theta,sin_exact,sin_small,sin_quad,cos_exact,cos_small,cos_quad,"
            "err_sin_small,err_sin_quad,err_cos_small,err_cos_quad\n";
  const double lo = -pi_v<double> / 4, hi = pi_v<double> / 4;
  for (int i = 0; i < points; ++i) {
    // Fraction first: odd point counts then hit 0 and the endpoints exactly.
    const double theta =
        lo + (hi - lo) * (static_cast<double>(i) / (points - 1));
    const double sq = quad_sin(theta, theta, p);
    const double cq = quad_cos(theta, theta, p);
    const double es_small = std::abs(theta - std::sin(theta));
    const double es_quad = std::abs(sq - std::sin(theta));
    const double ec_small = std::abs(1.0 - std::cos(theta));
    const double ec_quad = std::abs(cq - std::cos(theta));
    res.max_err_sin_small = std::max(res.max_err_sin_small, es_small);
    res.max_err_sin_quad = std::max(res.max_err_sin_quad, es_quad);
    res.max_err_cos_small = std::max(res.max_err_cos_small, ec_small);
    res.max_err_cos_quad = std::max(res.max_err_cos_quad, ec_quad);
    if (out)
      *out << format_double(theta) << ',' << format_double(std::sin(theta))
           << ',' << format_double(theta) << ',' << format_double(sq) << ','
           << format_double(std::cos(theta)) << ',' << format_double(1.0)
           << ',' << format_double(cq) << ',' << format_double(es_small)
           << ',' << format_double(es_quad) << ',' << format_double(ec_small)
           << ',' << format_double(ec_quad) << '\n';
  }
  return res;
}

void run_single(const ExperimentConfig& cfg, double sigma, std::uint64_t seed,
                std::ostream& out) {
  ExperimentConfig one = cfg;
  one.sigmas = {sigma};
  one.seed = seed;
  const TrialRecord rec = run_paired_trial(one, 0, 0);
  auto print_pose = [&](const char* label, const Vec3d& angles,
                        const Vec3d& t) {
    out << label << ": angles_deg = (" << format_double(rad_to_deg(angles[0]))
        << ", " << format_double(rad_to_deg(angles[1])) << ", "
        << format_double(rad_to_deg(angles[2])) << "), t_m = ("
        << format_double(t[0]) << ", " << format_double(t[1]) << ", "
        << format_double(t[2]) << ")\n";
  };
  out << "sigma = " << format_double(sigma) << ", seed = " << seed << "\n";
  print_pose("true pose", rec.truth.angles, rec.truth.t);
  for (std::size_t mi = 0; mi < one.methods.size(); ++mi) {
    const auto& est = rec.estimates[mi];
    if (est.diverged) {
      out << method_name(one.methods[mi]) << ": diverged\n";
      continue;
    }
    print_pose(method_name(one.methods[mi]), est.theta, est.t);
    out << "  iterations: joint " << est.iterations_joint << ", refine "
        << est.iterations_refine << "\n";
  }
}

}  // namespace rbl::harness
