#pragma once

#include "pdeid/analytic.hpp"
#include "pdeid/caslr.hpp"
#include "pdeid/io.hpp"
#include "pdeid/patches.hpp"
#include "pdeid/solvers.hpp"
#include "pdeid/spectral.hpp"

#include <cmath>
#include <filesystem>
#include <future>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pdeid {

// ---------------------------------------------------------------------------
// JSON <-> domain objects
// ---------------------------------------------------------------------------

inline TrigFactor trig_from_json(const Json& j) {
  TrigFactor f;
  const std::string fn = j.value("fn", "none");
  if (fn == "sin") f.fn = TrigFactor::Fn::sin;
  else if (fn == "cos") f.fn = TrigFactor::Fn::cos;
  else if (fn == "none") f.fn = TrigFactor::Fn::none;
  else throw ConfigError("trig factor: unknown fn '" + fn + "'");
  f.freq = j.value("freq", 0.0);
  f.phase = j.value("phase", 0.0);
  return f;
}

inline Json trig_to_json(const TrigFactor& f) {
  Json j;
  j["fn"] = f.fn == TrigFactor::Fn::sin ? "sin"
            : f.fn == TrigFactor::Fn::cos ? "cos"
                                          : "none";
  j["freq"] = f.freq;
  j["phase"] = f.phase;
  return j;
}

inline CoefficientFunction coefficient_from_json(const Json& j) {
  if (j.is_number()) return CoefficientFunction::constant(j.get<double>());
  if (j.contains("constant"))
    return CoefficientFunction::constant(j.at("constant").get<double>());
  std::vector<CoefficientTerm> terms;
  for (const auto& tj : j.at("terms")) {
    CoefficientTerm t;
    t.scale = tj.value("scale", 1.0);
    if (tj.contains("x_powers")) t.x_powers = tj.at("x_powers").get<std::vector<int>>();
    t.t_power = tj.value("t_power", 0);
    if (tj.contains("x_trig"))
      for (const auto& xj : tj.at("x_trig")) t.x_trig.push_back(trig_from_json(xj));
    if (tj.contains("t_trig")) t.t_trig = trig_from_json(tj.at("t_trig"));
    if (tj.contains("transition"))
      t.transition_factor = {tj.at("transition").at("slope").get<double>(),
                             tj.at("transition").at("center").get<double>()};
    terms.push_back(std::move(t));
  }
  return CoefficientFunction(std::move(terms));
}

inline Json coefficient_to_json(const CoefficientFunction& c) {
  Json terms = Json::array();
  for (const auto& t : c.terms()) {
    Json tj;
    tj["scale"] = t.scale;
    if (!t.x_powers.empty()) tj["x_powers"] = t.x_powers;
    if (t.t_power) tj["t_power"] = t.t_power;
    if (!t.x_trig.empty()) {
      Json arr = Json::array();
      for (const auto& f : t.x_trig) arr.push_back(trig_to_json(f));
      tj["x_trig"] = arr;
    }
    if (t.t_trig.fn != TrigFactor::Fn::none) tj["t_trig"] = trig_to_json(t.t_trig);
    if (t.transition_factor)
      tj["transition"] = {{"slope", t.transition_factor->first},
                          {"center", t.transition_factor->second}};
    terms.push_back(tj);
  }
  return Json{{"terms", terms}};
}

/// Registry of named closed-form initial profiles usable from config files.
inline std::function<double(std::span<const double>)> named_initial_form(
    const std::string& name) {
  if (name == "circular_rings")
    return [](std::span<const double> x) {
      const double r = std::hypot(x[0], x[1]);
      const double th = std::atan2(x[1], x[0]);
      return std::cos(4.0 * r) * std::cos(2.0 * th);
    };
  throw ConfigError("initial: unknown named form '" + name + "'");
}

inline InitialCondition initial_from_json(const Json& j) {
  InitialCondition ic;
  const std::string kind = j.at("kind").get<std::string>();
  ic.offset = j.value("offset", 0.0);
  if (kind == "random_fourier") {
    ic.kind = InitialKind::random_fourier;
    ic.modes = j.at("modes").get<int>();
    ic.seed = j.value("seed", 0ULL);
  } else if (kind == "bump") {
    ic.kind = InitialKind::bump;
  } else if (kind == "square") {
    ic.kind = InitialKind::square;
  } else if (kind == "hat") {
    ic.kind = InitialKind::hat;
  } else if (kind == "int") {
    ic.kind = InitialKind::integral;
  } else if (kind == "sinusoid_sum") {
    ic.kind = InitialKind::sinusoid_sum;
    for (const auto& tj : j.at("terms")) {
      const std::string fn = tj.value("fn", "cos");
      const double amp = tj.value("amp", 1.0);
      const double freq = tj.at("freq").get<double>();
      double phase = tj.value("phase", 0.0);
      if (fn == "sin") phase -= std::numbers::pi / 2.0;  // sin(z) = cos(z - pi/2)
      else if (fn != "cos") throw ConfigError("initial: sinusoid fn must be sin or cos");
      ic.sinusoids.push_back({amp, freq, phase});
    }
  } else if (kind == "custom") {
    ic.kind = InitialKind::custom_closed_form;
    ic.custom_name = j.at("name").get<std::string>();
    ic.custom = named_initial_form(ic.custom_name);
  } else {
    throw ConfigError("initial: unknown kind '" + kind + "'");
  }
  return ic;
}

inline ProblemKind kind_from_string(const std::string& s) {
  if (s == "transport1d") return ProblemKind::transport1d;
  if (s == "heat1d") return ProblemKind::heat1d;
  if (s == "kdv1d") return ProblemKind::kdv1d;
  if (s == "schrodinger1d_system") return ProblemKind::schrodinger1d_system;
  if (s == "burgers1d") return ProblemKind::burgers1d;
  if (s == "circular_flow_2d") return ProblemKind::circular_flow_2d;
  throw ConfigError("problem: unknown kind '" + s + "'");
}

inline EvolutionProblem problem_from_json(const Json& j) {
  EvolutionProblem p{kind_from_string(j.at("kind").get<std::string>()),
                     {},
                     {},
                     grid_from_json(j.at("grid"))};
  if (j.contains("coefficients"))
    for (const auto& cj : j.at("coefficients")) p.coefficients.push_back(coefficient_from_json(cj));
  for (const auto& ij : j.at("initial")) p.initial.push_back(initial_from_json(ij));
  return p;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class FeatureMode { finite_difference, exact };

struct SensorSpec {
  int count = 5;
  std::vector<int> space_radius = {3};
  int time_radius = 5;
  int observation_times = 10;
  bool include_endpoints = true;
  std::uint64_t seed = 1;
  std::optional<double> circle_radius;  // 2D: centers on a circle (grid units)
};

struct FilterSpec {
  bool sobolev = true;
  bool variation = true;
  int noise_patch_count = 200;
  std::vector<int> noise_patch_space_radius = {3};
  int noise_patch_time_radius = 3;
  std::optional<double> lipschitz;
};

struct DictionarySpec {
  int max_derivative_order = 4;
  int max_product_terms = 3;
  std::vector<std::string> trig;
};

struct ExperimentConfig {
  std::string name = "experiment";
  EvolutionProblem problem;
  double noise_percent = 0.0;
  std::uint64_t noise_seed = 1;
  FeatureMode features = FeatureMode::finite_difference;
  std::string target_field = "u";
  DictionarySpec dictionary;
  SensorSpec sensors;
  int trials = 1;
  bool randomize_initial_per_trial = false;
  FilterSpec filters;
  SweepOptions caslr;
  SolveOptions solver;
  std::optional<std::pair<std::vector<int>, int>> downsample_strides;
  std::vector<std::string> truth_support;
  std::vector<CoefficientFunction> truth_coefficients;
  bool write_patch_report = true;
  Json raw;  // original JSON, for provenance hashing
};

inline ExperimentConfig experiment_from_json(const Json& j) {
  ExperimentConfig c;
  c.raw = j;
  c.name = j.value("name", "experiment");
  c.problem = problem_from_json(j.at("problem"));
  if (j.contains("noise")) {
    c.noise_percent = j.at("noise").value("percent", 0.0);
    c.noise_seed = j.at("noise").value("seed", 1ULL);
  }
  const std::string fm = j.value("features", "fd");
  if (fm == "fd") c.features = FeatureMode::finite_difference;
  else if (fm == "exact") c.features = FeatureMode::exact;
  else throw ConfigError("config: features must be 'fd' or 'exact'");
  c.target_field = j.value("target_field", "u");
  if (j.contains("dictionary")) {
    const auto& dj = j.at("dictionary");
    c.dictionary.max_derivative_order = dj.value("max_derivative_order", 4);
    c.dictionary.max_product_terms = dj.value("max_product_terms", 3);
    if (dj.contains("trig"))
      c.dictionary.trig = dj.at("trig").get<std::vector<std::string>>();
  }
  if (j.contains("sensors")) {
    const auto& sj = j.at("sensors");
    c.sensors.count = sj.value("count", 5);
    if (sj.contains("space_radius"))
      c.sensors.space_radius = sj.at("space_radius").get<std::vector<int>>();
    c.sensors.time_radius = sj.value("time_radius", 5);
    c.sensors.observation_times = sj.value("observation_times", 10);
    c.sensors.include_endpoints = sj.value("include_endpoints", true);
    c.sensors.seed = sj.value("seed", 1ULL);
    if (sj.contains("circle_radius") && !sj.at("circle_radius").is_null())
      c.sensors.circle_radius = sj.at("circle_radius").get<double>();
  }
  c.trials = j.value("trials", 1);
  c.randomize_initial_per_trial = j.value("randomize_initial_per_trial", false);
  if (j.contains("filters")) {
    const auto& fj = j.at("filters");
    c.filters.sobolev = fj.value("sobolev", true);
    c.filters.variation = fj.value("variation", true);
    c.filters.noise_patch_count = fj.value("noise_patch_count", 200);
    if (fj.contains("noise_patch_space_radius"))
      c.filters.noise_patch_space_radius =
          fj.at("noise_patch_space_radius").get<std::vector<int>>();
    c.filters.noise_patch_time_radius = fj.value("noise_patch_time_radius", 3);
    if (fj.contains("lipschitz") && !fj.at("lipschitz").is_null())
      c.filters.lipschitz = fj.at("lipschitz").get<double>();
  }
  if (j.contains("caslr")) {
    const auto& cj = j.at("caslr");
    const std::string rr = cj.value("rho_rule", "mean_with_zero");
    if (rr == "mean_with_zero") c.caslr.rho_rule = RhoRule::mean_with_zero;
    else if (rr == "mean_levels") c.caslr.rho_rule = RhoRule::mean_levels;
    else throw ConfigError("config: caslr.rho_rule must be mean_with_zero or mean_levels");
    c.caslr.max_level = cj.value("max_level", 0);
    c.caslr.max_iterations = cj.value("max_iterations", 20);
  }
  if (j.contains("solver")) {
    c.solver.max_substeps = j.at("solver").value("max_substeps", 100000);
    c.solver.safety = j.at("solver").value("safety", 0.8);
    c.solver.derivative_cap = j.at("solver").value("derivative_cap", 0.0);
  }
  if (j.contains("downsample")) {
    c.downsample_strides = {j.at("downsample").at("space").get<std::vector<int>>(),
                            j.at("downsample").at("time").get<int>()};
  }
  if (j.contains("truth")) {
    c.truth_support = j.at("truth").at("support").get<std::vector<std::string>>();
    if (j.at("truth").contains("coefficients"))
      for (const auto& cj : j.at("truth").at("coefficients"))
        c.truth_coefficients.push_back(coefficient_from_json(cj));
  }
  if (j.contains("output"))
    c.write_patch_report = j.at("output").value("write_patch_report", true);
  return c;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct TrialRow {
  int trial = 0;
  bool ok = false;
  std::string error;
  double jaccard = std::numeric_limits<double>::quiet_NaN();
  double coeff_error = std::numeric_limits<double>::quiet_NaN();
  bool coeff_absolute = false;
  int chosen_level = 0;
  std::vector<std::string> support;
  int patches_total = 0;
  int patches_kept = 0;
  double rho = 0.0;
  double sigma2_hat = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentReport {
  std::string name;
  std::uint64_t config_hash = 0;
  std::vector<TrialRow> rows;
  double jaccard_mean = std::numeric_limits<double>::quiet_NaN();
  double jaccard_std = std::numeric_limits<double>::quiet_NaN();
  double coeff_mean = std::numeric_limits<double>::quiet_NaN();
  double coeff_std = std::numeric_limits<double>::quiet_NaN();
  bool all_completed = false;

  void finalize() {
    std::vector<double> js, ce;
    all_completed = !rows.empty();
    for (const auto& r : rows) {
      if (!r.ok) {
        all_completed = false;
        continue;
      }
      if (std::isfinite(r.jaccard)) js.push_back(r.jaccard);
      if (std::isfinite(r.coeff_error)) ce.push_back(r.coeff_error);
    }
    auto mean_std = [](const std::vector<double>& v, double& m, double& s) {
      if (v.empty()) return;
      m = 0.0;
      for (double x : v) m += x;
      m /= v.size();
      s = 0.0;
      for (double x : v) s += (x - m) * (x - m);
      s = v.size() > 1 ? std::sqrt(s / (v.size() - 1)) : 0.0;
    };
    mean_std(js, jaccard_mean, jaccard_std);
    mean_std(ce, coeff_mean, coeff_std);
  }
};

namespace detail {

inline Dictionary build_config_dictionary(const ExperimentConfig& c,
                                          const std::vector<std::string>& field_names,
                                          int dim) {
  std::vector<FeatureDescriptor> trig;
  for (const auto& s : c.dictionary.trig)
    trig.push_back(parse_descriptor(s, field_names, dim));
  return build_dictionary(field_names, dim, c.dictionary.max_derivative_order,
                          c.dictionary.max_product_terms, std::move(trig));
}

inline void validate_experiment(const ExperimentConfig& c, const SpaceTimeGrid& data_grid) {
  for (int a = 0; a < data_grid.dim(); ++a) {
    if (static_cast<int>(c.sensors.space_radius.size()) != data_grid.dim())
      throw ConfigError("sensors.space_radius: need one radius per space axis");
    if (2 * c.sensors.space_radius[a] + 1 > data_grid.space_points(a))
      throw ConfigError("sensors.space_radius: box of side " +
                        std::to_string(2 * c.sensors.space_radius[a] + 1) +
                        " exceeds axis " + std::to_string(a) + " with " +
                        std::to_string(data_grid.space_points(a)) + " points");
  }
  if (2 * c.sensors.time_radius + 1 > data_grid.time_points())
    throw ConfigError("sensors.time_radius: window exceeds stored time points");
  if (c.trials < 1) throw ConfigError("trials: must be >= 1");
}

inline EvolutionProblem problem_for_trial(const ExperimentConfig& c, int trial) {
  EvolutionProblem p = c.problem;
  if (c.randomize_initial_per_trial)
    for (auto& ic : p.initial)
      if (ic.kind == InitialKind::random_fourier)
        ic.seed += static_cast<std::uint64_t>(trial);
  return p;
}

inline AnalyticFieldSet build_exact_fields(const EvolutionProblem& p) {
  AnalyticFieldSet set;
  const double t0 = p.grid.time_extent().lo;
  auto u0 = as_fourier_sum(p.initial.at(0), p.grid);
  if (!u0)
    throw ConfigError("exact features: initial condition must be a finite Fourier sum");
  switch (p.kind) {
    case ProblemKind::transport1d:
      if (p.coefficients[0].depends_on_space())
        throw ConfigError("exact features: transport speed must be space-independent");
      set.add("u", std::make_shared<TranslatingWaveField>(*u0, p.coefficients[0], t0));
      break;
    case ProblemKind::heat1d:
      if (p.coefficients[0].depends_on_space())
        throw ConfigError("exact features: diffusivity must be space-independent");
      set.add("u", std::make_shared<DecayingFourierField>(*u0, p.coefficients[0], t0));
      break;
    case ProblemKind::burgers1d: {
      if (!p.coefficients[0].is_constant())
        throw ConfigError("exact features: burgers coefficient must be constant");
      const double a = p.coefficients[0].constant_value();
      set.add("u", std::make_shared<BurgersCharacteristicField>(
                       *u0, a, p.grid.time_extent().hi - t0));
      break;
    }
    default:
      throw ConfigError(std::string("exact features: not available for ") +
                        kind_name(p.kind));
  }
  return set;
}

struct TrialArtifacts {
  TrialRow row;
  std::vector<PatchRegressionSystem> kept_systems;
  std::vector<PatchReportRow> patch_report;
  std::optional<IdentificationResult> result;
};

/// Runs one trial end to end. `shared_clean` is the trial-invariant clean
/// trajectory when one exists; `shared_cache` is additionally non-null when
/// the observed data are trial-invariant too (no noise), pre-filled before
/// the fan-out.
inline TrialArtifacts run_trial(const ExperimentConfig& c, const Dictionary& dict,
                                int trial, const TrajectoryField* shared_clean,
                                DerivativeCache* shared_cache, bool want_patch_report) {
  TrialArtifacts art;
  art.row.trial = trial;

  const EvolutionProblem prob = problem_for_trial(c, trial);
  const std::vector<std::string> field_names = prob.field_names();
  int target_idx = 0;
  for (std::size_t i = 0; i < field_names.size(); ++i)
    if (field_names[i] == c.target_field) target_idx = static_cast<int>(i);

  // Data stage: solved (and possibly noisy) trajectory, or analytic fields.
  std::unique_ptr<TrajectoryField> own_traj;
  std::unique_ptr<DerivativeCache> own_cache;
  const TrajectoryField* traj = nullptr;
  DerivativeCache* cache = nullptr;
  AnalyticFieldSet exact_fields;

  if (c.features == FeatureMode::exact) {
    exact_fields = build_exact_fields(prob);
  } else if (shared_cache != nullptr) {
    traj = shared_clean;
    cache = shared_cache;
  } else {
    TrajectoryField data = shared_clean != nullptr ? *shared_clean : [&] {
      TrajectoryField solved = solve(prob, c.solver);
      if (c.downsample_strides)
        solved =
            downsample(solved, c.downsample_strides->first, c.downsample_strides->second);
      return solved;
    }();
    if (c.noise_percent > 0.0)
      data = add_noise(data, c.noise_percent,
                       derive_seed(c.noise_seed, static_cast<std::uint64_t>(trial)));
    own_traj = std::make_unique<TrajectoryField>(std::move(data));
    traj = own_traj.get();
    own_cache = std::make_unique<DerivativeCache>(*traj);
    cache = own_cache.get();
  }

  const SpaceTimeGrid& data_grid = c.features == FeatureMode::exact ? prob.grid : traj->grid();
  validate_experiment(c, data_grid);

  // Sensors.
  const auto obs_times = uniform_observation_times(
      data_grid, c.sensors.observation_times, c.sensors.time_radius,
      c.sensors.include_endpoints);
  const std::uint64_t sensor_seed =
      derive_seed(c.sensors.seed, static_cast<std::uint64_t>(trial));
  std::vector<Patch> patches;
  if (c.sensors.circle_radius)
    patches = sample_sensors_on_circle(data_grid, c.sensors.count, *c.sensors.circle_radius,
                                       c.sensors.space_radius, c.sensors.time_radius,
                                       obs_times, sensor_seed);
  else
    patches = sample_sensors(data_grid, c.sensors.count, c.sensors.space_radius,
                             c.sensors.time_radius, obs_times, sensor_seed);
  art.row.patches_total = static_cast<int>(patches.size());

  // Assemble systems.
  std::vector<PatchRegressionSystem> systems;
  systems.reserve(patches.size());
  for (const auto& p : patches) {
    if (c.features == FeatureMode::exact)
      systems.push_back(
          assemble_patch_system_exact(dict, p, exact_fields, data_grid, target_idx));
    else
      systems.push_back(assemble_patch_system(dict, p, *cache, target_idx));
  }

  // Noise level for the variation test.
  double sigma_hat = 0.0;
  if (c.filters.variation && c.features == FeatureMode::finite_difference) {
    const auto noise_patches =
        noise_estimation_patches(data_grid, c.filters.noise_patch_count,
                                 c.filters.noise_patch_space_radius,
                                 c.filters.noise_patch_time_radius);
    double worst = 0.0;
    for (int f = 0; f < traj->field_count(); ++f) {
      const auto est = estimate_noise_variance(*traj, noise_patches, f, c.filters.lipschitz);
      worst = std::max(worst, est.sigma2_hat);
    }
    art.row.sigma2_hat = worst;
    sigma_hat = std::sqrt(worst);
  }

  // Patch filters.
  std::vector<double> betas(systems.size());
  for (std::size_t i = 0; i < systems.size(); ++i)
    betas[i] = sobolev_seminorm(systems[i], dict.max_spatial_order());
  std::vector<bool> keep_sobolev(systems.size(), true);
  if (c.filters.sobolev) keep_sobolev = filter_by_sobolev(betas);

  std::vector<bool> keep_variation(systems.size(), true);
  if (c.filters.variation) {
    for (std::size_t i = 0; i < systems.size(); ++i) {
      std::vector<Vector> vals;
      if (c.features == FeatureMode::exact) {
        const auto pts = patch_points(data_grid, patches[i]);
        for (const auto& f : exact_fields.fields) {
          Vector v(pts.size());
          for (std::size_t q = 0; q < pts.size(); ++q)
            v[q] = f->value(data_grid.x(0, static_cast<int>(pts[q].flat_space)),
                            data_grid.t(pts[q].time));
          vals.push_back(std::move(v));
        }
      } else {
        for (int f = 0; f < traj->field_count(); ++f)
          vals.push_back(extract_patch_values(*traj, patches[i], f));
      }
      keep_variation[i] = variation_test(vals, sigma_hat);
    }
  }

  double cell_volume = data_grid.dt();
  for (int a = 0; a < data_grid.dim(); ++a) cell_volume *= data_grid.dx(a);
  if (want_patch_report) {
    for (std::size_t i = 0; i < systems.size(); ++i) {
      PatchReportRow r;
      r.patch_id = patches[i].id;
      const int mid = systems[i].size() / 2;
      for (int a = 0; a <= data_grid.dim(); ++a)
        r.center.push_back(systems[i].points(mid, a));
      r.beta = betas[i];
      r.kept_by_sobolev = keep_sobolev[i];
      r.kept_by_variation = keep_variation[i];
      r.condition_ratio = condition_diagnostic(systems[i], cell_volume).ratio;
      art.patch_report.push_back(std::move(r));
    }
  }

  for (std::size_t i = 0; i < systems.size(); ++i)
    if (keep_sobolev[i] && keep_variation[i])
      art.kept_systems.push_back(std::move(systems[i]));
  art.row.patches_kept = static_cast<int>(art.kept_systems.size());
  if (art.kept_systems.empty())
    throw DataError("pipeline: every patch was filtered out");

  // Identification.
  IdentificationResult res = sweep_and_score(art.kept_systems, c.caslr);
  art.row.chosen_level = res.chosen_level;
  art.row.rho = res.rho;
  for (int k : res.support) art.row.support.push_back(dict.entry_string(k));

  // Ground-truth comparison.
  if (!c.truth_support.empty()) {
    std::set<int> true_set, found_set(res.support.begin(), res.support.end());
    std::vector<int> true_support;
    for (const auto& s : c.truth_support) {
      const int k = dict.index_of(s);
      if (k < 0) throw ConfigError("truth.support: '" + s + "' is not in the dictionary");
      true_set.insert(k);
      true_support.push_back(k);
    }
    art.row.jaccard = jaccard(true_set, found_set);
    if (!c.truth_coefficients.empty()) {
      if (c.truth_coefficients.size() != true_support.size())
        throw ConfigError("truth.coefficients: need one function per support entry");
      const int J = static_cast<int>(art.kept_systems.size());
      Matrix truth(J, true_support.size());
      for (int j = 0; j < J; ++j) {
        const int mid = art.kept_systems[j].size() / 2;
        std::vector<double> x(data_grid.dim());
        for (int a = 0; a < data_grid.dim(); ++a) x[a] = art.kept_systems[j].points(mid, a);
        const double t = art.kept_systems[j].points(mid, data_grid.dim());
        for (std::size_t a = 0; a < true_support.size(); ++a)
          truth(j, static_cast<int>(a)) = c.truth_coefficients[a](x, t);
      }
      const auto ce =
          coefficient_error(res.support, res.coefficients, true_support, truth);
      art.row.coeff_error = ce.value;
      art.row.coeff_absolute = ce.absolute;
    }
  }
  art.result = std::move(res);
  art.row.ok = true;
  return art;
}

inline void prefill_cache(DerivativeCache& cache, const Dictionary& dict) {
  const TrajectoryField& traj = cache.trajectory();
  const int dim = traj.grid().dim();
  std::vector<MultiIndex> alphas;
  MultiIndex cur(dim, 0);
  enumerate_alphas(dim, dict.max_spatial_order(), cur, 0, alphas);
  for (int f = 0; f < traj.field_count(); ++f) {
    for (const auto& a : alphas) cache.spatial(f, a);
    cache.time_derivative(f);
  }
}

}  // namespace detail

/// Runs the configured experiment: solve, corrupt, sense, filter, identify,
/// evaluate, over `trials` independent repetitions with derived seeds. Writes
/// report.json, trials.csv and (for the first trial) patch/coefficient CSVs
/// under out_dir; pass an empty path to skip file output.
inline ExperimentReport run_experiment(const ExperimentConfig& c,
                                       const std::filesystem::path& out_dir = {},
                                       int parallelism = 2) {
  ExperimentReport report;
  report.name = c.name;
  report.config_hash = fnv1a64(c.raw.is_null() ? c.name : c.raw.dump());

  const std::vector<std::string> field_names = c.problem.field_names();
  const Dictionary dict =
      detail::build_config_dictionary(c, field_names, c.problem.grid.dim());

  // The clean trajectory is trial-invariant unless initial conditions are
  // redrawn per trial; solve it once. Without noise the derivative cache is
  // shared too, pre-filled before the trial fan-out.
  std::unique_ptr<TrajectoryField> shared_traj;
  std::unique_ptr<DerivativeCache> shared_cache;
  if (c.features == FeatureMode::finite_difference && !c.randomize_initial_per_trial) {
    TrajectoryField solved = solve(c.problem, c.solver);
    if (c.downsample_strides)
      solved = downsample(solved, c.downsample_strides->first, c.downsample_strides->second);
    shared_traj = std::make_unique<TrajectoryField>(std::move(solved));
    if (c.noise_percent == 0.0) {
      shared_cache = std::make_unique<DerivativeCache>(*shared_traj);
      detail::prefill_cache(*shared_cache, dict);
    }
  }

  std::vector<detail::TrialArtifacts> artifacts(c.trials);
  std::vector<std::string> errors(c.trials);
  const int par = std::max(1, parallelism);
  for (int start = 0; start < c.trials; start += par) {
    const int end = std::min(c.trials, start + par);
    std::vector<std::future<void>> futs;
    for (int t = start; t < end; ++t) {
      futs.push_back(std::async(std::launch::async, [&, t]() {
        try {
          artifacts[t] = detail::run_trial(c, dict, t, shared_traj.get(),
                                           shared_cache.get(),
                                           c.write_patch_report && t == 0);
        } catch (const std::exception& e) {
          artifacts[t].row.trial = t;
          artifacts[t].row.ok = false;
          artifacts[t].row.error = e.what();
        }
      }));
    }
    for (auto& f : futs) f.get();
  }

  for (int t = 0; t < c.trials; ++t) report.rows.push_back(artifacts[t].row);
  report.finalize();

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    Json rj;
    rj["name"] = report.name;
    rj["provenance"] = {{"config_hash", report.config_hash},
                        {"generated", timestamp_utc()},
                        {"library", "pdeid 0.1.0"}};
    rj["aggregates"] = {{"jaccard_mean", report.jaccard_mean},
                        {"jaccard_std", report.jaccard_std},
                        {"coefficient_error_mean", report.coeff_mean},
                        {"coefficient_error_std", report.coeff_std},
                        {"all_completed", report.all_completed}};
    Json rows = Json::array();
    for (const auto& r : report.rows) {
      Json jr;
      jr["trial"] = r.trial;
      jr["ok"] = r.ok;
      if (!r.ok) jr["error"] = r.error;
      jr["jaccard"] = r.jaccard;
      jr["coefficient_error"] = r.coeff_error;
      jr["coefficient_error_absolute"] = r.coeff_absolute;
      jr["chosen_level"] = r.chosen_level;
      jr["support"] = r.support;
      jr["patches_total"] = r.patches_total;
      jr["patches_kept"] = r.patches_kept;
      jr["rho"] = r.rho;
      jr["sigma2_hat"] = r.sigma2_hat;
      rows.push_back(jr);
    }
    rj["trials"] = rows;
    std::ofstream(out_dir / "report.json") << rj.dump(2) << "\n";

    std::ofstream csv(out_dir / "trials.csv");
    csv << "# pdeid experiment name=" << c.name << " generated=" << timestamp_utc()
        << "\n";
    csv << "trial,ok,jaccard,coefficient_error,chosen_level,patches_total,patches_kept,"
           "rho,sigma2_hat,support,error\n";
    for (const auto& r : report.rows) {
      csv << r.trial << ',' << (r.ok ? 1 : 0) << ',' << format_double(r.jaccard) << ','
          << format_double(r.coeff_error) << ',' << r.chosen_level << ','
          << r.patches_total << ',' << r.patches_kept << ',' << format_double(r.rho)
          << ',' << format_double(r.sigma2_hat) << ",\"";
      for (std::size_t i = 0; i < r.support.size(); ++i)
        csv << (i ? "|" : "") << r.support[i];
      csv << "\",\"" << r.error << "\"\n";
    }

    if (c.write_patch_report && !artifacts.empty() && artifacts[0].row.ok) {
      write_patch_report_csv(out_dir / "patches_trial0.csv", artifacts[0].patch_report,
                             c.problem.grid.dim());
      if (artifacts[0].result)
        write_coefficient_csv(out_dir / "coefficients_trial0.csv", *artifacts[0].result,
                              dict, artifacts[0].kept_systems);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Dimension study (singular-value analysis)
// ---------------------------------------------------------------------------

struct DimensionCaseResult {
  std::string name;
  std::vector<SvdReport> reports;       // one per (initial, window)
  std::vector<std::string> labels;      // matching labels
};

/// Emits the SVD data behind the trajectory-dimension figures: per-window
/// singular spectra, dominant counts per threshold, and averaged dominant
/// percentages over random-initial sweeps.
inline std::vector<DimensionCaseResult> run_dimension_study(
    const Json& config, const std::filesystem::path& out_dir,
    const SolveOptions& solver = {}) {
  std::vector<DimensionCaseResult> results;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (const auto& cj : config.at("cases")) {
    DimensionCaseResult cr;
    cr.name = cj.at("name").get<std::string>();
    EvolutionProblem base = problem_from_json(cj.at("problem"));
    const bool relative = cj.value("relative", true);

    std::vector<std::pair<std::string, InitialCondition>> initials;
    if (cj.contains("initial_override")) {
      int idx = 0;
      for (const auto& ij : cj.at("initial_override"))
        initials.push_back({ij.value("label", "init" + std::to_string(idx++)),
                            initial_from_json(ij)});
    } else {
      initials.push_back({"", base.initial.at(0)});
    }

    std::vector<std::pair<double, double>> windows;
    if (cj.contains("windows") && cj.at("windows").is_array()) {
      for (const auto& w : cj.at("windows")) windows.push_back({w.at(0), w.at(1)});
    } else {
      windows.push_back({base.grid.time_extent().lo, base.grid.time_extent().hi});
    }

    std::vector<double> thresholds = cj.contains("thresholds")
                                         ? cj.at("thresholds").get<std::vector<double>>()
                                         : std::vector<double>{1e-3};
    if (cj.contains("threshold_sweep")) {
      thresholds.clear();
      const auto& ts = cj.at("threshold_sweep");
      const double lo = ts.at("min").get<double>(), hi = ts.at("max").get<double>();
      const int pts = ts.at("points").get<int>();
      for (int i = 0; i < pts; ++i)
        thresholds.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (pts - 1)));
    }

    std::ofstream counts;
    if (!out_dir.empty()) {
      counts.open(out_dir / (cr.name + "_counts.csv"));
      counts << "# pdeid dimension-study case=" << cr.name
             << " generated=" << timestamp_utc() << "\n";
      counts << "initial,window_start,window_end,threshold,count,percentage\n";
    }

    if (cj.contains("mode_sweep")) {
      const auto& ms = cj.at("mode_sweep");
      const int m_min = ms.at("min").get<int>(), m_max = ms.at("max").get<int>();
      const int trials = ms.value("trials", 20);
      const std::uint64_t seed = ms.value("seed", 11ULL);
      const double thr = ms.value("threshold", 1e-3);
      std::ofstream modes_csv;
      if (!out_dir.empty()) {
        modes_csv.open(out_dir / (cr.name + "_modes.csv"));
        modes_csv << "# pdeid dimension-study mode sweep case=" << cr.name
                  << " generated=" << timestamp_utc() << "\n";
        modes_csv << "modes,mean_count,mean_percentage\n";
      }
      for (int M = m_min; M <= m_max; ++M) {
        double acc_count = 0.0, acc_pct = 0.0;
        for (int t = 0; t < trials; ++t) {
          EvolutionProblem p = base;
          p.initial = {random_fourier_initial(
              M, derive_seed(seed, static_cast<std::uint64_t>(M * 1000 + t)))};
          const TrajectoryField traj = solve(p, solver);
          const auto rep = svd_dimension_report(traj, windows[0].first, windows[0].second,
                                                {thr}, relative);
          acc_count += rep.counts[0].second;
          acc_pct += 100.0 * rep.counts[0].second / rep.singular_values.size();
        }
        if (modes_csv.is_open())
          modes_csv << M << ',' << format_double(acc_count / trials) << ','
                    << format_double(acc_pct / trials) << '\n';
      }
      results.push_back(std::move(cr));
      continue;
    }

    for (const auto& [label, init] : initials) {
      EvolutionProblem p = base;
      p.initial = {init};
      const TrajectoryField traj = solve(p, solver);
      int widx = 0;
      for (const auto& [t0, t1] : windows) {
        SvdReport rep = svd_dimension_report(traj, t0, t1, thresholds, relative);
        if (!out_dir.empty()) {
          const std::string stem = cr.name + (label.empty() ? "" : "_" + label) + "_w" +
                                   std::to_string(widx);
          write_svd_csv(out_dir / (stem + ".csv"), rep);
          for (const auto& [thr, count] : rep.counts)
            counts << label << ',' << format_double(t0) << ',' << format_double(t1) << ','
                   << format_double(thr) << ',' << count << ','
                   << format_double(100.0 * count / rep.singular_values.size()) << '\n';
        }
        cr.labels.push_back(label + "/w" + std::to_string(widx));
        cr.reports.push_back(std::move(rep));
        ++widx;
      }
    }
    results.push_back(std::move(cr));
  }
  return results;
}

// ---------------------------------------------------------------------------
// Patch-trimming comparison
// ---------------------------------------------------------------------------

struct TrimComparisonRow {
  std::string equation;
  double with_trim = std::numeric_limits<double>::quiet_NaN();
  double without_trim = std::numeric_limits<double>::quiet_NaN();
  bool all_completed = false;
};

/// Runs each configured equation twice with identical seeds, filters on and
/// off, and reports the mean identification accuracies side by side.
inline std::vector<TrimComparisonRow> run_trim_comparison(
    const Json& config, const std::filesystem::path& out_dir, int parallelism = 2) {
  std::vector<TrimComparisonRow> rows;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (const auto& ej : config.at("equations")) {
    ExperimentConfig c = experiment_from_json(ej);
    if (config.contains("trials")) c.trials = config.at("trials").get<int>();
    c.write_patch_report = false;

    ExperimentConfig with = c, without = c;
    with.filters.sobolev = true;
    with.filters.variation = true;
    without.filters.sobolev = false;
    without.filters.variation = false;

    TrimComparisonRow row;
    row.equation = c.name;
    const auto rep_with =
        run_experiment(with, out_dir.empty() ? "" : out_dir / (c.name + "_with"),
                       parallelism);
    const auto rep_without =
        run_experiment(without, out_dir.empty() ? "" : out_dir / (c.name + "_without"),
                       parallelism);
    row.with_trim = rep_with.jaccard_mean;
    row.without_trim = rep_without.jaccard_mean;
    row.all_completed = rep_with.all_completed && rep_without.all_completed;
    rows.push_back(row);
  }
  if (!out_dir.empty()) {
    std::ofstream csv(out_dir / "trim_comparison.csv");
    csv << "# pdeid trim-comparison generated=" << timestamp_utc() << "\n";
    csv << "equation,with_trim,without_trim\n";
    for (const auto& r : rows)
      csv << r.equation << ',' << format_double(r.with_trim) << ','
          << format_double(r.without_trim) << '\n';
  }
  return rows;
}

}  // namespace pdeid
