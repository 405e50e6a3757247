#include "pdeid/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

pdeid::Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw pdeid::ConfigError("cannot open config file " + path);
  return pdeid::Json::parse(in);
}

void apply_seed_override(pdeid::ExperimentConfig& c, std::uint64_t seed) {
  c.sensors.seed = seed;
  c.noise_seed = seed;
}

int cmd_solve(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
  const pdeid::Json j = load_json(config_path);
  pdeid::ExperimentConfig c = pdeid::experiment_from_json(j);
  if (seed) c.noise_seed = *seed;
  pdeid::TrajectoryField traj = pdeid::solve(c.problem, c.solver);
  if (c.downsample_strides)
    traj = pdeid::downsample(traj, c.downsample_strides->first,
                             c.downsample_strides->second);
  if (c.noise_percent > 0.0)
    traj = pdeid::add_noise(traj, c.noise_percent, c.noise_seed);

  std::filesystem::create_directories(out_dir);
  pdeid::Json prov = {{"config", j},
                      {"noise_seed", c.noise_seed},
                      {"generated", pdeid::timestamp_utc()}};
  pdeid::save_trajectory(std::filesystem::path(out_dir) / "trajectory.bin", traj, prov);
  if (traj.grid().dim() == 1)
    for (int f = 0; f < traj.field_count(); ++f)
      pdeid::write_csv_1d(std::filesystem::path(out_dir) /
                              ("trajectory_" + traj.field_names()[f] + ".csv"),
                          traj, f);
  std::cout << "solved " << pdeid::kind_name(c.problem.kind) << ": "
            << traj.grid().flat_space_size() << " x " << traj.grid().time_points()
            << " points, " << traj.field_count() << " field(s) -> " << out_dir << "\n";
  return 0;
}

int cmd_identify(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed, int parallelism) {
  pdeid::ExperimentConfig c = pdeid::experiment_from_json(load_json(config_path));
  if (seed) apply_seed_override(c, *seed);
  const auto report = pdeid::run_experiment(c, out_dir, parallelism);
  std::cout << "experiment " << report.name << ": " << report.rows.size() << " trial(s)";
  if (std::isfinite(report.jaccard_mean))
    std::cout << ", mean Jaccard " << report.jaccard_mean;
  if (std::isfinite(report.coeff_mean))
    std::cout << ", mean coefficient error " << report.coeff_mean;
  std::cout << "\n";
  for (const auto& r : report.rows)
    if (!r.ok) std::cout << "  trial " << r.trial << " failed: " << r.error << "\n";
  return report.all_completed ? 0 : 1;
}

int cmd_dimension(const std::string& config_path, const std::string& out_dir) {
  const auto results = pdeid::run_dimension_study(load_json(config_path), out_dir);
  for (const auto& r : results) {
    std::cout << "case " << r.name << ":";
    for (std::size_t i = 0; i < r.reports.size(); ++i)
      std::cout << ' ' << r.labels[i] << "=" << r.reports[i].counts.front().second;
    std::cout << "\n";
  }
  return 0;
}

int cmd_trim(const std::string& config_path, const std::string& out_dir, int parallelism) {
  const auto rows = pdeid::run_trim_comparison(load_json(config_path), out_dir, parallelism);
  bool ok = true;
  std::cout << "equation          with_trim   without_trim\n";
  for (const auto& r : rows) {
    std::printf("%-16s  %9.4f   %11.4f\n", r.equation.c_str(), r.with_trim,
                r.without_trim);
    ok &= r.all_completed;
  }
  return ok ? 0 : 1;
}

int cmd_noise_estimate(const std::string& config_path, const std::string& out_dir,
                       std::optional<std::uint64_t> seed) {
  pdeid::ExperimentConfig c = pdeid::experiment_from_json(load_json(config_path));
  if (seed) c.noise_seed = *seed;
  pdeid::TrajectoryField traj = pdeid::solve(c.problem, c.solver);
  if (c.downsample_strides)
    traj = pdeid::downsample(traj, c.downsample_strides->first,
                             c.downsample_strides->second);
  if (c.noise_percent > 0.0) traj = pdeid::add_noise(traj, c.noise_percent, c.noise_seed);
  const auto patches = pdeid::noise_estimation_patches(
      traj.grid(), c.filters.noise_patch_count, c.filters.noise_patch_space_radius,
      c.filters.noise_patch_time_radius);

  pdeid::Json out = pdeid::Json::array();
  for (int f = 0; f < traj.field_count(); ++f) {
    const auto est =
        pdeid::estimate_noise_variance(traj, patches, f, c.filters.lipschitz);
    std::cout << "field " << traj.field_names()[f] << ": sigma2_hat = " << est.sigma2_hat
              << " (N = " << est.patch_count << ", B = " << est.points_per_patch
              << ", bias bound " << est.bias_bound << ", variance bound "
              << est.variance_bound << ")\n";
    out.push_back({{"field", traj.field_names()[f]},
                   {"sigma2_hat", est.sigma2_hat},
                   {"patch_count", est.patch_count},
                   {"points_per_patch", est.points_per_patch},
                   {"bias_bound", est.bias_bound},
                   {"variance_bound", est.variance_bound},
                   {"lipschitz", est.lipschitz},
                   {"radius", est.radius}});
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(std::filesystem::path(out_dir) / "noise_estimate.json")
        << out.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdeid: PDE identification from a single trajectory"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int parallelism = 2;

  auto add_common = [&](CLI::App* sub, bool with_parallel) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "seed override");
    if (with_parallel)
      sub->add_option("--parallel", parallelism, "concurrent trials (default 2)");
  };

  auto* solve = app.add_subcommand("solve", "solve a benchmark problem and save it");
  add_common(solve, false);
  auto* identify =
      app.add_subcommand("identify", "run the full identification experiment");
  add_common(identify, true);
  auto* dimension =
      app.add_subcommand("dimension-study", "singular-value trajectory analysis");
  add_common(dimension, false);
  auto* trim = app.add_subcommand("trim-compare",
                                  "identification accuracy with and without patch trimming");
  add_common(trim, true);
  auto* noise = app.add_subcommand("noise-estimate", "estimate the noise variance");
  add_common(noise, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(config_path, out_dir, seed);
    if (identify->parsed()) return cmd_identify(config_path, out_dir, seed, parallelism);
    if (dimension->parsed()) return cmd_dimension(config_path, out_dir);
    if (trim->parsed()) return cmd_trim(config_path, out_dir, parallelism);
    if (noise->parsed()) return cmd_noise_estimate(config_path, out_dir, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
