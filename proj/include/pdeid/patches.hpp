#pragma once

#include "pdeid/features.hpp"
#include "pdeid/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace pdeid {

/// Quantile of the 90% two-sided normal test used by the variation criterion.
inline constexpr double kAlpha090 = 1.644853;

/// Time indices for sensors collecting at `count` uniformly distributed
/// instants, leaving room for the time radius. The endpoint convention is
/// configurable because either reading is consistent with the experiments.
inline std::vector<int> uniform_observation_times(const SpaceTimeGrid& grid, int count,
                                                  int time_radius,
                                                  bool include_endpoints = true) {
  const int lo = time_radius, hi = grid.time_points() - 1 - time_radius;
  if (count < 1 || hi < lo)
    throw ConfigError("observation times: window does not fit the trajectory");
  std::vector<int> out(count);
  for (int i = 0; i < count; ++i) {
    double f;
    if (include_endpoints)
      f = count == 1 ? 0.5 : static_cast<double>(i) / (count - 1);
    else
      f = static_cast<double>(i + 1) / (count + 1);
    out[i] = lo + static_cast<int>(std::lround(f * (hi - lo)));
  }
  return out;
}

/// n_sensors uniformly random spatial centers (deterministic under the seed),
/// each replicated at every observation time.
inline std::vector<Patch> sample_sensors(const SpaceTimeGrid& grid, int n_sensors,
                                         const std::vector<int>& space_radius,
                                         int time_radius,
                                         const std::vector<int>& observation_times,
                                         std::uint64_t seed) {
  if (n_sensors < 1) throw ConfigError("sample_sensors: need at least one sensor");
  if (static_cast<int>(space_radius.size()) != grid.dim())
    throw ConfigError("sample_sensors: one radius per space axis required");
  for (int t : observation_times)
    if (t - time_radius < 0 || t + time_radius >= grid.time_points())
      throw ConfigError("sample_sensors: patch box does not fit observation time " +
                        std::to_string(t));
  Rng rng(seed);
  std::vector<Patch> patches;
  patches.reserve(static_cast<std::size_t>(n_sensors) * observation_times.size());
  int id = 0;
  for (int s = 0; s < n_sensors; ++s) {
    std::vector<int> center(grid.dim());
    for (int a = 0; a < grid.dim(); ++a) {
      const int n = grid.space_points(a);
      if (grid.periodic(a)) {
        center[a] = static_cast<int>(rng.uniform_int(n));
      } else {
        const int span = n - 2 * space_radius[a];
        if (span < 1)
          throw ConfigError("sample_sensors: box exceeds non-periodic extent");
        center[a] = space_radius[a] + static_cast<int>(rng.uniform_int(span));
      }
    }
    for (int t : observation_times)
      patches.push_back(make_patch(grid, center, t, space_radius, time_radius, id++));
  }
  return patches;
}

/// Sensors whose spatial centers lie on a circle of the given radius (in grid
/// points) around the domain center; used by the 2D circular-flow study.
inline std::vector<Patch> sample_sensors_on_circle(const SpaceTimeGrid& grid,
                                                   int n_sensors, double circle_radius,
                                                   const std::vector<int>& space_radius,
                                                   int time_radius,
                                                   const std::vector<int>& observation_times,
                                                   std::uint64_t seed) {
  if (grid.dim() != 2) throw ConfigError("sample_sensors_on_circle: 2D grids only");
  Rng rng(seed);
  std::vector<Patch> patches;
  int id = 0;
  for (int s = 0; s < n_sensors; ++s) {
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    std::vector<int> center(2);
    center[0] = static_cast<int>(std::lround(grid.space_points(0) / 2.0 +
                                             circle_radius * std::cos(theta)));
    center[1] = static_cast<int>(std::lround(grid.space_points(1) / 2.0 +
                                             circle_radius * std::sin(theta)));
    for (int a = 0; a < 2; ++a)
      center[a] = std::clamp(center[a], space_radius[a],
                             grid.space_points(a) - 1 - space_radius[a]);
    for (int t : observation_times)
      patches.push_back(make_patch(grid, center, t, space_radius, time_radius, id++));
  }
  return patches;
}

/// beta = sqrt( (1/m) sum_points sum_{1<=|alpha|<=p_max, fields} (d^alpha u)^2 ),
/// the discrete local Sobolev semi-norm of the patch.
inline double sobolev_seminorm(const PatchRegressionSystem& sys, int p_max) {
  if (sys.sobolev.cols() == 0 || sys.sobolev.rows() == 0)
    throw DataError("sobolev_seminorm: system has no derivative columns");
  double acc = 0.0;
  bool any = false;
  for (std::size_t c = 0; c < sys.sobolev_cols.size(); ++c) {
    const int order = total_order(sys.sobolev_cols[c].second);
    if (order < 1 || order > p_max) continue;
    any = true;
    acc += sys.sobolev.col(static_cast<int>(c)).squaredNorm();
  }
  if (!any) throw DataError("sobolev_seminorm: no derivative columns up to requested order");
  return std::sqrt(acc / sys.sobolev.rows());
}

/// Nearest-rank order statistic: element at index floor(q*n) from below /
/// symmetric from above. Chosen so that strict comparisons trim at most
/// floor(q*n) points per tail.
inline std::pair<double, double> percentile_band(std::vector<double> values, double q_lo,
                                                 double q_hi) {
  if (values.empty()) throw ConfigError("percentile_band: empty list");
  std::sort(values.begin(), values.end());
  const long n = static_cast<long>(values.size());
  const long lo_idx = static_cast<long>(std::floor(q_lo * n));
  const long hi_idx = n - 1 - static_cast<long>(std::floor((1.0 - q_hi) * n));
  return {values[std::clamp(lo_idx, 0L, n - 1)], values[std::clamp(hi_idx, 0L, n - 1)]};
}

/// Keep mask for the Sobolev band filter: drops beta strictly below the 1st
/// percentile or strictly above the 99th. Degenerate lists keep everything.
inline std::vector<bool> filter_by_sobolev(const std::vector<double>& betas,
                                           double q_lo = 0.01, double q_hi = 0.99) {
  const auto [lo, hi] = percentile_band(betas, q_lo, q_hi);
  std::vector<bool> keep(betas.size());
  for (std::size_t i = 0; i < betas.size(); ++i) keep[i] = !(betas[i] < lo || betas[i] > hi);
  return keep;
}

/// Deterministic greedy tiling of non-intersecting boxes, row-major in space
/// with time fastest, until `count` patches are placed.
inline std::vector<Patch> noise_estimation_patches(const SpaceTimeGrid& grid, int count,
                                                   const std::vector<int>& space_radius,
                                                   int time_radius) {
  std::vector<Patch> out;
  out.reserve(count);
  std::vector<int> center(grid.dim());
  std::vector<int> pos(grid.dim(), 0);
  const int d = grid.dim();
  // Centers advance by the full box width so boxes never intersect.
  std::vector<int> starts(d), steps(d), limits(d);
  for (int a = 0; a < d; ++a) {
    starts[a] = space_radius[a];
    steps[a] = 2 * space_radius[a] + 1;
    limits[a] = grid.space_points(a) - 1 - space_radius[a];
    if (starts[a] > limits[a])
      throw ConfigError("noise patches: box does not fit axis " + std::to_string(a));
  }
  const int t_step = 2 * time_radius + 1;
  int id = 0;
  for (int a = 0; a < d; ++a) center[a] = starts[a];
  while (true) {
    for (int t = time_radius; t + time_radius < grid.time_points(); t += t_step) {
      out.push_back(make_patch(grid, center, t, space_radius, time_radius, id++));
      if (static_cast<int>(out.size()) == count) return out;
    }
    int a = d - 1;
    for (; a >= 0; --a) {
      center[a] += steps[a];
      if (center[a] <= limits[a]) break;
      center[a] = starts[a];
    }
    if (a < 0) break;
  }
  throw ConfigError("noise patches: grid fits only " + std::to_string(out.size()) +
                    " non-intersecting boxes, " + std::to_string(count) + " requested");
}

inline Vector extract_patch_values(const TrajectoryField& traj, const Patch& p,
                                   int field = 0) {
  const auto pts = patch_points(traj.grid(), p);
  Vector v(pts.size());
  const Matrix& data = traj.field(field);
  for (std::size_t i = 0; i < pts.size(); ++i) v[i] = data(pts[i].flat_space, pts[i].time);
  return v;
}

struct NoiseEstimate {
  double sigma2_hat = 0.0;
  int patch_count = 0;       // N
  int points_per_patch = 0;  // B
  double bias_bound = 0.0;
  double variance_bound = 0.0;
  double lipschitz = 0.0;
  double radius = 0.0;
};

/// Biased variance estimator from non-intersecting equal-size patches:
/// sigma2 = B * sum_m (zeta_m - mean zeta)^2 / ((N-1)(B-1)) with
/// zeta_n = u(center_n) - patch mean. Bias and variance bounds follow the
/// Lipschitz constant and patch radius.
inline NoiseEstimate estimate_noise_variance(const TrajectoryField& traj,
                                             const std::vector<Patch>& patches,
                                             int field = 0,
                                             std::optional<double> lipschitz = {}) {
  const SpaceTimeGrid& grid = traj.grid();
  const int N = static_cast<int>(patches.size());
  if (N < 2) throw ConfigError("noise estimate: need at least 2 patches");
  const long B = patches[0].point_count();
  if (B < 2) throw ConfigError("noise estimate: need at least 2 points per patch");
  for (const auto& p : patches)
    if (p.point_count() != B)
      throw ConfigError("noise estimate: patches must have equal cardinality");
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j)
      if (patches_intersect(grid, patches[i], patches[j]))
        throw ConfigError("noise estimate: patches " + std::to_string(i) + " and " +
                          std::to_string(j) + " intersect");

  const Matrix& data = traj.field(field);
  Vector zeta(N);
  for (int n = 0; n < N; ++n) {
    const auto pts = patch_points(grid, patches[n]);
    double mean = 0.0;
    for (const auto& pt : pts) mean += data(pt.flat_space, pt.time);
    mean /= static_cast<double>(pts.size());
    zeta[n] = data(grid.flat_index(patches[n].center_space), patches[n].center_time) - mean;
  }
  const double zbar = zeta.mean();
  const double ss = (zeta.array() - zbar).square().sum();
  NoiseEstimate est;
  est.patch_count = N;
  est.points_per_patch = static_cast<int>(B);
  est.sigma2_hat = static_cast<double>(B) * ss / ((N - 1.0) * (B - 1.0));

  // Physical patch radius R = max over axes of the half-width.
  double R = patches[0].time_radius * grid.dt();
  for (int a = 0; a < grid.dim(); ++a)
    R = std::max(R, patches[0].space_radius[a] * grid.dx(a));
  est.radius = R;

  double L;
  if (lipschitz) {
    L = *lipschitz;
  } else {
    // Default: max finite-difference space-time gradient over the patches.
    std::vector<Matrix> grads;
    for (int a = 0; a <= grid.dim(); ++a)
      grads.push_back(fd_derivative(data, grid, a, 1, 2));
    double m2 = 0.0;
    for (const auto& p : patches)
      for (const auto& pt : patch_points(grid, p)) {
        double g2 = 0.0;
        for (const auto& g : grads) {
          const double v = g(pt.flat_space, pt.time);
          g2 += v * v;
        }
        m2 = std::max(m2, g2);
      }
    L = std::sqrt(m2);
  }
  est.lipschitz = L;

  const double D = grid.dim() + 1;
  est.bias_bound = D * N * B * L * L * R * R / ((N - 1.0) * (B - 1.0));
  const double gamma = 4.0 * D * L * L * R * R;
  est.variance_bound = 2.0 * est.sigma2_hat * est.sigma2_hat / (N - 1.0) +
                       N * B * est.sigma2_hat * gamma / ((N - 1.0) * (N - 1.0) * (B - 1.0));
  return est;
}

/// Hypothesis test for visible variation: keep the patch iff some pair of
/// points differs by more than sqrt(2) * 1.644853 * sigma_hat; for systems,
/// the minimum difference across fields must clear the threshold. Patches
/// above 200 points are checked on a deterministic stride subsample.
inline bool variation_test(const std::vector<Vector>& per_field_values, double sigma_hat) {
  if (per_field_values.empty() || per_field_values[0].size() == 0)
    throw ConfigError("variation_test: empty patch");
  if (sigma_hat < 0.0) throw ConfigError("variation_test: sigma_hat must be >= 0");
  const long B = per_field_values[0].size();
  for (const auto& v : per_field_values)
    if (v.size() != B) throw ConfigError("variation_test: field sample counts disagree");

  const double threshold = std::numbers::sqrt2 * kAlpha090 * sigma_hat;
  std::vector<long> idx;
  if (B <= 200) {
    idx.resize(B);
    for (long i = 0; i < B; ++i) idx[i] = i;
  } else {
    idx.resize(200);
    for (long i = 0; i < 200; ++i) idx[i] = i * B / 200;
  }
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = i + 1; j < idx.size(); ++j) {
      double mind = std::numeric_limits<double>::infinity();
      for (const auto& v : per_field_values)
        mind = std::min(mind, std::abs(v[idx[i]] - v[idx[j]]));
      if (mind > threshold) return true;
    }
  }
  return false;
}

struct ConditionDiagnostic {
  Matrix correlation;  // K x K
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  double ratio = 0.0;  // lambda_min / lambda_max, 0 for a zero matrix
};

/// Correlation matrix M_kk' ~ integral over the patch of f_k f_k' (discrete
/// sum times the cell volume) and its extreme eigenvalues. The eigenvalue
/// ratio brackets the squared condition constant of the patch within a
/// factor sqrt(K).
inline ConditionDiagnostic condition_diagnostic(const PatchRegressionSystem& sys,
                                                double cell_volume = 1.0) {
  ConditionDiagnostic d;
  d.correlation = cell_volume * (sys.F.transpose() * sys.F);
  Eigen::SelfAdjointEigenSolver<Matrix> es(d.correlation, Eigen::EigenvaluesOnly);
  const Vector ev = es.eigenvalues();
  d.lambda_max = std::max(0.0, ev.maxCoeff());
  d.lambda_min = std::max(0.0, ev.minCoeff());
  d.ratio = d.lambda_max > 0.0 ? d.lambda_min / d.lambda_max : 0.0;
  return d;
}

/// Reported (never filtering) check of the identification guarantee
/// K_B > 2 L R / eps, using the conservative lower bracket of K_B from the
/// correlation-eigenvalue ratio.
inline bool condition_inequality(const ConditionDiagnostic& d, int dictionary_size,
                                 double lipschitz, double radius, double epsilon) {
  if (epsilon <= 0.0) throw ConfigError("condition_inequality: epsilon must be positive");
  const double k2_lower = d.ratio / std::sqrt(static_cast<double>(dictionary_size));
  return std::sqrt(std::max(0.0, k2_lower)) > 2.0 * lipschitz * radius / epsilon;
}

}  // namespace pdeid
