#pragma once

#include "pdeid/analytic.hpp"
#include "pdeid/dictionary.hpp"
#include "pdeid/patch.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace pdeid {

/// Assembled local least-squares system for one patch: feature values F
/// against the time derivative, plus the pure spatial-derivative samples the
/// Sobolev filter needs.
struct PatchRegressionSystem {
  Patch patch;
  Matrix F;        // m x K
  Vector target;   // u_t at the patch points
  Matrix points;   // m x (d+1) physical coordinates (x..., t)
  Matrix sobolev;  // m x |sobolev_cols| spatial derivative samples
  std::vector<std::pair<int, MultiIndex>> sobolev_cols;  // (field, alpha)

  int feature_count() const { return static_cast<int>(F.cols()); }
  int size() const { return static_cast<int>(F.rows()); }
};

namespace detail {
inline void check_points(const SpaceTimeGrid& grid, const std::vector<GridPoint>& pts) {
  for (const auto& p : pts) {
    if (p.flat_space < 0 || p.flat_space >= grid.flat_space_size())
      throw DataError("features: spatial index out of range");
    if (p.time < 0 || p.time >= grid.time_points())
      throw DataError("features: point too close to a non-periodic boundary for the stencil");
  }
}

/// All (field, alpha) pairs with 1 <= |alpha| <= p_max, every field; these are
/// the columns the Sobolev semi-norm sums over.
inline std::vector<std::pair<int, MultiIndex>> sobolev_columns(int n_fields, int dim,
                                                               int p_max) {
  std::vector<MultiIndex> alphas;
  MultiIndex cur(dim, 0);
  enumerate_alphas(dim, p_max, cur, 0, alphas);
  std::vector<std::pair<int, MultiIndex>> cols;
  for (int f = 0; f < n_fields; ++f)
    for (const auto& a : alphas)
      if (total_order(a) >= 1) cols.push_back({f, a});
  return cols;
}
}  // namespace detail

/// Feature matrix at the given grid points; entry (m, k) = f_k at point m.
/// Derivative arrays are computed once per (field, multi-index) via the cache.
inline Matrix evaluate_features(const Dictionary& dict,
                                const std::vector<GridPoint>& points,
                                DerivativeCache& cache) {
  const SpaceTimeGrid& grid = cache.trajectory().grid();
  detail::check_points(grid, points);
  const int m = static_cast<int>(points.size());
  Matrix F(m, dict.size());
  for (int k = 0; k < dict.size(); ++k) {
    const FeatureDescriptor& d = dict.entry(k);
    if (d.kind == FeatureDescriptor::Kind::product) {
      F.col(k).setOnes();
      for (const auto& fac : d.factors) {
        const Matrix& arr = cache.spatial(fac.field, fac.alpha);
        for (int i = 0; i < m; ++i) F(i, k) *= arr(points[i].flat_space, points[i].time);
      }
    } else {
      const auto& fac = d.factors[0];
      const Matrix& arr = cache.spatial(fac.field, fac.alpha);
      const bool is_sin = d.kind == FeatureDescriptor::Kind::sin_of;
      for (int i = 0; i < m; ++i) {
        const double v = arr(points[i].flat_space, points[i].time);
        F(i, k) = is_sin ? std::sin(v) : std::cos(v);
      }
    }
  }
  return F;
}

/// Assembles the local regression system of a patch from finite-difference
/// features; the target u_t comes from the same stencil family.
inline PatchRegressionSystem assemble_patch_system(const Dictionary& dict,
                                                   const Patch& patch,
                                                   DerivativeCache& cache,
                                                   int target_field = 0) {
  const SpaceTimeGrid& grid = cache.trajectory().grid();
  const auto pts = patch_points(grid, patch);
  if (pts.empty()) throw ConfigError("features: degenerate patch with zero points");

  PatchRegressionSystem sys;
  sys.patch = patch;
  sys.F = evaluate_features(dict, pts, cache);

  const int m = static_cast<int>(pts.size());
  sys.target.resize(m);
  const Matrix& ut = cache.time_derivative(target_field);
  for (int i = 0; i < m; ++i) sys.target[i] = ut(pts[i].flat_space, pts[i].time);

  sys.points.resize(m, grid.dim() + 1);
  for (int i = 0; i < m; ++i) {
    const auto ix = grid.unflatten(pts[i].flat_space);
    for (int a = 0; a < grid.dim(); ++a) sys.points(i, a) = grid.x(a, ix[a]);
    sys.points(i, grid.dim()) = grid.t(pts[i].time);
  }

  sys.sobolev_cols = detail::sobolev_columns(cache.trajectory().field_count(), grid.dim(),
                                             dict.max_spatial_order());
  sys.sobolev.resize(m, static_cast<int>(sys.sobolev_cols.size()));
  for (std::size_t c = 0; c < sys.sobolev_cols.size(); ++c) {
    const Matrix& arr = cache.spatial(sys.sobolev_cols[c].first, sys.sobolev_cols[c].second);
    for (int i = 0; i < m; ++i)
      sys.sobolev(i, static_cast<int>(c)) = arr(pts[i].flat_space, pts[i].time);
  }
  return sys;
}

/// Same assembly, but every feature and the target are evaluated from
/// closed-form fields (exact data and exact derivatives; 1D only).
inline PatchRegressionSystem assemble_patch_system_exact(const Dictionary& dict,
                                                         const Patch& patch,
                                                         const AnalyticFieldSet& fields,
                                                         const SpaceTimeGrid& grid,
                                                         int target_field = 0) {
  if (grid.dim() != 1)
    throw ConfigError("features: exact assembly is available for 1D problems only");
  const auto pts = patch_points(grid, patch);
  if (pts.empty()) throw ConfigError("features: degenerate patch with zero points");
  const int m = static_cast<int>(pts.size());

  PatchRegressionSystem sys;
  sys.patch = patch;
  sys.points.resize(m, 2);
  for (int i = 0; i < m; ++i) {
    sys.points(i, 0) = grid.x(0, static_cast<int>(pts[i].flat_space));
    sys.points(i, 1) = grid.t(pts[i].time);
  }

  auto deriv = [&](int field, int order, int i) {
    return fields.fields.at(field)->space_derivative(order, sys.points(i, 0),
                                                     sys.points(i, 1));
  };

  sys.F.resize(m, dict.size());
  for (int k = 0; k < dict.size(); ++k) {
    const FeatureDescriptor& d = dict.entry(k);
    for (int i = 0; i < m; ++i) {
      if (d.kind == FeatureDescriptor::Kind::product) {
        double v = 1.0;
        for (const auto& fac : d.factors) v *= deriv(fac.field, fac.alpha[0], i);
        sys.F(i, k) = v;
      } else {
        const double v = deriv(d.factors[0].field, d.factors[0].alpha[0], i);
        sys.F(i, k) = d.kind == FeatureDescriptor::Kind::sin_of ? std::sin(v) : std::cos(v);
      }
    }
  }

  sys.target.resize(m);
  for (int i = 0; i < m; ++i)
    sys.target[i] =
        fields.fields.at(target_field)->time_derivative(sys.points(i, 0), sys.points(i, 1));

  sys.sobolev_cols = detail::sobolev_columns(static_cast<int>(fields.fields.size()), 1,
                                             dict.max_spatial_order());
  sys.sobolev.resize(m, static_cast<int>(sys.sobolev_cols.size()));
  for (std::size_t c = 0; c < sys.sobolev_cols.size(); ++c)
    for (int i = 0; i < m; ++i)
      sys.sobolev(i, static_cast<int>(c)) =
          deriv(sys.sobolev_cols[c].first, sys.sobolev_cols[c].second[0], i);
  return sys;
}

}  // namespace pdeid
