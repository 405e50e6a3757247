#pragma once

#include "pdeid/features.hpp"
#include "pdeid/fft_util.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <vector>

namespace pdeid {

struct SvdReport {
  Vector singular_values;                      // descending
  std::vector<std::pair<double, int>> counts;  // (threshold, count above it)
  double t_start = 0.0;
  double t_end = 0.0;
  bool relative = true;
};

/// Singular spectrum of the snapshot matrix u_jk restricted to a time window,
/// with dominant-value counts per threshold. Thresholds are read relative to
/// the largest singular value by default.
inline SvdReport svd_dimension_report(const TrajectoryField& traj, double t_start,
                                      double t_end, const std::vector<double>& thresholds,
                                      bool relative = true, int field = 0) {
  const SpaceTimeGrid& g = traj.grid();
  const double eps = 1e-9 * g.dt();
  int k0 = -1, k1 = -2;
  for (int k = 0; k < g.time_points(); ++k) {
    const double t = g.t(k);
    if (t >= t_start - eps && t <= t_end + eps) {
      if (k0 < 0) k0 = k;
      k1 = k;
    }
  }
  if (k0 < 0 || k1 < k0) throw ConfigError("svd report: empty time window");

  const Matrix block = traj.field(field).middleCols(k0, k1 - k0 + 1);
  Eigen::BDCSVD<Matrix> svd(block);
  SvdReport rep;
  rep.singular_values = svd.singularValues();
  rep.t_start = t_start;
  rep.t_end = t_end;
  rep.relative = relative;
  const double s1 = rep.singular_values.size() ? rep.singular_values[0] : 0.0;
  for (double thr : thresholds) {
    const double cut = relative ? thr * s1 : thr;
    int count = 0;
    for (Eigen::Index i = 0; i < rep.singular_values.size(); ++i)
      if (rep.singular_values[i] > cut) ++count;
    rep.counts.push_back({thr, count});
  }
  return rep;
}

/// Minimal mode count for unique recovery of a 1D operator of order n: the
/// larger of the even- and odd-derivative unknown counts.
inline int required_mode_count(int order_n) {
  const int even = order_n / 2 + 1;
  const int odd = (order_n + 1) / 2;
  return std::max(even, odd);
}

struct SpectralIdentification {
  std::vector<int> even_orders, odd_orders;
  Vector even_c, odd_c;            // spectral-domain coefficients
  std::map<int, double> p;         // derivative order -> physical coefficient
  std::vector<int> modes;          // DFT bins used
  double even_residual = 0.0;
  double odd_residual = 0.0;
  bool degenerate = false;         // rank-deficient mode configuration
};

struct SpectralOptions {
  double mode_floor = 1e-10;       // relative to max |u_hat(. , t1)|
  int max_auto_modes = 64;
};

/// Identifies a constant-coefficient 1D operator u_t = sum_m p_m d^m u from
/// two snapshots: log-magnitudes of the Fourier ratios give the even orders,
/// arguments the odd orders, each by least squares over the modes Q.
inline SpectralIdentification identify_constant_coeff(const Vector& snap1,
                                                      const Vector& snap2,
                                                      double domain_length, double dt,
                                                      int order_n,
                                                      std::vector<int> modes = {},
                                                      const SpectralOptions& opt = {}) {
  if (snap1.size() != snap2.size() || snap1.size() < 4)
    throw ConfigError("spectral identify: snapshots must agree and have >= 4 points");
  if (dt <= 0.0) throw ConfigError("spectral identify: need t2 > t1");
  if (order_n < 1) throw ConfigError("spectral identify: order must be >= 1");
  const int n = static_cast<int>(snap1.size());

  SpectralDifferentiator sd(n, domain_length);
  std::vector<std::complex<double>> u1(n), u2(n);
  sd.forward(snap1.data(), u1.data());
  sd.forward(snap2.data(), u2.data());

  double umax = 0.0;
  for (int j = 0; j <= n / 2; ++j) umax = std::max(umax, std::abs(u1[j]));
  const double floor_abs = opt.mode_floor * umax;

  if (modes.empty()) {
    for (int j = 0; j <= n / 2 && static_cast<int>(modes.size()) < opt.max_auto_modes; ++j)
      if (std::abs(u1[j]) >= floor_abs && std::abs(u1[j]) > 0.0) modes.push_back(j);
  } else {
    for (int j : modes) {
      if (j < 0 || j > n / 2)
        throw ConfigError("spectral identify: mode bin " + std::to_string(j) +
                          " out of range");
      if (std::abs(u1[j]) < floor_abs)
        throw ConfigError("spectral identify: mode " + std::to_string(j) +
                          " is below the amplitude floor at t1");
    }
  }
  const int need = required_mode_count(order_n);
  if (static_cast<int>(modes.size()) < need)
    throw ConfigError("spectral identify: " + std::to_string(modes.size()) +
                      " usable modes, but order " + std::to_string(order_n) +
                      " needs at least " + std::to_string(need));

  const int Q = static_cast<int>(modes.size());
  Vector ye(Q), yo(Q);
  const double k0 = 2.0 * std::numbers::pi / domain_length;
  for (int q = 0; q < Q; ++q) {
    const std::complex<double> ratio = u2[modes[q]] / u1[modes[q]];
    const double arg = std::arg(ratio);
    if (std::abs(arg) >= std::numbers::pi * (1.0 - 1e-6))
      throw ConfigError("spectral identify: phase ambiguity at mode " +
                        std::to_string(modes[q]) + "; shrink t2 - t1");
    ye[q] = std::log(std::abs(ratio)) / dt;
    yo[q] = arg / dt;
  }

  SpectralIdentification out;
  out.modes = modes;
  for (int m = 0; m <= order_n; ++m)
    (m % 2 == 0 ? out.even_orders : out.odd_orders).push_back(m);

  auto solve_side = [&](const std::vector<int>& orders, const Vector& y, Vector& c,
                        double& residual) {
    Matrix A(Q, orders.size());
    for (int q = 0; q < Q; ++q) {
      const double zeta = k0 * modes[q];
      for (std::size_t a = 0; a < orders.size(); ++a)
        A(q, static_cast<int>(a)) = std::pow(zeta, orders[a]);
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
    cod.setThreshold(1e-12);
    if (cod.rank() < static_cast<Eigen::Index>(orders.size())) out.degenerate = true;
    c = cod.solve(y);
    residual = (A * c - y).norm();
  };
  solve_side(out.even_orders, ye, out.even_c, out.even_residual);
  solve_side(out.odd_orders, yo, out.odd_c, out.odd_residual);

  // c_m = p_m i^m (m even) or p_m i^(m-1) (m odd); both powers are +-1.
  for (std::size_t a = 0; a < out.even_orders.size(); ++a) {
    const int m = out.even_orders[a];
    const double sign = (m / 2) % 2 == 0 ? 1.0 : -1.0;
    out.p[m] = sign * out.even_c[static_cast<int>(a)];
  }
  for (std::size_t a = 0; a < out.odd_orders.size(); ++a) {
    const int m = out.odd_orders[a];
    const double sign = ((m - 1) / 2) % 2 == 0 ? 1.0 : -1.0;
    out.p[m] = sign * out.odd_c[static_cast<int>(a)];
  }
  return out;
}

struct FeatureConditioning {
  Vector singular_values;  // descending
  double ratio = 0.0;      // sigma_min / sigma_max
};

/// Singular spectrum of the pointwise feature matrix for a pure-derivative
/// dictionary; an identifiability health metric for the sampled data.
inline FeatureConditioning feature_conditioning(const Dictionary& dict,
                                                const std::vector<GridPoint>& points,
                                                DerivativeCache& cache) {
  for (const auto& e : dict.entries())
    if (e.kind != FeatureDescriptor::Kind::product || e.factors.size() != 1)
      throw ConfigError("feature_conditioning: dictionary must contain single "
                        "derivative features only");
  const Matrix F = evaluate_features(dict, points, cache);
  Eigen::JacobiSVD<Matrix> svd(F);
  FeatureConditioning fc;
  fc.singular_values = svd.singularValues();
  const double smax = fc.singular_values.size() ? fc.singular_values[0] : 0.0;
  const double smin = fc.singular_values.size()
                          ? fc.singular_values[fc.singular_values.size() - 1]
                          : 0.0;
  fc.ratio = smax > 0.0 ? smin / smax : 0.0;
  return fc;
}

}  // namespace pdeid
