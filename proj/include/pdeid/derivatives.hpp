#pragma once

#include "pdeid/grid.hpp"

#include <map>
#include <utility>
#include <vector>

namespace pdeid {

/// Fornberg's algorithm: weights of the m-th derivative at point z from
/// samples at arbitrary nodes xs. Exact for polynomials of degree < xs.size().
template <class Scalar>
VectorX<Scalar> fornberg_weights(Scalar z, const VectorX<Scalar>& xs, int m) {
  const int n = static_cast<int>(xs.size());
  if (m < 0 || n < m + 1)
    throw ConfigError("fornberg_weights: need at least order+1 nodes");
  MatrixX<Scalar> C = MatrixX<Scalar>::Zero(n, m + 1);
  Scalar c1 = 1, c4 = xs[0] - z;
  C(0, 0) = 1;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, m);
    Scalar c2 = 1, c5 = c4;
    c4 = xs[i] - z;
    for (int j = 0; j < i; ++j) {
      const Scalar c3 = xs[i] - xs[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          C(i, k) = c1 * (Scalar(k) * C(i - 1, k - 1) - c5 * C(i - 1, k)) / c2;
        C(i, 0) = -c1 * c5 * C(i - 1, 0) / c2;
      }
      for (int k = mn; k >= 1; --k) C(j, k) = (c4 * C(j, k) - Scalar(k) * C(j, k - 1)) / c3;
      C(j, 0) = c4 * C(j, 0) / c3;
    }
    c1 = c2;
  }
  return C.col(m);
}

namespace detail {

/// Central stencil point count for derivative `order` at the requested
/// accuracy (symmetry gives even-order boosts).
inline int central_width(int order, int accuracy) {
  int np = order + 1;
  if (np % 2 == 0) ++np;
  while (2 * ((np - order + 1) / 2) < accuracy) np += 2;
  return np;
}

struct StencilRow {
  std::vector<int> offsets;  // absolute positions along the axis
  std::vector<double> weights;
};

/// One stencil row per axis position. Periodic axes reuse a single central
/// stencil with wrapped indices; non-periodic axes switch to one-sided
/// windows of order+accuracy points near the ends.
inline std::vector<StencilRow> build_axis_stencils(int n, double h, bool periodic,
                                                   int order, int accuracy) {
  const int npc = central_width(order, accuracy);
  if (npc > n)
    throw ConfigError("fd_derivative: stencil of " + std::to_string(npc) +
                      " points is wider than the axis (" + std::to_string(n) + ")");
  const int half = npc / 2;
  Vector xc(npc);
  for (int j = 0; j < npc; ++j) xc[j] = (j - half) * h;
  const Vector wc = fornberg_weights(0.0, xc, order);

  std::vector<StencilRow> rows(n);
  if (periodic) {
    for (int i = 0; i < n; ++i) {
      StencilRow r;
      r.offsets.resize(npc);
      r.weights.assign(wc.data(), wc.data() + npc);
      for (int j = 0; j < npc; ++j) {
        int p = (i + j - half) % n;
        if (p < 0) p += n;
        r.offsets[j] = p;
      }
      rows[i] = std::move(r);
    }
    return rows;
  }

  const int nps = std::min(n, order + accuracy);
  for (int i = 0; i < n; ++i) {
    if (i >= half && i + half < n) {
      StencilRow r;
      r.offsets.resize(npc);
      r.weights.assign(wc.data(), wc.data() + npc);
      for (int j = 0; j < npc; ++j) r.offsets[j] = i + j - half;
      rows[i] = std::move(r);
    } else {
      const int start = (i < half) ? 0 : n - nps;
      Vector xs(nps);
      for (int j = 0; j < nps; ++j) xs[j] = (start + j - i) * h;
      const Vector ws = fornberg_weights(0.0, xs, order);
      StencilRow r;
      r.offsets.resize(nps);
      r.weights.assign(ws.data(), ws.data() + nps);
      for (int j = 0; j < nps; ++j) r.offsets[j] = start + j;
      rows[i] = std::move(r);
    }
  }
  return rows;
}

}  // namespace detail

/// Finite-difference derivative of a (flattened space) x (time) field along
/// one axis. Axes 0..dim-1 are space, axis dim is time. Periodic axes wrap;
/// non-periodic axes fall back to one-sided stencils at the boundaries.
inline Matrix fd_derivative(const Matrix& field, const SpaceTimeGrid& grid, int axis,
                            int order, int accuracy = 4) {
  if (order < 1) throw ConfigError("fd_derivative: order must be >= 1");
  if (accuracy < 1) throw ConfigError("fd_derivative: accuracy must be >= 1");
  const int d = grid.dim();
  if (axis < 0 || axis > d)
    throw ConfigError("fd_derivative: axis " + std::to_string(axis) + " out of range");
  if (field.rows() != grid.flat_space_size() || field.cols() != grid.time_points())
    throw DataError("fd_derivative: field shape does not match grid");

  Matrix out(field.rows(), field.cols());

  if (axis == d) {  // time
    const auto rows =
        detail::build_axis_stencils(grid.time_points(), grid.dt(), false, order, accuracy);
    out.setZero();
    for (int k = 0; k < grid.time_points(); ++k)
      for (std::size_t j = 0; j < rows[k].offsets.size(); ++j)
        out.col(k) += rows[k].weights[j] * field.col(rows[k].offsets[j]);
    return out;
  }

  const int n = grid.space_points(axis);
  const auto rows =
      detail::build_axis_stencils(n, grid.dx(axis), grid.periodic(axis), order, accuracy);
  long inner = 1;
  for (int a = axis + 1; a < d; ++a) inner *= grid.space_points(a);
  const long outer = grid.flat_space_size() / (inner * n);

  for (int k = 0; k < grid.time_points(); ++k) {
    for (long o = 0; o < outer; ++o) {
      const long base = o * n * inner;
      for (int i = 0; i < n; ++i) {
        const auto& r = rows[i];
        for (long in = 0; in < inner; ++in) {
          double acc = 0.0;
          for (std::size_t j = 0; j < r.offsets.size(); ++j)
            acc += r.weights[j] * field(base + r.offsets[j] * inner + in, k);
          out(base + i * inner + in, k) = acc;
        }
      }
    }
  }
  return out;
}

/// Spatial multi-index (one derivative order per axis).
using MultiIndex = std::vector<int>;

inline int total_order(const MultiIndex& a) {
  int s = 0;
  for (int v : a) s += v;
  return s;
}

/// Lazily computed derivative arrays over a whole trajectory, keyed by
/// (field, multi-index). Spatial stencils are 4th order, the time derivative
/// 2nd order. Fill happens on first use; afterwards lookups are read-only.
class DerivativeCache {
 public:
  explicit DerivativeCache(const TrajectoryField& traj, int space_accuracy = 4,
                           int time_accuracy = 2)
      : traj_(&traj), space_acc_(space_accuracy), time_acc_(time_accuracy) {}

  const Matrix& spatial(int field, const MultiIndex& alpha) {
    const auto key = std::make_pair(field, alpha);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const SpaceTimeGrid& g = traj_->grid();
    if (static_cast<int>(alpha.size()) != g.dim())
      throw ConfigError("derivative cache: multi-index rank does not match grid");
    Matrix m = traj_->field(field);
    for (int a = 0; a < g.dim(); ++a)
      if (alpha[a] > 0) m = fd_derivative(m, g, a, alpha[a], space_acc_);
    return cache_.emplace(key, std::move(m)).first->second;
  }

  const Matrix& time_derivative(int field) {
    auto it = time_cache_.find(field);
    if (it != time_cache_.end()) return it->second;
    Matrix m = fd_derivative(traj_->field(field), traj_->grid(), traj_->grid().dim(), 1,
                             time_acc_);
    return time_cache_.emplace(field, std::move(m)).first->second;
  }

  const TrajectoryField& trajectory() const { return *traj_; }

 private:
  const TrajectoryField* traj_;
  int space_acc_;
  int time_acc_;
  std::map<std::pair<int, MultiIndex>, Matrix> cache_;
  std::map<int, Matrix> time_cache_;
};

}  // namespace pdeid
