#pragma once

#include "pdeid/common.hpp"

#include <algorithm>
#include <span>
#include <string>
#include <vector>

namespace pdeid {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

/// Uniform space-time grid. Each axis with n points and extent [lo, hi)
/// samples lo + j*dx, j = 0..n-1, with dx = (hi-lo)/n; periodic axes wrap
/// indices modulo the point count. Time uses the same convention.
class SpaceTimeGrid {
 public:
  /// Trivial 1x1 placeholder so aggregates holding a grid stay default
  /// constructible; any real use replaces it.
  SpaceTimeGrid() : SpaceTimeGrid({1}, {{0.0, 1.0}}, {true}, 1, {0.0, 1.0}) {}

  SpaceTimeGrid(std::vector<int> space_points, std::vector<Interval> space_extent,
                std::vector<bool> periodic, int time_points, Interval time_extent)
      : space_points_(std::move(space_points)),
        space_extent_(std::move(space_extent)),
        periodic_(std::move(periodic)),
        time_points_(time_points),
        time_extent_(time_extent) {
    if (space_points_.empty() || space_points_.size() > 2)
      throw ConfigError("grid: only 1 or 2 space dimensions are supported");
    if (space_extent_.size() != space_points_.size() ||
        periodic_.size() != space_points_.size())
      throw ConfigError("grid: per-axis field counts disagree");
    for (std::size_t i = 0; i < space_points_.size(); ++i) {
      if (space_points_[i] <= 0)
        throw ConfigError("grid: space point count must be positive");
      if (space_extent_[i].length() <= 0.0)
        throw ConfigError("grid: space extent must have positive length");
    }
    if (time_points_ <= 0) throw ConfigError("grid: time point count must be positive");
    if (time_extent_.length() <= 0.0)
      throw ConfigError("grid: time extent must have positive length");
  }

  int dim() const { return static_cast<int>(space_points_.size()); }
  int space_points(int axis) const { return space_points_[check_axis(axis)]; }
  const std::vector<int>& space_points() const { return space_points_; }
  int time_points() const { return time_points_; }
  const Interval& space_extent(int axis) const { return space_extent_[check_axis(axis)]; }
  const Interval& time_extent() const { return time_extent_; }
  bool periodic(int axis) const { return periodic_[check_axis(axis)]; }

  double dx(int axis) const {
    return space_extent_[check_axis(axis)].length() / space_points_[axis];
  }
  double dt() const { return time_extent_.length() / time_points_; }

  double x(int axis, int i) const { return space_extent_[check_axis(axis)].lo + i * dx(axis); }
  double t(int k) const { return time_extent_.lo + k * dt(); }

  long flat_space_size() const {
    long n = 1;
    for (int p : space_points_) n *= p;
    return n;
  }

  /// Row-major flattening of the space indices (last axis fastest).
  long flat_index(std::span<const int> ix) const {
    long idx = 0;
    for (std::size_t a = 0; a < space_points_.size(); ++a) idx = idx * space_points_[a] + ix[a];
    return idx;
  }

  std::vector<int> unflatten(long flat) const {
    std::vector<int> ix(space_points_.size());
    for (int a = dim() - 1; a >= 0; --a) {
      ix[a] = static_cast<int>(flat % space_points_[a]);
      flat /= space_points_[a];
    }
    return ix;
  }

  /// Wraps a (possibly out-of-range) index on a periodic axis; throws for
  /// out-of-range indices on non-periodic axes.
  int wrap(int axis, int i) const {
    const int n = space_points_[check_axis(axis)];
    if (periodic_[axis]) {
      int r = i % n;
      if (r < 0) r += n;
      return r;
    }
    if (i < 0 || i >= n)
      throw DataError("grid: index " + std::to_string(i) + " outside non-periodic axis " +
                      std::to_string(axis));
    return i;
  }

  /// Wraps a physical coordinate into the axis extent (periodic axes only).
  double wrap_coord(int axis, double v) const {
    const Interval& e = space_extent_[check_axis(axis)];
    if (!periodic_[axis]) return v;
    const double len = e.length();
    double r = std::fmod(v - e.lo, len);
    if (r < 0) r += len;
    return e.lo + r;
  }

  bool operator==(const SpaceTimeGrid& o) const {
    return space_points_ == o.space_points_ && time_points_ == o.time_points_ &&
           periodic_ == o.periodic_ && extents_equal(o);
  }

 private:
  int check_axis(int axis) const {
    if (axis < 0 || axis >= dim())
      throw DataError("grid: axis " + std::to_string(axis) + " out of range");
    return axis;
  }
  bool extents_equal(const SpaceTimeGrid& o) const {
    for (std::size_t i = 0; i < space_extent_.size(); ++i)
      if (space_extent_[i].lo != o.space_extent_[i].lo ||
          space_extent_[i].hi != o.space_extent_[i].hi)
        return false;
    return time_extent_.lo == o.time_extent_.lo && time_extent_.hi == o.time_extent_.hi;
  }

  std::vector<int> space_points_;
  std::vector<Interval> space_extent_;
  std::vector<bool> periodic_;
  int time_points_;
  Interval time_extent_;
};

inline SpaceTimeGrid grid_1d(int nx, double x_lo, double x_hi, int nt, double t_lo,
                             double t_hi, bool periodic = true) {
  return SpaceTimeGrid({nx}, {{x_lo, x_hi}}, {periodic}, nt, {t_lo, t_hi});
}

/// One or more named scalar fields sampled on a common space-time grid.
/// Each field is stored as a (flattened space) x (time) matrix, so column k
/// is the snapshot u(., t_k).
class TrajectoryField {
 public:
  explicit TrajectoryField(SpaceTimeGrid grid) : grid_(std::move(grid)) {}

  const SpaceTimeGrid& grid() const { return grid_; }
  int field_count() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& field_names() const { return names_; }

  void add_field(const std::string& name, Matrix data) {
    if (data.rows() != grid_.flat_space_size() || data.cols() != grid_.time_points())
      throw DataError("trajectory: field '" + name + "' shape does not match grid");
    if (!data.allFinite())
      throw DataError("trajectory: field '" + name + "' contains non-finite values");
    if (index_of(name) >= 0) throw DataError("trajectory: duplicate field '" + name + "'");
    names_.push_back(name);
    data_.push_back(std::move(data));
  }

  int index_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
  }

  const Matrix& field(int i) const { return data_.at(i); }
  const Matrix& field(const std::string& name) const {
    const int i = index_of(name);
    if (i < 0) throw DataError("trajectory: no field named '" + name + "'");
    return data_[i];
  }

  double value(int field_idx, std::span<const int> ix, int it) const {
    return data_.at(field_idx)(grid_.flat_index(ix), it);
  }

 private:
  SpaceTimeGrid grid_;
  std::vector<std::string> names_;
  std::vector<Matrix> data_;
};

}  // namespace pdeid
