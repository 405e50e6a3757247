#pragma once

#include "pdeid/grid.hpp"

#include <vector>

namespace pdeid {

/// A space-time sensor box: the full index set {center +- r} x {center +- r_t},
/// wrapped on periodic axes. Boxes that would leave a non-periodic axis are
/// rejected at construction.
struct Patch {
  int id = 0;
  std::vector<int> center_space;
  int center_time = 0;
  std::vector<int> space_radius;
  int time_radius = 0;

  long point_count() const {
    long m = 2L * time_radius + 1;
    for (int r : space_radius) m *= 2L * r + 1;
    return m;
  }
};

struct GridPoint {
  long flat_space = 0;
  int time = 0;
};

inline Patch make_patch(const SpaceTimeGrid& grid, std::vector<int> center_space,
                        int center_time, std::vector<int> space_radius, int time_radius,
                        int id = 0) {
  if (static_cast<int>(center_space.size()) != grid.dim() ||
      static_cast<int>(space_radius.size()) != grid.dim())
    throw ConfigError("patch: center/radius rank does not match grid");
  for (int a = 0; a < grid.dim(); ++a) {
    const int n = grid.space_points(a);
    if (space_radius[a] < 0 || 2 * space_radius[a] + 1 > n)
      throw ConfigError("patch: space radius does not fit axis " + std::to_string(a));
    if (center_space[a] < 0 || center_space[a] >= n)
      throw ConfigError("patch: center outside axis " + std::to_string(a));
    if (!grid.periodic(a) &&
        (center_space[a] - space_radius[a] < 0 || center_space[a] + space_radius[a] >= n))
      throw ConfigError("patch: box exceeds non-periodic extent on axis " +
                        std::to_string(a));
  }
  if (time_radius < 0 || center_time - time_radius < 0 ||
      center_time + time_radius >= grid.time_points())
    throw ConfigError("patch: time window [" +
                      std::to_string(center_time - time_radius) + ", " +
                      std::to_string(center_time + time_radius) +
                      "] exceeds the stored trajectory");
  return Patch{id, std::move(center_space), center_time, std::move(space_radius),
               time_radius};
}

/// Member points in deterministic order: spatial box row-major, time innermost.
inline std::vector<GridPoint> patch_points(const SpaceTimeGrid& grid, const Patch& p) {
  std::vector<GridPoint> pts;
  pts.reserve(p.point_count());
  std::vector<int> offset(grid.dim(), 0);
  std::vector<int> ix(grid.dim());
  const int d = grid.dim();
  // Iterate the spatial offsets as a mixed-radix counter.
  const auto advance = [&]() {
    for (int a = d - 1; a >= 0; --a) {
      if (++offset[a] <= p.space_radius[a]) return true;
      offset[a] = -p.space_radius[a];
    }
    return false;
  };
  for (int a = 0; a < d; ++a) offset[a] = -p.space_radius[a];
  do {
    for (int a = 0; a < d; ++a) ix[a] = grid.wrap(a, p.center_space[a] + offset[a]);
    const long fs = grid.flat_index(ix);
    for (int dt = -p.time_radius; dt <= p.time_radius; ++dt)
      pts.push_back({fs, p.center_time + dt});
  } while (advance());
  return pts;
}

/// Index-space intersection test (wrapped on periodic axes).
inline bool patches_intersect(const SpaceTimeGrid& grid, const Patch& a, const Patch& b) {
  if (std::abs(a.center_time - b.center_time) > a.time_radius + b.time_radius)
    return false;
  for (int ax = 0; ax < grid.dim(); ++ax) {
    int dist = std::abs(a.center_space[ax] - b.center_space[ax]);
    if (grid.periodic(ax)) dist = std::min(dist, grid.space_points(ax) - dist);
    if (dist > a.space_radius[ax] + b.space_radius[ax]) return false;
  }
  return true;
}

}  // namespace pdeid
