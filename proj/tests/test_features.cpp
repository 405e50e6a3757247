#include "pdeid/features.hpp"
#include "pdeid/solvers.hpp"

#include <doctest.h>

#include <cmath>

using namespace pdeid;

namespace {
TrajectoryField field_from(const SpaceTimeGrid& g,
                           const std::function<double(double, double)>& f) {
  TrajectoryField traj(g);
  Matrix m(g.space_points(0), g.time_points());
  for (int i = 0; i < g.space_points(0); ++i)
    for (int k = 0; k < g.time_points(); ++k) m(i, k) = f(g.x(0, i), g.t(k));
  traj.add_field("u", std::move(m));
  return traj;
}
}  // namespace

TEST_CASE("identity, product and trig features") {
  SpaceTimeGrid g({64}, {{0.0, 6.4}}, {false}, 8, {0, 1});
  auto traj = field_from(g, [](double x, double) { return x; });
  DerivativeCache cache(traj);

  const Dictionary d = build_dictionary({"u"}, 1, 1, 2,
                                        {FeatureDescriptor::sin_of({0, {0}})});
  std::vector<GridPoint> pts = {{10, 3}, {20, 4}, {32, 5}};
  const Matrix F = evaluate_features(d, pts, cache);

  const int k_u = d.index_of("u");
  const int k_uux = d.index_of("u*u_x");
  const int k_sin = d.index_of("sin(u)");
  REQUIRE(k_u >= 0);
  REQUIRE(k_uux >= 0);
  REQUIRE(k_sin >= 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double x = g.x(0, static_cast<int>(pts[i].flat_space));
    CHECK(F(i, k_u) == doctest::Approx(x));
    CHECK(F(i, k_uux) == doctest::Approx(x * 1.0).epsilon(1e-10));
    CHECK(F(i, k_sin) == doctest::Approx(std::sin(x)));
  }
}

TEST_CASE("sin of a constant pi/2 field is one") {
  SpaceTimeGrid g = grid_1d(32, 0, 1, 8, 0, 1);
  auto traj = field_from(g, [](double, double) { return std::numbers::pi / 2; });
  DerivativeCache cache(traj);
  const Dictionary d = build_dictionary({"u"}, 1, 0, 1,
                                        {FeatureDescriptor::sin_of({0, {0}})});
  std::vector<GridPoint> pts = {{5, 2}, {9, 6}};
  const Matrix F = evaluate_features(d, pts, cache);
  const int k = d.index_of("sin(u)");
  CHECK(F(0, k) == doctest::Approx(1.0));
  CHECK(F(1, k) == doctest::Approx(1.0));
}

TEST_CASE("product feature equals the product of its factor columns") {
  SpaceTimeGrid g = grid_1d(64, 0, 2 * std::numbers::pi, 8, 0, 1);
  auto traj = field_from(g, [](double x, double t) { return std::sin(x) * (1 + 0.5 * t); });
  DerivativeCache cache(traj);
  const Dictionary d = build_dictionary({"u"}, 1, 2, 3);
  std::vector<GridPoint> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({3L * i, i % 8});
  const Matrix F = evaluate_features(d, pts, cache);
  const int kp = d.index_of("u*u_x*u_xx");
  const int ku = d.index_of("u"), kx = d.index_of("u_x"), kxx = d.index_of("u_xx");
  for (int i = 0; i < 20; ++i)
    CHECK(F(i, kp) == doctest::Approx(F(i, ku) * F(i, kx) * F(i, kxx)).epsilon(1e-12));
}

TEST_CASE("assemble_patch_system shapes and the zero-target case") {
  SpaceTimeGrid g = grid_1d(64, -1, 1, 40, 0, 1);
  auto traj = field_from(g, [](double, double) { return 3.25; });
  DerivativeCache cache(traj);
  const Dictionary d = build_dictionary({"u"}, 1, 2, 1);
  const Patch p = make_patch(g, {10}, 20, {3}, 5, 7);
  const auto sys = assemble_patch_system(d, p, cache);
  CHECK(sys.size() == 7 * 11);
  CHECK(sys.F.rows() == 77);
  CHECK(sys.F.cols() == d.size());
  CHECK(sys.target.cwiseAbs().maxCoeff() < 1e-10);  // constant field: u_t = 0
  CHECK(sys.points.rows() == 77);
  // center of the box sits mid-row
  CHECK(sys.points(sys.size() / 2, 0) == doctest::Approx(g.x(0, 10)));
  CHECK(sys.points(sys.size() / 2, 1) == doctest::Approx(g.t(20)));
}

TEST_CASE("patch box constraints") {
  SpaceTimeGrid g = grid_1d(64, -1, 1, 40, 0, 1);
  CHECK_THROWS_AS(make_patch(g, {10}, 3, {3}, 5), ConfigError);   // time too early
  CHECK_THROWS_AS(make_patch(g, {10}, 37, {3}, 5), ConfigError);  // time too late
  const Patch wrapped = make_patch(g, {0}, 20, {3}, 5);           // periodic wrap in x
  const auto pts = patch_points(g, wrapped);
  CHECK(pts.size() == 77);
  SpaceTimeGrid gn({64}, {{-1, 1}}, {false}, 40, {0, 1});
  CHECK_THROWS_AS(make_patch(gn, {0}, 20, {3}, 5), ConfigError);
}

TEST_CASE("exact heat features leave a tiny residual for the true coefficients") {
  // u_t = 0.5 u_xx with an analytic two-mode solution, FD features.
  const double k1 = std::numbers::pi, k2 = 2 * std::numbers::pi;
  auto exact = [&](double x, double t) {
    return std::exp(-0.5 * k1 * k1 * t) * std::sin(k1 * x) +
           0.4 * std::exp(-0.5 * k2 * k2 * t) * std::cos(k2 * x);
  };
  SpaceTimeGrid g = grid_1d(256, -1, 1, 2000, 0, 0.2);
  auto traj = field_from(g, exact);
  DerivativeCache cache(traj);
  const Dictionary d = build_dictionary({"u"}, 1, 2, 1);
  const Patch p = make_patch(g, {128}, 1000, {3}, 5);
  const auto sys = assemble_patch_system(d, p, cache);
  const int kxx = d.index_of("u_xx");
  const Vector residual = sys.target - 0.5 * sys.F.col(kxx);
  // Residual is bounded by stencil truncation, far below the signal scale.
  CHECK(residual.cwiseAbs().maxCoeff() < 1e-6 * sys.target.cwiseAbs().maxCoeff() + 1e-9);
}

TEST_CASE("exact-feature assembly matches the analytic field") {
  const FourierSum u0(0.0, {{1.0, std::numbers::pi, 0.2}});
  AnalyticFieldSet fields;
  fields.add("u", std::make_shared<TranslatingWaveField>(
                      u0, CoefficientFunction::constant(2.0)));
  SpaceTimeGrid g = grid_1d(128, -1, 1, 100, 0, 0.5);
  const Dictionary d = build_dictionary({"u"}, 1, 2, 2);
  const Patch p = make_patch(g, {30}, 50, {3}, 5);
  const auto sys = assemble_patch_system_exact(d, p, fields, g);
  CHECK(sys.size() == 77);
  const int kx = d.index_of("u_x");
  // target = 2 u_x exactly
  CHECK((sys.target - 2.0 * sys.F.col(kx)).cwiseAbs().maxCoeff() < 1e-12);
  // sobolev columns carry the pure derivatives
  CHECK(sys.sobolev_cols.size() == 2);  // u_x, u_xx
}

TEST_CASE("points outside the stored window are rejected") {
  SpaceTimeGrid g = grid_1d(32, 0, 1, 8, 0, 1);
  auto traj = field_from(g, [](double x, double) { return x; });
  DerivativeCache cache(traj);
  const Dictionary d = build_dictionary({"u"}, 1, 1, 1);
  std::vector<GridPoint> pts = {{0, 9}};
  CHECK_THROWS_AS(evaluate_features(d, pts, cache), DataError);
}
