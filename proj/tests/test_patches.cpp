#include "pdeid/patches.hpp"
#include "pdeid/solvers.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

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

TEST_CASE("sensor sampling counts and determinism") {
  SpaceTimeGrid g = grid_1d(100, -1, 1, 500, 0, 1);
  const auto times = uniform_observation_times(g, 10, 5);
  CHECK(times.size() == 10);
  CHECK(times.front() == 5);
  CHECK(times.back() == 494);

  const auto a = sample_sensors(g, 5, {3}, 5, times, 42);
  CHECK(a.size() == 50);
  for (const auto& p : a) CHECK(p.point_count() == 7 * 11);

  const auto b = sample_sensors(g, 5, {3}, 5, times, 42);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].center_space == b[i].center_space);
  const auto c = sample_sensors(g, 5, {3}, 5, times, 43);
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) same &= a[i].center_space == c[i].center_space;
  CHECK(!same);

  CHECK_THROWS_AS(sample_sensors(g, 5, {3}, 5, {2}, 1), ConfigError);
  SpaceTimeGrid tiny({5}, {{-1, 1}}, {false}, 500, {0, 1});
  CHECK_THROWS_AS(sample_sensors(tiny, 1, {3}, 5, times, 1), ConfigError);
}

TEST_CASE("observation time endpoint conventions") {
  SpaceTimeGrid g = grid_1d(10, 0, 1, 101, 0, 1);
  const auto incl = uniform_observation_times(g, 3, 10, true);
  CHECK(incl == std::vector<int>{10, 50, 90});
  const auto excl = uniform_observation_times(g, 3, 10, false);
  CHECK(excl == std::vector<int>{30, 50, 70});
}

TEST_CASE("sobolev seminorm") {
  SpaceTimeGrid g = grid_1d(128, 0, 2 * std::numbers::pi, 40, 0, 1);
  const Dictionary d = build_dictionary({"u"}, 1, 2, 1);

  SUBCASE("constant field gives beta = 0") {
    auto traj = field_from(g, [](double, double) { return 5.0; });
    DerivativeCache cache(traj);
    const auto sys = assemble_patch_system(d, make_patch(g, {50}, 20, {3}, 5), cache);
    CHECK(sobolev_seminorm(sys, 2) < 1e-10);
  }
  SUBCASE("scaling the field scales beta linearly") {
    auto traj = field_from(g, [](double x, double) { return std::sin(x); });
    auto traj2 = field_from(g, [](double x, double) { return 2.0 * std::sin(x); });
    DerivativeCache c1(traj), c2(traj2);
    const Patch p = make_patch(g, {50}, 20, {3}, 5);
    const double b1 = sobolev_seminorm(assemble_patch_system(d, p, c1), 2);
    const double b2 = sobolev_seminorm(assemble_patch_system(d, p, c2), 2);
    CHECK(b2 == doctest::Approx(2.0 * b1).epsilon(1e-12));
  }
  SUBCASE("sin over a full period gives beta close to 1") {
    auto traj = field_from(g, [](double x, double) { return std::sin(x); });
    DerivativeCache cache(traj);
    // radius 64 on a 128-point periodic axis covers the full period
    const auto sys = assemble_patch_system(d, make_patch(g, {64}, 20, {63}, 5), cache);
    CHECK(sobolev_seminorm(sys, 2) == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("sobolev percentile filter") {
  SUBCASE("100 distinct values lose exactly the extremes") {
    std::vector<double> betas;
    for (int i = 0; i < 100; ++i) betas.push_back(0.01 * i + 0.5);
    const auto keep = filter_by_sobolev(betas);
    int removed = 0;
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (!keep[i]) ++removed;
    CHECK(removed == 2);
    CHECK(!keep[0]);   // smallest
    CHECK(!keep[99]);  // largest
    CHECK(keep[1]);
    CHECK(keep[98]);
  }
  SUBCASE("all equal keeps everything") {
    const std::vector<double> betas(50, 1.0);
    const auto keep = filter_by_sobolev(betas);
    for (bool k : keep) CHECK(k);
  }
  SUBCASE("single patch kept") {
    const auto keep = filter_by_sobolev({3.0});
    CHECK(keep[0]);
  }
  SUBCASE("never removes more than 2 percent of distinct values") {
    Rng rng(7);
    for (int n : {13, 60, 101, 150, 250, 997}) {
      std::vector<double> betas;
      for (int i = 0; i < n; ++i) betas.push_back(rng.uniform());
      const auto keep = filter_by_sobolev(betas);
      int removed = 0;
      for (bool k : keep)
        if (!k) ++removed;
      CHECK(removed <= 0.02 * n);
      CHECK(removed >= 0);
    }
  }
}

TEST_CASE("noise estimation patches tile without intersections") {
  SpaceTimeGrid g = grid_1d(140, 0, 1, 70, 0, 1);
  const auto patches = noise_estimation_patches(g, 200, {3}, 3);
  CHECK(patches.size() == 200);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    CHECK(patches[i].point_count() == 49);
    for (std::size_t j = i + 1; j < patches.size(); ++j)
      CHECK(!patches_intersect(g, patches[i], patches[j]));
  }
  CHECK_THROWS_AS(noise_estimation_patches(g, 1000, {3}, 3), ConfigError);
}

TEST_CASE("noise variance estimator") {
  SpaceTimeGrid g = grid_1d(140, 0, 1, 70, 0, 1);
  const auto patches = noise_estimation_patches(g, 200, {3}, 3);

  SUBCASE("noiseless constant field estimates zero") {
    auto traj = field_from(g, [](double, double) { return 2.5; });
    const auto est = estimate_noise_variance(traj, patches, 0, 0.0);
    CHECK(est.sigma2_hat == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(est.patch_count == 200);
    CHECK(est.points_per_patch == 49);
  }

  SUBCASE("short Monte-Carlo run brackets sigma^2") {
    auto base = field_from(g, [](double, double) { return 0.0; });
    double acc = 0.0;
    const int reps = 20;
    for (int r = 0; r < reps; ++r) {
      TrajectoryField noisy(g);
      Matrix m = Matrix::Zero(140, 70);
      Rng rng(1000 + r);
      for (int i = 0; i < 140; ++i)
        for (int k = 0; k < 70; ++k) m(i, k) = 0.1 * rng.normal();
      noisy.add_field("u", std::move(m));
      acc += estimate_noise_variance(noisy, patches, 0, 0.0).sigma2_hat;
    }
    CHECK(acc / reps == doctest::Approx(0.01).epsilon(0.05));
  }

  SUBCASE("estimator is invariant under adding a constant") {
    TrajectoryField noisy(g), shifted(g);
    Matrix m = Matrix::Zero(140, 70);
    Rng rng(5);
    for (int i = 0; i < 140; ++i)
      for (int k = 0; k < 70; ++k) m(i, k) = 0.2 * rng.normal();
    Matrix m2 = m.array() + 17.0;
    noisy.add_field("u", std::move(m));
    shifted.add_field("u", std::move(m2));
    const double a = estimate_noise_variance(noisy, patches, 0, 0.0).sigma2_hat;
    const double b = estimate_noise_variance(shifted, patches, 0, 0.0).sigma2_hat;
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }

  SUBCASE("intersecting or mismatched patches are rejected") {
    auto traj = field_from(g, [](double, double) { return 0.0; });
    std::vector<Patch> bad = {make_patch(g, {10}, 10, {3}, 3),
                              make_patch(g, {11}, 10, {3}, 3)};
    CHECK_THROWS_AS(estimate_noise_variance(traj, bad, 0, 0.0), ConfigError);
    std::vector<Patch> sizes = {make_patch(g, {10}, 10, {3}, 3),
                                make_patch(g, {50}, 10, {2}, 3)};
    CHECK_THROWS_AS(estimate_noise_variance(traj, sizes, 0, 0.0), ConfigError);
  }
}

TEST_CASE("variation test") {
  SUBCASE("identical values are discarded under positive sigma") {
    CHECK(!variation_test({Vector::Constant(10, 4.0)}, 0.5));
  }
  SUBCASE("clear variation is kept") {
    Vector v(2);
    v << 0.0, 10.0;
    CHECK(variation_test({v}, 0.1));  // 10 > sqrt(2)*1.644853*0.1
  }
  SUBCASE("any two distinct values pass when sigma is zero") {
    Vector v(3);
    v << 1.0, 1.0, 1.0 + 1e-12;
    CHECK(variation_test({v}, 0.0));
  }
  SUBCASE("threshold constant is calibrated") {
    Vector v(2);
    const double thr = std::numbers::sqrt2 * 1.644853 * 0.1;
    v << 0.0, thr * 0.999;
    CHECK(!variation_test({v}, 0.1));
    v << 0.0, thr * 1.001;
    CHECK(variation_test({v}, 0.1));
  }
  SUBCASE("multi-field rule takes the min across fields") {
    Vector big(2), small(2);
    big << 0.0, 10.0;
    small << 0.0, 0.01;
    CHECK(!variation_test({big, small}, 0.1));  // min difference too small
    CHECK(variation_test({big, big}, 0.1));
  }
  SUBCASE("invariance under shifts and joint scaling") {
    Rng rng(3);
    Vector v(20);
    for (int i = 0; i < 20; ++i) v[i] = rng.normal();
    const double sigma = 0.4;
    const bool base = variation_test({v}, sigma);
    CHECK(variation_test({Vector(v.array() + 100.0)}, sigma) == base);
    CHECK(variation_test({Vector(3.0 * v)}, 3.0 * sigma) == base);
  }
  SUBCASE("empty patch is an error") {
    CHECK_THROWS_AS(variation_test({}, 0.1), ConfigError);
  }
}

TEST_CASE("condition diagnostic") {
  SpaceTimeGrid g = grid_1d(128, 0, 2 * std::numbers::pi, 40, 0, 1);

  SUBCASE("zero field gives a zero matrix and ratio zero") {
    auto traj = field_from(g, [](double, double) { return 0.0; });
    DerivativeCache cache(traj);
    const Dictionary d = build_dictionary({"u"}, 1, 1, 1);
    const auto sys = assemble_patch_system(d, make_patch(g, {50}, 20, {3}, 5), cache);
    const auto diag = condition_diagnostic(sys);
    CHECK(diag.lambda_max == doctest::Approx(0.0));
    CHECK(diag.ratio == 0.0);
  }

  SUBCASE("orthonormal columns give the identity and ratio one") {
    PatchRegressionSystem sys;
    sys.F = Matrix::Identity(4, 2);
    const auto diag = condition_diagnostic(sys);
    CHECK(diag.correlation.isApprox(Matrix::Identity(2, 2)));
    CHECK(diag.ratio == doctest::Approx(1.0));
  }

  SUBCASE("sin over a full period: M close to diag(1/2, 1/2) * |B|") {
    auto traj = field_from(g, [](double x, double) { return std::sin(x); });
    DerivativeCache cache(traj);
    const Dictionary d = build_dictionary({"u"}, 1, 1, 1);  // {u, u_x}
    const Patch p = make_patch(g, {64}, 20, {63}, 5);
    const auto sys = assemble_patch_system(d, p, cache);
    const double cell = g.dx(0) * g.dt();
    const auto diag = condition_diagnostic(sys, cell);
    const double volume = sys.size() * cell;
    CHECK(diag.correlation(0, 0) == doctest::Approx(0.5 * volume).epsilon(1e-2));
    CHECK(diag.correlation(1, 1) == doctest::Approx(0.5 * volume).epsilon(1e-2));
    CHECK(std::abs(diag.correlation(0, 1)) < 1e-2 * volume);
    CHECK(diag.ratio == doctest::Approx(1.0).epsilon(1e-2));
  }
}

TEST_CASE("condition ratio is scale-invariant for equal-degree dictionaries") {
  SpaceTimeGrid g = grid_1d(128, 0, 2 * std::numbers::pi, 40, 0, 1);
  auto traj = field_from(g, [](double x, double t) { return std::sin(x + t); });
  auto scaled = field_from(g, [](double x, double t) { return -2.5 * std::sin(x + t); });
  DerivativeCache c1(traj), c2(scaled);
  const Dictionary d = build_dictionary({"u"}, 1, 2, 1);  // all degree-1 features
  const Patch p = make_patch(g, {30}, 20, {5}, 5);
  const auto r1 = condition_diagnostic(assemble_patch_system(d, p, c1)).ratio;
  const auto r2 = condition_diagnostic(assemble_patch_system(d, p, c2)).ratio;
  CHECK(r1 == doctest::Approx(r2).epsilon(1e-9));
}
