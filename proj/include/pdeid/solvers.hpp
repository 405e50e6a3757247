#pragma once

#include "pdeid/coefficients.hpp"
#include "pdeid/fft_util.hpp"
#include "pdeid/grid.hpp"
#include "pdeid/initial.hpp"
#include "pdeid/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace pdeid {

enum class ProblemKind {
  transport1d,        // u_t = a(x,t) u_x
  heat1d,             // u_t = a(x,t) u_xx
  kdv1d,              // u_t = a(x,t) u u_x + b(t) u_xxx
  schrodinger1d_system,  // u_t = 0.5 v_xx - V v ; v_t = -0.5 u_xx + V u
  burgers1d,          // u_t = a(x,t) u u_x  (inviscid, pre-shock only)
  circular_flow_2d,   // u_t = -y u_x + x u_y
};

inline const char* kind_name(ProblemKind k) {
  switch (k) {
    case ProblemKind::transport1d: return "transport1d";
    case ProblemKind::heat1d: return "heat1d";
    case ProblemKind::kdv1d: return "kdv1d";
    case ProblemKind::schrodinger1d_system: return "schrodinger1d_system";
    case ProblemKind::burgers1d: return "burgers1d";
    case ProblemKind::circular_flow_2d: return "circular_flow_2d";
  }
  return "unknown";
}

struct EvolutionProblem {
  ProblemKind kind = ProblemKind::transport1d;
  std::vector<CoefficientFunction> coefficients;
  std::vector<InitialCondition> initial;
  SpaceTimeGrid grid;

  std::vector<std::string> field_names() const {
    if (kind == ProblemKind::schrodinger1d_system) return {"u", "v"};
    return {"u"};
  }
};

struct SolveOptions {
  int max_substeps = 100000;  // per stored interval
  double safety = 0.8;
  double derivative_cap = 0.0;  // burgers1d: 0 = automatic
};

namespace detail {

// RK4 linear stability limits along the negative real and imaginary axes.
inline constexpr double kRk4Real = 2.785;
inline constexpr double kRk4Imag = 2.828;

inline void validate_problem(const EvolutionProblem& p) {
  const auto need = [&](std::size_t n_coef, std::size_t n_init, int dim) {
    if (p.coefficients.size() != n_coef)
      throw ConfigError(std::string(kind_name(p.kind)) + ": expected " +
                        std::to_string(n_coef) + " coefficient function(s), got " +
                        std::to_string(p.coefficients.size()));
    if (p.initial.size() != n_init)
      throw ConfigError(std::string(kind_name(p.kind)) + ": expected " +
                        std::to_string(n_init) + " initial condition(s)");
    if (p.grid.dim() != dim)
      throw ConfigError(std::string(kind_name(p.kind)) + ": needs a " +
                        std::to_string(dim) + "D grid");
  };
  switch (p.kind) {
    case ProblemKind::transport1d:
    case ProblemKind::heat1d:
    case ProblemKind::burgers1d: need(1, 1, 1); break;
    case ProblemKind::kdv1d:
      need(2, 1, 1);
      if (p.coefficients[1].depends_on_space())
        throw ConfigError("kdv1d: dispersion coefficient must depend on t only");
      break;
    case ProblemKind::schrodinger1d_system: need(1, 2, 1); break;
    case ProblemKind::circular_flow_2d: need(0, 1, 2); break;
  }
  if (p.kind != ProblemKind::circular_flow_2d) {
    for (int a = 0; a < p.grid.dim(); ++a)
      if (!p.grid.periodic(a))
        throw ConfigError(std::string(kind_name(p.kind)) +
                          ": non-periodic axis requested for a spectral scheme");
  }
}

inline double coefficient_max_abs(const CoefficientFunction& c, const SpaceTimeGrid& grid) {
  if (c.is_constant()) return std::abs(c.constant_value());
  const int nt_samples = std::min(grid.time_points(), 257);
  double m = 0.0;
  std::vector<double> x(grid.dim());
  for (long f = 0; f < grid.flat_space_size(); ++f) {
    auto ix = grid.unflatten(f);
    for (int a = 0; a < grid.dim(); ++a) x[a] = grid.x(a, ix[a]);
    for (int s = 0; s < nt_samples; ++s) {
      const double t = grid.time_extent().lo +
                       grid.time_extent().length() * s / std::max(1, nt_samples - 1);
      m = std::max(m, std::abs(c(x, t)));
    }
  }
  return m;
}

inline int substep_count(double dt_store, double dt_stable, int max_substeps,
                         const char* scheme) {
  if (dt_stable <= 0.0 || dt_store <= dt_stable) return 1;
  const double ratio = dt_store / dt_stable;
  const int m = static_cast<int>(std::ceil(ratio - 1e-12));
  if (m > max_substeps) {
    std::ostringstream os;
    os << scheme << ": stored time step " << dt_store << " exceeds the stable RK4 step "
       << dt_stable << " (ratio " << ratio << ") and the substep budget is "
       << max_substeps;
    throw StabilityError(os.str());
  }
  return m;
}

/// RK4 march storing one column per grid time point; column 0 is the initial
/// state. `stable_dt(u)` is re-queried at the start of each stored interval.
inline Matrix evolve_rk4(const SpaceTimeGrid& grid, Vector u0,
                         const std::function<void(double, const Vector&, Vector&)>& rhs,
                         const std::function<double(const Vector&)>& stable_dt,
                         const SolveOptions& opt, const char* scheme,
                         const std::function<void(Vector&)>& post_step = {}) {
  const int nt = grid.time_points();
  const long n = u0.size();
  Matrix out(n, nt);
  out.col(0) = u0;
  Vector u = std::move(u0);
  Vector k1(n), k2(n), k3(n), k4(n), tmp(n);
  const double dt_store = grid.dt();
  for (int k = 0; k + 1 < nt; ++k) {
    const double t0 = grid.t(k);
    const int m = substep_count(dt_store, opt.safety * stable_dt(u), opt.max_substeps,
                                scheme);
    const double h = dt_store / m;
    for (int s = 0; s < m; ++s) {
      const double t = t0 + s * h;
      rhs(t, u, k1);
      tmp = u + (0.5 * h) * k1;
      rhs(t + 0.5 * h, tmp, k2);
      tmp = u + (0.5 * h) * k2;
      rhs(t + 0.5 * h, tmp, k3);
      tmp = u + h * k3;
      rhs(t + h, tmp, k4);
      u += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (post_step) post_step(u);
    }
    if (!u.allFinite())
      throw StabilityError(std::string(scheme) + ": solution became non-finite at t = " +
                           std::to_string(grid.t(k + 1)));
    out.col(k + 1) = u;
  }
  return out;
}

/// Evaluates a coefficient on every spatial grid point at time t.
inline void sample_coefficient(const CoefficientFunction& c, const SpaceTimeGrid& grid,
                               double t, Vector& out) {
  std::vector<double> x(grid.dim());
  for (long f = 0; f < grid.flat_space_size(); ++f) {
    auto ix = grid.unflatten(f);
    for (int a = 0; a < grid.dim(); ++a) x[a] = grid.x(a, ix[a]);
    out[f] = c(x, t);
  }
}

inline Matrix solve_advective_1d(const EvolutionProblem& p, const SolveOptions& opt) {
  const SpaceTimeGrid& g = p.grid;
  const int n = g.space_points(0);
  SpectralDifferentiator sd(n, g.space_extent(0).length());
  const CoefficientFunction& a = p.coefficients[0];
  const double amax = coefficient_max_abs(a, g);
  const double kmax = sd.wavenumber_max();

  Vector u0 = make_initial(p.initial[0], g);
  Vector coef(n), du(n);
  const bool coef_static = !a.depends_on_time();
  if (coef_static) sample_coefficient(a, g, g.time_extent().lo, coef);

  const bool is_transport = p.kind == ProblemKind::transport1d;
  const bool is_heat = p.kind == ProblemKind::heat1d;
  const int deriv_order = is_heat ? 2 : 1;

  auto rhs = [&](double t, const Vector& u, Vector& out) {
    if (!coef_static) sample_coefficient(a, g, t, coef);
    sd.derivative(u.data(), du.data(), deriv_order);
    if (is_transport || is_heat)
      out = coef.cwiseProduct(du);
    else  // burgers: a * u * u_x
      out = coef.cwiseProduct(u.cwiseProduct(du));
  };

  std::function<double(const Vector&)> stable_dt;
  if (is_transport)
    stable_dt = [=](const Vector&) { return kRk4Imag / std::max(1e-300, amax * kmax); };
  else if (is_heat)
    stable_dt = [=](const Vector&) {
      return kRk4Real / std::max(1e-300, amax * kmax * kmax);
    };
  else
    stable_dt = [=](const Vector& u) {
      const double speed = amax * u.cwiseAbs().maxCoeff();
      return kRk4Imag / std::max(1e-300, speed * kmax);
    };

  std::function<void(Vector&)> post;
  double cap = 0.0;
  if (p.kind == ProblemKind::burgers1d) {
    sd.derivative(u0.data(), du.data(), 1);
    cap = opt.derivative_cap > 0.0 ? opt.derivative_cap
                                   : 20.0 * (1.0 + du.cwiseAbs().maxCoeff());
    post = [&sd, &du, cap](Vector& u) {
      sd.apply_exponential_filter(u.data());
      sd.derivative(u.data(), du.data(), 1);
      const double m = du.cwiseAbs().maxCoeff();
      if (m > cap)
        throw StabilityError("burgers1d: max |u_x| = " + std::to_string(m) +
                             " exceeded the derivative cap " + std::to_string(cap) +
                             "; the run is approaching shock formation");
    };
  }
  return evolve_rk4(g, std::move(u0), rhs, stable_dt, opt, kind_name(p.kind), post);
}

inline Matrix solve_kdv_1d(const EvolutionProblem& p, const SolveOptions& opt) {
  const SpaceTimeGrid& g = p.grid;
  const int n = g.space_points(0);
  SpectralDifferentiator sd(n, g.space_extent(0).length());
  const CoefficientFunction& a = p.coefficients[0];
  const CoefficientFunction& b = p.coefficients[1];
  const double amax = coefficient_max_abs(a, g);
  const double kmax = sd.wavenumber_max();

  using CVector = Eigen::VectorXcd;
  Vector u0 = make_initial(p.initial[0], g);
  const int nt = g.time_points();
  Matrix out(n, nt);
  out.col(0) = u0;

  CVector uhat(n);
  sd.forward(u0.data(), uhat.data());

  // (ik)^3 multipliers for the integrating factor.
  std::vector<std::complex<double>> ell(n);
  for (int j = 0; j < n; ++j) {
    const double k = sd.wavenumbers()[j];
    ell[j] = std::complex<double>(0.0, -k * k * k);
  }
  if (n % 2 == 0) ell[n / 2] = 0.0;

  Vector coef(n), u(n), ux(n), nl(n);
  CVector work(n), spec(n), N1(n), N2(n), N3(n), N4(n), U(n);
  const bool coef_static = !a.depends_on_time();
  if (coef_static) sample_coefficient(a, g, g.time_extent().lo, coef);

  auto nonlinear = [&](double t, const CVector& vhat, CVector& nout) {
    sd.inverse(vhat.data(), u.data());
    sd.spectrum_derivative(vhat.data(), work.data(), 1);
    sd.inverse(work.data(), ux.data());
    if (!coef_static) sample_coefficient(a, g, t, coef);
    nl = coef.cwiseProduct(u.cwiseProduct(ux));
    sd.forward(nl.data(), nout.data());
  };

  const double dt_store = g.dt();
  const double zero[1] = {0.0};
  for (int kstep = 0; kstep + 1 < nt; ++kstep) {
    const double t0 = g.t(kstep);
    sd.inverse(uhat.data(), u.data());
    const double speed = amax * u.cwiseAbs().maxCoeff();
    const double stable = kRk4Imag / std::max(1e-300, speed * kmax);
    const int m = substep_count(dt_store, opt.safety * stable, opt.max_substeps, "kdv1d");
    const double h = dt_store / m;
    for (int s = 0; s < m; ++s) {
      const double t = t0 + s * h;
      const double dB_half =
          integrate_in_time(b, std::span<const double>(zero, 1), t, t + 0.5 * h);
      const double dB_full =
          dB_half + integrate_in_time(b, std::span<const double>(zero, 1), t + 0.5 * h, t + h);
      nonlinear(t, uhat, N1);
      for (int j = 0; j < n; ++j) {
        const auto Eh = std::exp(ell[j] * dB_half);
        U[j] = Eh * (uhat[j] + 0.5 * h * N1[j]);
      }
      nonlinear(t + 0.5 * h, U, N2);
      for (int j = 0; j < n; ++j) {
        const auto Eh = std::exp(ell[j] * dB_half);
        U[j] = Eh * uhat[j] + 0.5 * h * N2[j];
      }
      nonlinear(t + 0.5 * h, U, N3);
      for (int j = 0; j < n; ++j) {
        const auto Ef = std::exp(ell[j] * dB_full);
        const auto Eq = std::exp(ell[j] * (dB_full - dB_half));
        U[j] = Ef * uhat[j] + h * Eq * N3[j];
      }
      nonlinear(t + h, U, N4);
      for (int j = 0; j < n; ++j) {
        const auto Ef = std::exp(ell[j] * dB_full);
        const auto Eq = std::exp(ell[j] * (dB_full - dB_half));
        uhat[j] = Ef * uhat[j] +
                  (h / 6.0) * (Ef * N1[j] + 2.0 * Eq * (N2[j] + N3[j]) + N4[j]);
      }
    }
    sd.inverse(uhat.data(), u.data());
    if (!u.allFinite())
      throw StabilityError("kdv1d: solution became non-finite at t = " +
                           std::to_string(g.t(kstep + 1)));
    out.col(kstep + 1) = u;
  }
  return out;
}

inline std::pair<Matrix, Matrix> solve_schrodinger_1d(const EvolutionProblem& p,
                                                      const SolveOptions& opt) {
  const SpaceTimeGrid& g = p.grid;
  const int n = g.space_points(0);
  SpectralDifferentiator sd(n, g.space_extent(0).length());
  const CoefficientFunction& V = p.coefficients[0];
  const double vmax = coefficient_max_abs(V, g);
  const double kmax = sd.wavenumber_max();

  Vector state(2 * n);
  state.head(n) = make_initial(p.initial[0], g);
  state.tail(n) = make_initial(p.initial[1], g);

  Vector pot(n), duxx(n);
  const bool pot_static = !V.depends_on_time();
  if (pot_static) sample_coefficient(V, g, g.time_extent().lo, pot);

  auto rhs = [&](double t, const Vector& s, Vector& out) {
    if (!pot_static) sample_coefficient(V, g, t, pot);
    const auto u = s.head(n);
    const auto v = s.tail(n);
    sd.derivative(v.data(), duxx.data(), 2);
    out.head(n) = 0.5 * duxx - pot.cwiseProduct(v);
    sd.derivative(u.data(), duxx.data(), 2);
    out.tail(n) = -0.5 * duxx + pot.cwiseProduct(u);
  };
  auto stable_dt = [=](const Vector&) {
    return kRk4Imag / std::max(1e-300, 0.5 * kmax * kmax + vmax);
  };
  Matrix both = evolve_rk4(g, std::move(state), rhs, stable_dt, opt,
                           "schrodinger1d_system");
  return {both.topRows(n), both.bottomRows(n)};
}

}  // namespace detail

/// Closed-form value of the 2D circular flow: the initial profile rotated
/// rigidly by angle t about the origin.
inline double circular_flow_exact(
    const std::function<double(std::span<const double>)>& f0, double x, double y,
    double t) {
  const double c = std::cos(t), s = std::sin(t);
  const double rot[2] = {x * c - y * s, x * s + y * c};
  return f0(std::span<const double>(rot, 2));
}

/// Solves the benchmark problem on its grid. Periodic 1D problems use Fourier
/// pseudo-spectral differentiation in space with explicit RK4 substepping in
/// time (integrating factor for the KdV dispersion); the 2D circular flow is
/// sampled from its closed-form solution.
inline TrajectoryField solve(const EvolutionProblem& p, const SolveOptions& opt = {}) {
  detail::validate_problem(p);
  TrajectoryField traj(p.grid);
  switch (p.kind) {
    case ProblemKind::transport1d:
    case ProblemKind::heat1d:
    case ProblemKind::burgers1d:
      traj.add_field("u", detail::solve_advective_1d(p, opt));
      break;
    case ProblemKind::kdv1d:
      traj.add_field("u", detail::solve_kdv_1d(p, opt));
      break;
    case ProblemKind::schrodinger1d_system: {
      auto [u, v] = detail::solve_schrodinger_1d(p, opt);
      traj.add_field("u", std::move(u));
      traj.add_field("v", std::move(v));
      break;
    }
    case ProblemKind::circular_flow_2d: {
      const SpaceTimeGrid& g = p.grid;
      auto f0 = make_initial_evaluator(p.initial[0], g);
      Matrix data(g.flat_space_size(), g.time_points());
      for (int k = 0; k < g.time_points(); ++k) {
        const double t = g.t(k);
        for (long fidx = 0; fidx < g.flat_space_size(); ++fidx) {
          auto ix = g.unflatten(fidx);
          data(fidx, k) =
              circular_flow_exact(f0, g.x(0, ix[0]), g.x(1, ix[1]), t);
        }
      }
      traj.add_field("u", std::move(data));
      break;
    }
  }
  return traj;
}

/// Closed-form solution value where one exists: the 2D circular flow, constant
/// speed transport, and constant-coefficient heat with finite-Fourier initial
/// data. Throws NoClosedFormError otherwise.
inline double evaluate_exact(const EvolutionProblem& p, std::span<const double> x,
                             double t) {
  detail::validate_problem(p);
  const double t_rel = t - p.grid.time_extent().lo;
  switch (p.kind) {
    case ProblemKind::circular_flow_2d: {
      auto f0 = make_initial_evaluator(p.initial[0], p.grid);
      return circular_flow_exact(f0, x[0], x[1], t_rel);
    }
    case ProblemKind::transport1d: {
      if (!p.coefficients[0].is_constant())
        throw NoClosedFormError("transport1d: closed form needs constant speed");
      const double c = p.coefficients[0].constant_value();
      auto f0 = make_initial_evaluator(p.initial[0], p.grid);
      const double xs = p.grid.wrap_coord(0, x[0] + c * t_rel);
      return f0(std::span<const double>(&xs, 1));
    }
    case ProblemKind::heat1d: {
      if (!p.coefficients[0].is_constant())
        throw NoClosedFormError("heat1d: closed form needs a constant coefficient");
      auto fs = as_fourier_sum(p.initial[0], p.grid);
      if (!fs)
        throw NoClosedFormError("heat1d: closed form needs pure-Fourier initial data");
      const double a = p.coefficients[0].constant_value();
      double v = fs->offset();
      for (const auto& m : fs->terms())
        v += m.amplitude * std::exp(-a * m.frequency * m.frequency * t_rel) *
             std::cos(m.frequency * x[0] + m.phase);
      return v;
    }
    default:
      throw NoClosedFormError(std::string(kind_name(p.kind)) +
                              " has no implemented closed-form solution");
  }
}

/// Adds i.i.d. Gaussian noise with standard deviation percent/100 times the
/// field's own standard deviation, independently per field. Deterministic
/// under a fixed seed.
inline TrajectoryField add_noise(const TrajectoryField& traj, double percent,
                                 std::uint64_t seed) {
  if (percent < 0.0) throw ConfigError("add_noise: percent must be >= 0");
  TrajectoryField out(traj.grid());
  for (int f = 0; f < traj.field_count(); ++f) {
    Matrix data = traj.field(f);
    if (percent > 0.0) {
      const double mean = data.mean();
      const double sd = std::sqrt((data.array() - mean).square().mean());
      const double sigma = percent / 100.0 * sd;
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(f)));
      double* ptr = data.data();
      for (Eigen::Index i = 0; i < data.size(); ++i) ptr[i] += sigma * rng.normal();
    }
    out.add_field(traj.field_names()[f], std::move(data));
  }
  return out;
}

/// Strided down-sampling; strides must divide the point counts so grid
/// spacings scale exactly.
inline TrajectoryField downsample(const TrajectoryField& traj,
                                  const std::vector<int>& space_stride, int time_stride) {
  const SpaceTimeGrid& g = traj.grid();
  if (static_cast<int>(space_stride.size()) != g.dim())
    throw ConfigError("downsample: one stride per space axis required");
  std::vector<int> np(g.dim());
  std::vector<Interval> ext(g.dim());
  std::vector<bool> per(g.dim());
  for (int a = 0; a < g.dim(); ++a) {
    if (space_stride[a] <= 0 || g.space_points(a) % space_stride[a] != 0)
      throw ConfigError("downsample: stride must divide the point count");
    np[a] = g.space_points(a) / space_stride[a];
    ext[a] = g.space_extent(a);
    per[a] = g.periodic(a);
  }
  if (time_stride <= 0 || g.time_points() % time_stride != 0)
    throw ConfigError("downsample: time stride must divide the point count");
  SpaceTimeGrid gd(np, ext, per, g.time_points() / time_stride, g.time_extent());
  TrajectoryField out(gd);
  for (int f = 0; f < traj.field_count(); ++f) {
    Matrix data(gd.flat_space_size(), gd.time_points());
    for (long fs = 0; fs < gd.flat_space_size(); ++fs) {
      auto ix = gd.unflatten(fs);
      std::vector<int> src(ix.size());
      for (int a = 0; a < gd.dim(); ++a) src[a] = ix[a] * space_stride[a];
      const long srow = g.flat_index(src);
      for (int k = 0; k < gd.time_points(); ++k)
        data(fs, k) = traj.field(f)(srow, k * time_stride);
    }
    out.add_field(traj.field_names()[f], std::move(data));
  }
  return out;
}

}  // namespace pdeid
