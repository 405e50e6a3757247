#pragma once

#include "pdeid/grid.hpp"
#include "pdeid/rng.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace pdeid {

/// amplitude * cos(frequency * x + phase); every sinusoid is stored in
/// cosine form so the m-th derivative is amplitude * freq^m * cos(. + m*pi/2).
struct CosTerm {
  double amplitude = 0.0;
  double frequency = 0.0;
  double phase = 0.0;
};

/// offset + sum of cosine terms; derivatives of all orders are closed-form.
class FourierSum {
 public:
  FourierSum() = default;
  FourierSum(double offset, std::vector<CosTerm> terms)
      : offset_(offset), terms_(std::move(terms)) {}

  double value(double x) const { return derivative(0, x); }

  double derivative(int order, double x) const {
    double v = (order == 0) ? offset_ : 0.0;
    const double shift = order * std::numbers::pi / 2.0;
    for (const auto& t : terms_) {
      double a = t.amplitude;
      for (int m = 0; m < order; ++m) a *= t.frequency;
      v += a * std::cos(t.frequency * x + t.phase + shift);
    }
    return v;
  }

  double offset() const { return offset_; }
  const std::vector<CosTerm>& terms() const { return terms_; }
  double max_derivative_bound(int order) const {
    double b = 0.0;
    for (const auto& t : terms_) {
      double a = std::abs(t.amplitude);
      for (int m = 0; m < order; ++m) a *= std::abs(t.frequency);
      b += a;
    }
    return b;
  }

 private:
  double offset_ = 0.0;
  std::vector<CosTerm> terms_;
};

/// Random trigonometric polynomial a_0 + sqrt(2) * sum_{j=1..M} (a_j cos(pi j x / L)
/// + b_j sin(pi j x / L)) with a_0, a_j, b_j ~ N(0, 1/(2M+1)). Exactly 2M+1
/// coefficients are drawn, in the order a_0, a_1, b_1, ..., a_M, b_M.
inline FourierSum random_fourier_sum(int modes, std::uint64_t seed, double half_length) {
  if (modes < 0) throw ConfigError("random_fourier: mode count must be >= 0");
  Rng rng(seed);
  const double sd = std::sqrt(1.0 / (2.0 * modes + 1.0));
  const double a0 = rng.normal(0.0, sd);
  std::vector<CosTerm> terms;
  terms.reserve(2 * modes);
  const double s2 = std::numbers::sqrt2;
  for (int j = 1; j <= modes; ++j) {
    const double aj = rng.normal(0.0, sd);
    const double bj = rng.normal(0.0, sd);
    const double k = std::numbers::pi * j / half_length;
    terms.push_back({s2 * aj, k, 0.0});                          // cos component
    terms.push_back({s2 * bj, k, -std::numbers::pi / 2.0});      // sin component
  }
  return FourierSum(a0, terms);
}

/// C-infinity bump exp(-1/(1-x^2)) on (-1,1), zero outside.
inline double bump(double x) {
  const double q = 1.0 - x * x;
  if (q <= 1e-12) return 0.0;  // guards overflow of 1/q as |x| -> 1
  return std::exp(-1.0 / q);
}

/// Piecewise-constant profile: 1 on [-4,0], -1 on (0,4], 0 otherwise.
inline double square_wave(double x) {
  if (x >= -4.0 && x <= 0.0) return 1.0;
  if (x > 0.0 && x <= 4.0) return -1.0;
  return 0.0;
}

namespace detail {
/// The squeeze-and-antisymmetrize kernel underlying the G mapping:
/// f~(x) = f(2x+4) on [-4,0], -f(-2x-4) on (0,4], 0 otherwise.
inline double g_kernel(const std::function<double(double)>& f, double x) {
  if (x >= -4.0 && x <= 0.0) return f(2.0 * x + 4.0);
  if (x > 0.0 && x <= 4.0) return -f(-2.0 * x - 4.0);
  return 0.0;
}
}  // namespace detail

/// G f(x) = int_{-8}^{x} f~(s) ds evaluated by composite Simpson; the named
/// square -> hat -> int family below uses the exact antiderivatives instead.
inline double g_mapping(const std::function<double(double)>& f, double x,
                        int panels = 8192) {
  if (x <= -8.0) return 0.0;
  const double a = -8.0, b = std::min(x, 8.0);
  const int n = panels % 2 == 0 ? panels : panels + 1;
  const double h = (b - a) / n;
  double s = detail::g_kernel(f, a) + detail::g_kernel(f, b);
  for (int i = 1; i < n; ++i)
    s += detail::g_kernel(f, a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// hat = G(square): continuous piecewise-linear, exact antiderivative.
inline double hat_wave(double x) {
  if (x <= -4.0 || x >= 0.0) return 0.0;
  if (x <= -2.0) return x + 4.0;
  return -x;
}

/// int = G(hat): C^1 piecewise-quadratic, exact antiderivative.
inline double int_wave(double x) {
  if (x <= -4.0) return 0.0;
  if (x <= -3.0) return (x + 4.0) * (x + 4.0);
  if (x <= -2.0) return -x * x - 4.0 * x - 2.0;
  return 2.0;
}

enum class InitialKind {
  random_fourier,
  bump,
  square,
  hat,
  integral,
  sinusoid_sum,
  custom_closed_form,
};

struct InitialCondition {
  InitialKind kind = InitialKind::bump;
  int modes = 0;                 // random_fourier only
  std::uint64_t seed = 0;        // random_fourier only
  double offset = 0.0;           // added to the profile
  std::vector<CosTerm> sinusoids;  // sinusoid_sum only
  std::function<double(std::span<const double>)> custom;  // custom_closed_form
  std::string custom_name;       // registry key for serializable custom forms
};

inline InitialCondition sinusoid_initial(std::vector<CosTerm> terms, double offset = 0.0) {
  InitialCondition ic;
  ic.kind = InitialKind::sinusoid_sum;
  ic.sinusoids = std::move(terms);
  ic.offset = offset;
  return ic;
}

inline InitialCondition random_fourier_initial(int modes, std::uint64_t seed,
                                               double offset = 0.0) {
  InitialCondition ic;
  ic.kind = InitialKind::random_fourier;
  ic.modes = modes;
  ic.seed = seed;
  ic.offset = offset;
  return ic;
}

/// Returns the modal form when the initial condition is a finite Fourier sum
/// (required by the constant/separable closed-form evolutions).
inline std::optional<FourierSum> as_fourier_sum(const InitialCondition& ic,
                                                const SpaceTimeGrid& grid) {
  if (grid.dim() != 1) return std::nullopt;
  switch (ic.kind) {
    case InitialKind::random_fourier: {
      const double L = 0.5 * grid.space_extent(0).length();
      FourierSum f = random_fourier_sum(ic.modes, ic.seed, L);
      return FourierSum(f.offset() + ic.offset, f.terms());
    }
    case InitialKind::sinusoid_sum:
      return FourierSum(ic.offset, ic.sinusoids);
    default:
      return std::nullopt;
  }
}

/// Pointwise evaluator for any kind; 1D kinds reject 2D grids and vice versa.
inline std::function<double(std::span<const double>)> make_initial_evaluator(
    const InitialCondition& ic, const SpaceTimeGrid& grid) {
  const double off = ic.offset;
  switch (ic.kind) {
    case InitialKind::random_fourier:
    case InitialKind::sinusoid_sum: {
      auto fs = as_fourier_sum(ic, grid);
      if (!fs) throw ConfigError("initial: Fourier-type condition requires a 1D grid");
      return [f = *fs](std::span<const double> x) { return f.value(x[0]); };
    }
    case InitialKind::bump:
      if (grid.dim() != 1) throw ConfigError("initial: bump is 1D only");
      return [off](std::span<const double> x) { return off + bump(x[0]); };
    case InitialKind::square:
      if (grid.dim() != 1) throw ConfigError("initial: square is 1D only");
      return [off](std::span<const double> x) { return off + square_wave(x[0]); };
    case InitialKind::hat:
      if (grid.dim() != 1) throw ConfigError("initial: hat is 1D only");
      return [off](std::span<const double> x) { return off + hat_wave(x[0]); };
    case InitialKind::integral:
      if (grid.dim() != 1) throw ConfigError("initial: int is 1D only");
      return [off](std::span<const double> x) { return off + int_wave(x[0]); };
    case InitialKind::custom_closed_form:
      if (!ic.custom) throw ConfigError("initial: custom form has no evaluator");
      return [off, f = ic.custom](std::span<const double> x) { return off + f(x); };
  }
  throw ConfigError("initial: unsupported kind");
}

/// Samples the initial condition on the grid's (flattened) space points.
inline Vector make_initial(const InitialCondition& ic, const SpaceTimeGrid& grid) {
  auto eval = make_initial_evaluator(ic, grid);
  const long n = grid.flat_space_size();
  Vector out(n);
  std::vector<double> x(grid.dim());
  for (long f = 0; f < n; ++f) {
    auto ix = grid.unflatten(f);
    for (int a = 0; a < grid.dim(); ++a) x[a] = grid.x(a, ix[a]);
    out[f] = eval(x);
  }
  return out;
}

}  // namespace pdeid
