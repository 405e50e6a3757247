#pragma once

#include "pdeid/coefficients.hpp"
#include "pdeid/initial.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace pdeid {

/// A 1D space-time field with closed-form derivatives, used to inject exact
/// features into the regression instead of finite differences.
class AnalyticField {
 public:
  virtual ~AnalyticField() = default;
  virtual double value(double x, double t) const = 0;
  virtual double space_derivative(int order, double x, double t) const = 0;
  virtual double time_derivative(double x, double t) const = 0;
};

namespace detail {
/// Memo for cumulative time integrals of a space-independent coefficient.
class TimeIntegralCache {
 public:
  TimeIntegralCache(CoefficientFunction c, double t0) : c_(std::move(c)), t0_(t0) {
    if (c_.depends_on_space())
      throw ConfigError("analytic field: coefficient must be space-independent");
    constant_ = c_.is_constant() ? c_.constant_value() : 0.0;
    is_constant_ = c_.is_constant();
  }
  double at(double t) const {
    if (is_constant_) return constant_ * (t - t0_);
    auto it = memo_.find(t);
    if (it != memo_.end()) return it->second;
    const double zero[1] = {0.0};
    const double v = integrate_in_time(c_, std::span<const double>(zero, 1), t0_, t);
    memo_.emplace(t, v);
    return v;
  }
  double coefficient(double t) const {
    const double zero[1] = {0.0};
    return c_(std::span<const double>(zero, 1), t);
  }

 private:
  CoefficientFunction c_;
  double t0_;
  bool is_constant_;
  double constant_;
  mutable std::map<double, double> memo_;
};
}  // namespace detail

/// u(x, t) = u0(x + C(t)) with C(t) = int_{t0}^t speed; solves
/// u_t = speed(t) * u_x exactly for space-independent speed.
class TranslatingWaveField : public AnalyticField {
 public:
  TranslatingWaveField(FourierSum u0, CoefficientFunction speed, double t0 = 0.0)
      : u0_(std::move(u0)), speed_(std::move(speed), t0) {}

  double value(double x, double t) const override {
    return u0_.value(x + speed_.at(t));
  }
  double space_derivative(int order, double x, double t) const override {
    return u0_.derivative(order, x + speed_.at(t));
  }
  double time_derivative(double x, double t) const override {
    return speed_.coefficient(t) * u0_.derivative(1, x + speed_.at(t));
  }

 private:
  FourierSum u0_;
  detail::TimeIntegralCache speed_;
};

/// Modal heat evolution: each cosine mode of u0 decays by exp(-k^2 L(t)) with
/// L(t) = int_{t0}^t a; solves u_t = a(t) * u_xx exactly.
class DecayingFourierField : public AnalyticField {
 public:
  DecayingFourierField(FourierSum u0, CoefficientFunction diffusivity, double t0 = 0.0)
      : u0_(std::move(u0)), diff_(std::move(diffusivity), t0) {}

  double value(double x, double t) const override { return space_derivative(0, x, t); }

  double space_derivative(int order, double x, double t) const override {
    const double lam = diff_.at(t);
    double v = (order == 0) ? u0_.offset() : 0.0;
    const double shift = order * std::numbers::pi / 2.0;
    for (const auto& m : u0_.terms()) {
      double a = m.amplitude * std::exp(-m.frequency * m.frequency * lam);
      for (int j = 0; j < order; ++j) a *= m.frequency;
      v += a * std::cos(m.frequency * x + m.phase + shift);
    }
    return v;
  }

  double time_derivative(double x, double t) const override {
    return diff_.coefficient(t) * space_derivative(2, x, t);
  }

 private:
  FourierSum u0_;
  detail::TimeIntegralCache diff_;
};

/// Inviscid Burgers u_t = a u u_x via characteristics: u = u0(x + a t u),
/// solved pointwise by Newton iteration. Valid strictly pre-shock; the
/// constructor rejects windows where a * t * max|u0'| comes close to 1.
class BurgersCharacteristicField : public AnalyticField {
 public:
  BurgersCharacteristicField(FourierSum u0, double a, double max_time)
      : u0_(std::move(u0)), a_(a) {
    const double steep = std::abs(a_) * std::abs(max_time) * u0_.max_derivative_bound(1);
    if (steep > 0.8)
      throw ConfigError("burgers characteristics: window reaches a*t*max|u0'| = " +
                        std::to_string(steep) + "; too close to shock formation");
  }

  double value(double x, double t) const override { return solve_u(x, t); }

  double space_derivative(int order, double x, double t) const override {
    if (order == 0) return solve_u(x, t);
    const double u = solve_u(x, t);
    const double xi = x + a_ * t * u;
    const double at = a_ * t;
    const double d1 = u0_.derivative(1, xi);
    const double D = 1.0 - at * d1;
    switch (order) {
      case 1:
        return d1 / D;
      case 2:
        return u0_.derivative(2, xi) / std::pow(D, 3);
      case 3: {
        const double d2 = u0_.derivative(2, xi);
        return u0_.derivative(3, xi) / std::pow(D, 4) +
               3.0 * at * d2 * d2 / std::pow(D, 5);
      }
      case 4: {
        const double d2 = u0_.derivative(2, xi);
        const double d3 = u0_.derivative(3, xi);
        return u0_.derivative(4, xi) / std::pow(D, 5) +
               10.0 * at * d2 * d3 / std::pow(D, 6) +
               15.0 * at * at * d2 * d2 * d2 / std::pow(D, 7);
      }
      default:
        throw ConfigError("burgers characteristics: derivatives available up to order 4");
    }
  }

  double time_derivative(double x, double t) const override {
    const double u = solve_u(x, t);
    return a_ * u * space_derivative(1, x, t);
  }

 private:
  double solve_u(double x, double t) const {
    double u = u0_.value(x);
    for (int it = 0; it < 100; ++it) {
      const double xi = x + a_ * t * u;
      const double g = u - u0_.value(xi);
      const double gp = 1.0 - a_ * t * u0_.derivative(1, xi);
      const double step = g / gp;
      u -= step;
      if (std::abs(step) < 1e-14 * (1.0 + std::abs(u))) return u;
    }
    throw DataError("burgers characteristics: Newton iteration did not converge");
  }

  FourierSum u0_;
  double a_;
};

/// Named collection of analytic fields (one per trajectory field).
struct AnalyticFieldSet {
  std::vector<std::string> names;
  std::vector<std::shared_ptr<const AnalyticField>> fields;

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }
  void add(const std::string& name, std::shared_ptr<const AnalyticField> f) {
    names.push_back(name);
    fields.push_back(std::move(f));
  }
};

}  // namespace pdeid
