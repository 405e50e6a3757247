#pragma once

#include "pdeid/common.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace pdeid {

/// Smooth switch 0.5 + 0.5*tanh(slope*(t - center)); rises for slope > 0,
/// decays for slope < 0.
template <class Scalar>
Scalar transition(Scalar t, Scalar slope, Scalar center) {
  return Scalar(0.5) + Scalar(0.5) * std::tanh(slope * (t - center));
}

struct TrigFactor {
  enum class Fn { none, sin, cos };
  Fn fn = Fn::none;
  double freq = 0.0;
  double phase = 0.0;

  double operator()(double v) const {
    switch (fn) {
      case Fn::sin: return std::sin(freq * v + phase);
      case Fn::cos: return std::cos(freq * v + phase);
      default: return 1.0;
    }
  }
};

/// One multiplicative term: scale * prod_i x_i^p_i * t^q * prod_i trig(x_i)
/// * trig(t) * transition(t). Sums of such terms cover every coefficient
/// function used by the benchmark problems while staying serializable.
struct CoefficientTerm {
  double scale = 1.0;
  std::vector<int> x_powers;           // empty = all zero
  int t_power = 0;
  std::vector<TrigFactor> x_trig;      // empty = none
  TrigFactor t_trig;
  std::optional<std::pair<double, double>> transition_factor;  // slope, center

  double eval(std::span<const double> x, double t) const {
    double v = scale;
    for (std::size_t i = 0; i < x_powers.size() && i < x.size(); ++i)
      for (int p = 0; p < x_powers[i]; ++p) v *= x[i];
    for (int p = 0; p < t_power; ++p) v *= t;
    for (std::size_t i = 0; i < x_trig.size() && i < x.size(); ++i) v *= x_trig[i](x[i]);
    v *= t_trig(t);
    if (transition_factor)
      v *= transition(t, transition_factor->first, transition_factor->second);
    return v;
  }

  bool is_constant() const {
    bool xconst = true;
    for (int p : x_powers) xconst &= (p == 0);
    for (const auto& f : x_trig) xconst &= (f.fn == TrigFactor::Fn::none);
    return xconst && t_power == 0 && t_trig.fn == TrigFactor::Fn::none &&
           !transition_factor;
  }

  bool depends_on_space() const {
    for (int p : x_powers)
      if (p != 0) return true;
    for (const auto& f : x_trig)
      if (f.fn != TrigFactor::Fn::none) return true;
    return false;
  }

  bool depends_on_time() const {
    return t_power != 0 || t_trig.fn != TrigFactor::Fn::none ||
           transition_factor.has_value();
  }
};

/// Closed-form real function of (x, t) expressed as a sum of terms.
class CoefficientFunction {
 public:
  CoefficientFunction() = default;
  explicit CoefficientFunction(std::vector<CoefficientTerm> terms)
      : terms_(std::move(terms)) {}

  static CoefficientFunction constant(double c) {
    CoefficientTerm t;
    t.scale = c;
    return CoefficientFunction({t});
  }

  double operator()(std::span<const double> x, double t) const {
    double v = 0.0;
    for (const auto& term : terms_) v += term.eval(x, t);
    return v;
  }
  double operator()(double x, double t) const {
    return (*this)(std::span<const double>(&x, 1), t);
  }

  const std::vector<CoefficientTerm>& terms() const { return terms_; }

  bool is_constant() const {
    for (const auto& t : terms_)
      if (!t.is_constant()) return false;
    return true;
  }
  double constant_value() const {
    double v = 0.0;
    for (const auto& t : terms_) v += t.scale;
    return v;
  }
  bool depends_on_space() const {
    for (const auto& t : terms_)
      if (t.depends_on_space()) return true;
    return false;
  }
  bool depends_on_time() const {
    for (const auto& t : terms_)
      if (t.depends_on_time()) return true;
    return false;
  }

 private:
  std::vector<CoefficientTerm> terms_;
};

/// Adaptive Simpson integral of c(x, t) in t over [t0, t1] at fixed x.
inline double integrate_in_time(const CoefficientFunction& c, std::span<const double> x,
                                double t0, double t1, double tol = 1e-12) {
  auto f = [&](double t) { return c(x, t); };
  struct Rec {
    double a, b, fa, fm, fb, whole;
  };
  auto simpson = [&](double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  };
  // Non-recursive adaptive Simpson with a small explicit stack.
  std::vector<Rec> stack;
  double total = 0.0;
  {
    const double m = 0.5 * (t0 + t1);
    const double fa = f(t0), fm = f(m), fb = f(t1);
    stack.push_back({t0, t1, fa, fm, fb, simpson(t0, t1, fa, fm, fb)});
  }
  int depth_guard = 0;
  while (!stack.empty()) {
    if (++depth_guard > 2000000)
      throw DataError("integrate_in_time: adaptive quadrature failed to converge");
    Rec r = stack.back();
    stack.pop_back();
    const double m = 0.5 * (r.a + r.b);
    const double lm = 0.5 * (r.a + m), rm = 0.5 * (m + r.b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(r.a, m, r.fa, flm, r.fm);
    const double right = simpson(m, r.b, r.fm, frm, r.fb);
    if (std::abs(left + right - r.whole) <= 15.0 * tol * std::max(1.0, std::abs(left + right)) ||
        (r.b - r.a) < 1e-14 * std::max(1.0, std::abs(t1 - t0))) {
      total += left + right + (left + right - r.whole) / 15.0;
    } else {
      stack.push_back({r.a, m, r.fa, flm, r.fm, left});
      stack.push_back({m, r.b, r.fm, frm, r.fb, right});
    }
  }
  return total;
}

}  // namespace pdeid
