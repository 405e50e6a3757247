#pragma once

#include "pdeid/common.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <numbers>
#include <vector>

namespace pdeid {

/// Fourier pseudo-spectral differentiation on a periodic axis of n points
/// spanning a domain of length L. Wavenumbers follow the usual FFT layout
/// k_j = 2*pi*j/L for j = 0..n/2, then negative frequencies; the Nyquist
/// mode is zeroed for odd derivative orders.
class SpectralDifferentiator {
 public:
  SpectralDifferentiator(int n, double length) : n_(n), length_(length) {
    if (n <= 1) throw ConfigError("spectral: axis needs at least 2 points");
    wavenumbers_.resize(n);
    const double k0 = 2.0 * std::numbers::pi / length;
    for (int j = 0; j < n; ++j) {
      const int f = (j <= n / 2) ? j : j - n;
      wavenumbers_[j] = k0 * f;
    }
    spec_.resize(n);
    dspec_.resize(n);
  }

  int size() const { return n_; }
  double wavenumber_max() const { return std::abs(wavenumbers_[n_ / 2]); }

  void forward(const double* in, std::complex<double>* out) {
    fft_.fwd(reinterpret_cast<std::complex<double>*>(out), in, n_);
  }
  void inverse(const std::complex<double>* in, double* out) {
    fft_.inv(out, in, n_);
  }

  /// out = d^order/dx^order of in.
  void derivative(const double* in, double* out, int order) {
    forward(in, spec_.data());
    spectrum_derivative(spec_.data(), dspec_.data(), order);
    inverse(dspec_.data(), out);
  }

  /// Multiplies a spectrum by (i k)^order in place-compatible fashion.
  void spectrum_derivative(const std::complex<double>* in, std::complex<double>* out,
                           int order) const {
    const std::complex<double> i_unit(0.0, 1.0);
    for (int j = 0; j < n_; ++j) {
      std::complex<double> f(1.0, 0.0);
      for (int m = 0; m < order; ++m) f *= i_unit * wavenumbers_[j];
      out[j] = f * in[j];
    }
    if (n_ % 2 == 0 && order % 2 == 1) out[n_ / 2] = 0.0;
  }

  /// Exponential low-pass sigma(k) = exp(-36 (|k|/k_max)^36); a mild filter
  /// that leaves well-resolved modes untouched.
  void apply_exponential_filter(double* field) {
    forward(field, spec_.data());
    const double kmax = wavenumber_max();
    for (int j = 0; j < n_; ++j) {
      const double r = std::abs(wavenumbers_[j]) / kmax;
      double r2 = r * r;
      double r4 = r2 * r2;
      double r8 = r4 * r4;
      double r16 = r8 * r8;
      double r36 = r16 * r16 * r4;  // r^36
      spec_[j] *= std::exp(-36.0 * r36);
    }
    inverse(spec_.data(), field);
  }

  const std::vector<double>& wavenumbers() const { return wavenumbers_; }

 private:
  int n_;
  double length_;
  Eigen::FFT<double> fft_;
  std::vector<double> wavenumbers_;
  std::vector<std::complex<double>> spec_, dspec_;
};

}  // namespace pdeid
