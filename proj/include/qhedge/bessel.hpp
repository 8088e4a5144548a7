#pragma once

#include <cmath>
#include <numbers>
#include <utility>

#include "qhedge/error.hpp"

namespace qhedge {

/// Exponentially scaled modified Bessel functions of the second kind,
/// e^x K0(x) and e^x K1(x).
struct BesselK01 {
  double k0;
  double k1;
};

namespace detail {

// Power series (x <= 2).
inline BesselK01 bessel_k01_series(double x) {
  constexpr double euler = std::numbers::egamma;
  const double q = 0.25 * x * x;
  const double log_half = std::log(0.5 * x);

  double i0 = 0.0, i1 = 0.0, k0_tail = 0.0, k1_tail = 0.0;
  double term0 = 1.0;  // q^k / (k!)^2
  double term1 = 1.0;  // q^k / (k! (k+1)!)
  double harmonic = 0.0;
  for (int k = 0; k < 60; ++k) {
    if (k > 0) {
      term0 *= q / (double(k) * double(k));
      term1 *= q / (double(k) * double(k + 1));
      harmonic += 1.0 / k;
    }
    const double harmonic_next = harmonic + 1.0 / (k + 1);
    i0 += term0;
    i1 += term1;
    k0_tail += term0 * harmonic;
    k1_tail += term1 * (harmonic + harmonic_next - 2.0 * euler);
    if (term0 < 1e-18 * i0 && term1 < 1e-18 * i1) break;
  }
  i1 *= 0.5 * x;
  const double k0 = -(log_half + euler) * i0 + k0_tail;
  const double k1 = 1.0 / x + log_half * i1 - 0.25 * x * k1_tail;
  const double scale = std::exp(x);
  return {k0 * scale, k1 * scale};
}

// Steed's continued fraction CF2 with Temme's normalization (x > 2).
inline BesselK01 bessel_k01_cf2(double x) {
  constexpr double eps = 1e-16;
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d, delh = d;
  double q1 = 0.0, q2 = 1.0;
  const double a1 = 0.25;
  double q = a1, c = a1, a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 1; i < 10000; ++i) {
    a -= 2 * i;
    c = -a * c / (i + 1.0);
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < eps) break;
  }
  h = a1 * h;
  const double k0 = std::sqrt(std::numbers::pi / (2.0 * x)) / s;
  const double k1 = k0 * (x + 0.5 - h) / x;
  return {k0, k1};
}

}  // namespace detail

/// e^x K0(x), e^x K1(x) for x > 0, relative accuracy ~1e-15.
inline BesselK01 bessel_k01_scaled(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("bessel_k: argument must be positive and finite");
  return x <= 2.0 ? detail::bessel_k01_series(x) : detail::bessel_k01_cf2(x);
}

inline double bessel_k1(double x) { return bessel_k01_scaled(x).k1 * std::exp(-x); }

/// log K1(x), usable far beyond the underflow point of K1 itself.
inline double log_bessel_k1(double x) { return std::log(bessel_k01_scaled(x).k1) - x; }

/// d/dx log K1(x) = -K0(x)/K1(x) - 1/x.
inline double log_bessel_k1_derivative(double x) {
  const auto k = bessel_k01_scaled(x);
  return -k.k0 / k.k1 - 1.0 / x;
}

/// (log K1(x), d/dx log K1(x)) from a single evaluation.
inline std::pair<double, double> log_bessel_k1_with_derivative(double x) {
  const auto k = bessel_k01_scaled(x);
  return {std::log(k.k1) - x, -k.k0 / k.k1 - 1.0 / x};
}

}  // namespace qhedge
