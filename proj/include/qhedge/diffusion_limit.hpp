#pragma once

// h-scaled NGARCH families, their bivariate diffusion limit and the
// vega-multiplier limit VM(h) -> (sigma/S) sqrt(w2) (M3 - 2 w3).

#include <cmath>
#include <vector>

#include "qhedge/distributions.hpp"
#include "qhedge/error.hpp"
#include "qhedge/garch.hpp"

namespace qhedge {

struct LimitParams {
  double omega0 = 0.0;  // variance per unit time
  double omega1 = 0.0;  // mean reversion
  double omega2 = 0.0;  // vol-of-variance scale
  double omega3 = 0.0;  // leverage
  double m3 = 0.0;      // innovation raw moments
  double m4 = 3.0;

  void validate() const {
    if (!(omega2 >= 0.0)) throw ParamError("LimitParams: omega2 must be >= 0");
    if (!(m4 - m3 * m3 - 1.0 >= -1e-12)) throw ParamError("LimitParams: need M4 - M3^2 - 1 >= 0");
  }

  static LimitParams with_moments(double w0, double w1, double w2, double w3, const InnovationDistribution& d) {
    LimitParams l{w0, w1, w2, w3, d.raw_moment(3), d.raw_moment(4)};
    l.validate();
    return l;
  }

  /// Limit parameters for which the h = 1 member is the given daily model.
  static LimitParams from_unit_step(const NgarchParams& p, const InnovationDistribution& d) {
    return with_moments(p.alpha0, 1.0 - p.beta1 - p.alpha1 * (1.0 + p.gamma * p.gamma), p.alpha1 * p.alpha1, p.gamma, d);
  }
};

struct HFamily {
  double h = 1.0;
  NgarchParams params;  // alpha0(h), alpha1(h), beta1(h), gamma(h); lambda and r as per unit time
};

/// alpha0 = w0 h, alpha1 = sqrt(w2 h), gamma = w3, beta1 = 1 - alpha1 (1 + w3^2) - w1 h.
inline HFamily make_h_family(const LimitParams& l, double h, double lambda = 0.0, double r = 0.0) {
  l.validate();
  if (!(h > 0.0)) throw InadmissibleHError("make_h_family: h must be > 0");
  HFamily f;
  f.h = h;
  auto& p = f.params;
  p.alpha0 = l.omega0 * h;
  p.alpha1 = std::sqrt(l.omega2 * h);
  p.gamma = l.omega3;
  p.beta1 = 1.0 - p.alpha1 * (1.0 + l.omega3 * l.omega3) - l.omega1 * h;
  p.lambda = lambda;
  p.r = r;
  if (p.beta1 < 0.0) throw InadmissibleHError("make_h_family: beta1(h) < 0 at h = " + std::to_string(h));
  return f;
}

/// kappa(sqrt(h) sigma) / h.
inline double scaled_cgf(const InnovationDistribution& d, double sigma, double h) {
  if (d.kind() == InnovationKind::gaussian) return d.cgf_value(sigma);
  return d.cgf_value(std::sqrt(h) * sigma) / h;
}

/// rho(h) = lambda + (kappa(sqrt(h) sigma)/h - kappa(sigma)) / sigma.
inline double market_price_of_risk(const NgarchParams& p, const InnovationDistribution& d, double sigma, double h) {
  if (!(sigma > 0.0) || !(h > 0.0)) throw ParamError("market_price_of_risk: need sigma > 0 and h > 0");
  if (!d.in_cgf_domain(sigma)) throw DomainError("market_price_of_risk: sigma outside the CGF domain");
  return p.lambda + (scaled_cgf(d, sigma, h) - d.cgf_value(sigma)) / sigma;
}

/// rho_t = lambda + (sigma^2/2 - kappa(sigma)) / sigma.
inline double market_price_of_risk_limit(double lambda, const InnovationDistribution& d, double sigma) {
  if (!d.in_cgf_domain(sigma)) throw DomainError("market_price_of_risk_limit: sigma outside the CGF domain");
  return lambda + (0.5 * sigma * sigma - d.cgf_value(sigma)) / sigma;
}

inline double limit_vega_multiplier(const LimitParams& l, double s, double sigma) {
  if (!(s > 0.0)) throw ParamError("limit_vega_multiplier: S must be > 0");
  return sigma / s * std::sqrt(l.omega2) * (l.m3 - 2.0 * l.omega3);
}

/// Extended Girsanov vega multiplier of the h-member, conditional on
/// (S, sigma^2) with sigma^2 per unit time:
/// alpha1(h) sigma^2 (k'(u)^2 - 2(gamma + sqrt(h) rho) k'(u) + k''(u) - 1) / (e^{rh} S (e^{k(2u) - 2k(u)} - 1)), u = sqrt(h) sigma.
inline double vega_multiplier_h(const LimitParams& l, const InnovationDistribution& d, double s, double sigma, double h,
                                double lambda = 0.0, double r = 0.0) {
  if (!(s > 0.0)) throw ParamError("vega_multiplier_h: S must be > 0");
  const auto f = make_h_family(l, h, lambda, r);
  const auto& p = f.params;
  const double rho = market_price_of_risk(p, d, sigma, h);
  const double u = std::sqrt(h) * sigma;
  if (!d.in_cgf_domain(2.0 * u)) throw DomainError("vega_multiplier_h: 2 sqrt(h) sigma outside the CGF domain");
  const double k1 = d.cgf_derivative(1, u), k2 = d.cgf_derivative(2, u);
  const double c = p.gamma + std::sqrt(h) * rho;
  const double num = k1 * k1 - 2.0 * c * k1 + (k2 - 1.0);
  return p.alpha1 * sigma * sigma * num / (std::exp(r * h) * s * std::expm1(d.cgf_value(2.0 * u) - 2.0 * d.cgf_value(u)));
}

struct VmConvergenceRow {
  double h;
  double vm;
  double abs_error;
  double rel_error;  // relative to |limit|, or absolute when the limit is 0
};

inline std::vector<double> default_h_grid() { return {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5}; }

inline std::vector<VmConvergenceRow> vm_convergence_study(const LimitParams& l, const InnovationDistribution& d, double s,
                                                          double sigma, const std::vector<double>& grid, double lambda = 0.0,
                                                          double r = 0.0) {
  const double lim = limit_vega_multiplier(l, s, sigma);
  std::vector<VmConvergenceRow> rows;
  for (double h : grid) {
    const double vm = vega_multiplier_h(l, d, s, sigma, h, lambda, r);
    const double err = std::abs(vm - lim);
    rows.push_back({h, vm, err, lim != 0.0 ? err / std::abs(lim) : err});
  }
  return rows;
}

enum class LimitKernel { egp, mmm };

/// Drift and diffusion coefficients of the limiting risk-neutral variance
/// d sigma^2 = drift dt + c1 sigma^2 dW1* + c2 sigma^2 dW2*.
struct LimitVarianceDynamics {
  LimitParams l;

  double egp_drift(double sigma2, double rho) const {
    return l.omega0 - (l.omega1 - 2.0 * std::sqrt(l.omega2) * l.omega3 * rho) * sigma2;
  }
  double mmm_drift(double sigma2, double rho) const {
    return l.omega0 - (l.omega1 + std::sqrt(l.omega2) * (l.m3 - 2.0 * l.omega3) * rho) * sigma2;
  }
  double drift(LimitKernel k, double sigma2, double rho) const {
    return k == LimitKernel::egp ? egp_drift(sigma2, rho) : mmm_drift(sigma2, rho);
  }
  double physical_drift(double sigma2) const { return l.omega0 - l.omega1 * sigma2; }
  double correlated_diffusion(double sigma2) const { return std::sqrt(l.omega2) * (l.m3 - 2.0 * l.omega3) * sigma2; }
  double orthogonal_diffusion(double sigma2) const {
    return std::sqrt(l.omega2) * std::sqrt(std::max(l.m4 - l.m3 * l.m3 - 1.0, 0.0)) * sigma2;
  }
};

inline LimitVarianceDynamics limit_drift_coefficients(const LimitParams& l) {
  l.validate();
  return {l};
}

/// NGARCH parameters of the h-member in per-step units (variance per step
/// h sigma^2, rate r h) for Gaussian innovations, where rho(h) = lambda and
/// the member is an ordinary NGARCH(1,1) with premium sqrt(h) lambda.
inline NgarchParams h_member_step_params(const LimitParams& l, const InnovationDistribution& d, double h, double lambda,
                                         double r) {
  if (d.kind() != InnovationKind::gaussian)
    throw ParamError("h_member_step_params: only Gaussian members reduce to a constant-premium NGARCH");
  auto p = make_h_family(l, h, lambda, r).params;
  p.alpha0 *= h;
  p.lambda = std::sqrt(h) * lambda;
  p.r = r * h;
  return p;
}

}  // namespace qhedge
