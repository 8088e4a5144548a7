#pragma once

// NGARCH(1,1):
//   y_t       = r + lambda sigma_t - kappa(sigma_t) + sigma_t eps_t
//   sigma2_t+1 = a0 + a1 sigma2_t (eps_t - gamma)^2 + b1 sigma2_t

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qhedge/distributions.hpp"
#include "qhedge/error.hpp"

namespace qhedge {

struct NgarchParams {
  double alpha0 = 1e-6;
  double alpha1 = 0.0;
  double beta1 = 0.0;
  double gamma = 0.0;
  double lambda = 0.0;
  double r = 0.0;

  /// a1 (1 + gamma^2) + b1 for a standardized innovation.
  double persistence() const { return alpha1 * (1.0 + gamma * gamma) + beta1; }

  void validate() const {
    if (!(alpha0 > 0.0) || !(alpha1 >= 0.0) || !(beta1 >= 0.0) || !std::isfinite(gamma) || !std::isfinite(lambda) ||
        !std::isfinite(r))
      throw ParamError("NgarchParams: need alpha0 > 0, alpha1 >= 0, beta1 >= 0 and finite gamma, lambda, r");
  }
};

inline double unconditional_variance(const NgarchParams& p) {
  p.validate();
  const double pers = p.persistence();
  if (!(pers < 1.0)) throw NonStationaryError("unconditional_variance: a1(1+g^2)+b1 = " + std::to_string(pers) + " >= 1");
  return p.alpha0 / (1.0 - pers);
}

struct VarianceState {
  double sigma2 = 0.0;
  long t = 0;
};

struct StepResult {
  double log_return = 0.0;
  VarianceState next;
};

/// Next variance from the current one and the centred news term (eps - shift).
inline double next_variance(const NgarchParams& p, double sigma2, double news) {
  return p.alpha0 + p.alpha1 * sigma2 * news * news + p.beta1 * sigma2;
}

/// One step under P driven by the P-innovation eps.
inline StepResult step_p(const NgarchParams& p, const InnovationDistribution& d, VarianceState s, double eps) {
  const double sig = std::sqrt(s.sigma2);
  const double y = p.r + p.lambda * sig - d.cgf_value(sig) + sig * eps;
  return {y, {next_variance(p, s.sigma2, eps - p.gamma), s.t + 1}};
}

/// One step under the extended Girsanov measure driven by eps* = eps + lambda.
inline StepResult step_q_egp(const NgarchParams& p, const InnovationDistribution& d, VarianceState s, double eps_star) {
  const double sig = std::sqrt(s.sigma2);
  const double y = p.r - d.cgf_value(sig) + sig * eps_star;
  return {y, {next_variance(p, s.sigma2, eps_star - p.lambda - p.gamma), s.t + 1}};
}

struct FilterResult {
  std::vector<double> variances;    // sigma2_1 .. sigma2_{n+1}
  std::vector<double> innovations;  // eps_1 .. eps_n
};

/// Recovers innovations and conditional variances from observed log-returns.
/// variances[t] is the variance of returns[t]; the last entry is the one-step
/// forecast past the sample.
inline FilterResult filter_variance(const NgarchParams& p, const InnovationDistribution& d, std::span<const double> returns,
                                    double sigma2_init) {
  p.validate();
  if (returns.empty()) throw ParamError("filter_variance: empty return series");
  if (!(sigma2_init > 0.0) || !std::isfinite(sigma2_init)) throw ParamError("filter_variance: sigma2_init must be > 0");
  double cap = INFINITY;
  if (p.persistence() < 1.0) cap = 1e6 * unconditional_variance(p);
  FilterResult out;
  out.variances.reserve(returns.size() + 1);
  out.innovations.reserve(returns.size());
  double s2 = sigma2_init;
  out.variances.push_back(s2);
  for (double y : returns) {
    if (!std::isfinite(y)) throw NonFiniteError("filter_variance: non-finite return");
    const double sig = std::sqrt(s2);
    const double eps = (y - p.r - p.lambda * sig + d.cgf_value(sig)) / sig;
    s2 = next_variance(p, s2, eps - p.gamma);
    if (!std::isfinite(s2) || s2 > cap) throw NonFiniteError("filter_variance: variance overflow");
    out.innovations.push_back(eps);
    out.variances.push_back(s2);
  }
  return out;
}

/// Generic risk-neutral GARCH form
///   y_t = r - kappa*(sigma_t) + sigma_t eps*_t
///   sigma2_t+1 = a0*_t + a1*_t sigma2_t omega*(eps*_t) + b1*_t sigma2_t
/// with coefficients that may depend on the information up to t only.
struct GenericRiskNeutralParams {
  std::function<double(long t, double sigma2)> alpha0;
  std::function<double(long t, double sigma2)> alpha1;
  std::function<double(long t, double sigma2)> beta1;
  std::function<double(double eps_star)> news_impact;
  InnovationDistribution law = InnovationDistribution::gaussian();
  double r = 0.0;

  /// The extended Girsanov instance of an NGARCH model.
  static GenericRiskNeutralParams from_egp(const NgarchParams& p, const InnovationDistribution& d) {
    GenericRiskNeutralParams g;
    g.alpha0 = [a = p.alpha0](long, double) { return a; };
    g.alpha1 = [a = p.alpha1](long, double) { return a; };
    g.beta1 = [b = p.beta1](long, double) { return b; };
    g.news_impact = [shift = p.lambda + p.gamma](double e) { return (e - shift) * (e - shift); };
    g.law = d;
    g.r = p.r;
    return g;
  }
};

inline StepResult step_q_generic(const GenericRiskNeutralParams& g, VarianceState s, double eps_star) {
  const double sig = std::sqrt(s.sigma2);
  const double y = g.r - g.law.cgf_value(sig) + sig * eps_star;
  const double next = g.alpha0(s.t, s.sigma2) + g.alpha1(s.t, s.sigma2) * s.sigma2 * g.news_impact(eps_star) +
                      g.beta1(s.t, s.sigma2) * s.sigma2;
  return {y, {next, s.t + 1}};
}

}  // namespace qhedge
