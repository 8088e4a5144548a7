#pragma once

// Hedge ratios at the root of an ensemble: local risk minimization under a
// martingale measure (frequency j) and under P, Duan delta, vega with
// respect to the next-period variance, vega multipliers and Delta-SV.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qhedge/black_scholes.hpp"
#include "qhedge/ensemble.hpp"
#include "qhedge/error.hpp"
#include "qhedge/mc_engine.hpp"
#include "qhedge/measures.hpp"
#include "qhedge/numeric.hpp"
#include "qhedge/random.hpp"

namespace qhedge {

/// European payoff H(S_T).
struct Payoff {
  enum class Kind { call, put, asset, constant };
  Kind kind = Kind::call;
  double strike = 0.0;  // call/put strike, or the constant value

  static Payoff call(double k) { return {Kind::call, k}; }
  static Payoff put(double k) { return {Kind::put, k}; }
  static Payoff asset() { return {Kind::asset, 0.0}; }
  static Payoff constant(double c) { return {Kind::constant, c}; }

  double operator()(double s) const {
    switch (kind) {
      case Kind::call: return s > strike ? s - strike : 0.0;
      case Kind::put: return s < strike ? strike - s : 0.0;
      case Kind::asset: return s;
      case Kind::constant: return strike;
    }
    return 0.0;
  }

  /// dH/dS_T (right derivative at the kink).
  double slope(double s) const {
    switch (kind) {
      case Kind::call: return s > strike ? 1.0 : 0.0;
      case Kind::put: return s < strike ? -1.0 : 0.0;
      case Kind::asset: return 1.0;
      case Kind::constant: return 0.0;
    }
    return 0.0;
  }
};

struct HedgeResult {
  double ratio = 0.0;  // units of underlying per option
  double std_error = 0.0;
  double price = 0.0;  // V_t
  double price_std_error = 0.0;
  std::optional<double> delta_s;
  std::optional<double> delta_sigma2;
  std::optional<double> vm;
  std::optional<double> negative_n_fraction;  // minimal martingale diagnostics
  std::optional<double> negative_z_fraction;
};

struct LrmOptions {
  std::size_t j = 1;
  bool closed_form_denominator = true;  // used when j == 1
  bool control_variate = false;         // subtract later martingale increments with Black-Scholes deltas
  bool any_horizon = false;             // root hedge only: skip the j | T check (martingale measures)
};

namespace detail {

inline void require_martingale_ensemble(const PathEnsemble& e, const char* who) {
  const bool egp = e.measure == SimMeasure::egp && e.unit_weights();
  const bool esscher = e.measure == SimMeasure::physical && e.kernel == KernelKind::esscher;
  if (!egp && !esscher) throw InvalidMeasureError(std::string(who) + ": needs an ensemble under a martingale measure");
}

/// CGF of the innovation driving returns under the ensemble's pricing
/// measure at the root, so that y - r = -kappa*(sigma) + sigma eps.
inline std::function<double(double)> root_pricing_cgf(const PathEnsemble& e) {
  const auto& d = e.dist;
  if (e.measure == SimMeasure::egp) return [d](double z) { return d.cgf_value(z); };
  const double sig = std::sqrt(e.variance(0, 0));
  const double phi = esscher_theta(e.params, d, sig) * sig;
  return [d, phi](double z) { return esscher_tilted_cgf(d, phi, z); };
}

/// Per-path weights w_i (summing to ~1) for the ensemble's pricing measure.
inline std::vector<double> path_weights(const PathEnsemble& e) {
  std::vector<double> w(e.n_paths);
  for (std::size_t i = 0; i < e.n_paths; ++i) w[i] = e.weight(i);
  return w;
}

inline double weighted_mean(const std::vector<double>& w, const std::vector<double>& x) {
  CompensatedSum s, m;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.add(w[i] * x[i]);
    m.add(w[i]);
  }
  return s.value() / m.value();
}

/// ratio = sum w a / sum w b with a delta-method standard error for Monte
/// Carlo ensembles (zero when enumerated).
struct RatioStats {
  double num = 0.0, den = 0.0, ratio = 0.0, se = 0.0;
};

inline RatioStats weighted_ratio(const PathEnsemble& e, const std::vector<double>& w, const std::vector<double>& a,
                                 const std::vector<double>& b, std::optional<double> fixed_den) {
  const double num = weighted_mean(w, a);
  const double den = fixed_den ? *fixed_den : weighted_mean(w, b);
  // increments smaller than 1e-12 S0 count as no hedging instrument
  const double floor = 1e-24 * e.s0 * e.s0;
  if (!(den > floor) || !std::isfinite(den)) throw DegenerateVarianceError("hedge: conditional variance of the increment is ~0");
  RatioStats r{num, den, num / den, 0.0};
  if (!e.enumerated) {
    const double n = double(e.n_paths);
    std::vector<double> psi(e.n_paths);
    for (std::size_t i = 0; i < e.n_paths; ++i) {
      const double wi = w[i] * n;  // rn weight
      psi[i] = fixed_den ? wi * a[i] / den : wi * (a[i] - r.ratio * b[i]) / den;
    }
    r.se = mean_estimate(psi).std_error;
  }
  return r;
}

/// Discounted payoff minus later martingale increments sum_{l>j} Delta_l (S~_l - S~_{l-1}),
/// Delta_l the Black-Scholes delta at l-1 with the current one-step volatility.
inline double control_variate_adjustment(const PathEnsemble& e, std::size_t i, const Payoff& h, std::size_t j) {
  if (h.kind != Payoff::Kind::call && h.kind != Payoff::Kind::put) return 0.0;
  const double r = e.params.r;
  const std::size_t n = e.horizon;
  double adj = 0.0;
  for (std::size_t l = j + 1; l <= n; ++l) {
    const double s_prev = e.price(i, l - 1);
    const double vol = std::sqrt(e.variance(i, l - 1));
    const double delta = bs_delta(s_prev, h.strike, double(n - l + 1), r, vol, h.kind == Payoff::Kind::call);
    adj += delta * (e.price(i, l) * std::exp(-r * double(l)) - s_prev * std::exp(-r * double(l - 1)));
  }
  return adj;
}

}  // namespace detail

/// xi^Q_j = e^{-rT} E^Q[H (S_j e^{-rj} - S_0)] / Var^Q[S_j e^{-rj} - S_0] and
/// V_0 = e^{-rT} E^Q[H], at the ensemble root.
inline HedgeResult lrm_q_hedge(const PathEnsemble& e, const Payoff& h, const LrmOptions& opt = {}) {
  detail::require_martingale_ensemble(e, "lrm_q_hedge");
  if (opt.j == 0 || opt.j > e.horizon || (!opt.any_horizon && e.horizon % opt.j != 0))
    throw FrequencyError("lrm_q_hedge: j must divide the time to maturity");
  const std::size_t n = e.horizon, j = opt.j;
  const double r = e.params.r, s0 = e.s0, disc = std::exp(-r * double(n)), disc_j = std::exp(-r * double(j));
  const auto w = detail::path_weights(e);
  std::vector<double> x(e.n_paths), hv(e.n_paths);
  for (std::size_t i = 0; i < e.n_paths; ++i) {
    x[i] = e.price(i, j) * disc_j - s0;
    hv[i] = disc * h(e.price(i, n));
    if (opt.control_variate) hv[i] -= detail::control_variate_adjustment(e, i, h, j);
  }
  const double xbar = detail::weighted_mean(w, x), hbar = detail::weighted_mean(w, hv);
  std::vector<double> a(e.n_paths), b(e.n_paths);
  for (std::size_t i = 0; i < e.n_paths; ++i) {
    a[i] = (hv[i] - hbar) * (x[i] - xbar);
    b[i] = (x[i] - xbar) * (x[i] - xbar);
  }
  std::optional<double> den;
  if (j == 1 && opt.closed_form_denominator) {
    const auto kq = detail::root_pricing_cgf(e);
    const double sig = std::sqrt(e.variance(0, 0));
    den = s0 * s0 * std::expm1(kq(2.0 * sig) - 2.0 * kq(sig));
  }
  const auto rs = detail::weighted_ratio(e, w, a, b, den);
  HedgeResult out;
  out.ratio = rs.ratio;
  out.std_error = rs.se;
  const auto v = conditional_expectation(e, [&h](const PathEnsemble& en, std::size_t i) { return h(en.price(i, en.horizon)); },
                                         disc);
  out.price = v.value;
  out.price_std_error = v.std_error;
  return out;
}

/// xi^P_j = Cov^P(e^{-rT} H N_T ... N_{2j}, S~_j - S~_0) / Var^P[S~_j - S~_0] with
/// V_0 = E^P[e^{-rT} H N_T ... N_j]. Negative N_t are reported, not fatal.
inline HedgeResult lrm_p_hedge(const PathEnsemble& e, const Payoff& h, const LrmOptions& opt = {}) {
  if (e.measure != SimMeasure::physical || !e.unit_weights())
    throw InvalidMeasureError("lrm_p_hedge: needs an unweighted ensemble drawn under P");
  if (opt.j == 0 || e.horizon % opt.j != 0) throw FrequencyError("lrm_p_hedge: j must divide the time to maturity");
  const std::size_t n = e.horizon, j = opt.j;
  const auto f = mmm_factors(e, j);
  const auto& p = e.params;
  const double s0 = e.s0, disc = std::exp(-p.r * double(n)), disc_j = std::exp(-p.r * double(j));
  const auto w = detail::path_weights(e);
  std::vector<double> x(e.n_paths), g(e.n_paths), v(e.n_paths);
  std::size_t neg_z = 0;
  for (std::size_t i = 0; i < e.n_paths; ++i) {
    x[i] = e.price(i, j) * disc_j - s0;
    const double hv = disc * h(e.price(i, n));
    g[i] = hv * f.tail_product(i, 1);
    v[i] = hv * f.tail_product(i, 0);
    if (f.z[i] <= 0.0) ++neg_z;
  }
  const double xbar = detail::weighted_mean(w, x), gbar = detail::weighted_mean(w, g);
  std::vector<double> a(e.n_paths), b(e.n_paths);
  for (std::size_t i = 0; i < e.n_paths; ++i) {
    a[i] = (g[i] - gbar) * (x[i] - xbar);
    b[i] = (x[i] - xbar) * (x[i] - xbar);
  }
  std::optional<double> den;
  if (j == 1 && opt.closed_form_denominator) {
    const double sig = std::sqrt(e.variance(0, 0));
    const auto& d = e.dist;
    den = s0 * s0 * std::exp(2.0 * p.lambda * sig) * std::expm1(d.cgf_value(2.0 * sig) - 2.0 * d.cgf_value(sig));
  }
  const auto rs = detail::weighted_ratio(e, w, a, b, den);
  HedgeResult out;
  out.ratio = rs.ratio;
  out.std_error = rs.se;
  if (e.enumerated) {
    out.price = detail::weighted_mean(w, v);
  } else {
    const auto m = mean_estimate(v);
    out.price = m.value;
    out.price_std_error = m.std_error;
  }
  out.negative_n_fraction = f.negative_fraction;
  out.negative_z_fraction = double(neg_z) / double(e.n_paths);
  return out;
}

/// Delta_S = e^{-rT} E^Q[H'(S_T) S_T / S_0].
inline HedgeResult delta_s(const PathEnsemble& e, const Payoff& h) {
  detail::require_martingale_ensemble(e, "delta_s");
  const double disc = std::exp(-e.params.r * double(e.horizon));
  const auto est = conditional_expectation(
      e, [&h](const PathEnsemble& en, std::size_t i) {
        const double st = en.price(i, en.horizon);
        return h.slope(st) * st / en.s0;
      },
      disc);
  HedgeResult out;
  out.ratio = est.value;
  out.std_error = est.std_error;
  out.delta_s = est.value;
  return out;
}

namespace detail {

/// d phi / d sigma for the Esscher tilt phi = theta sigma, by implicit
/// differentiation of the martingale equation.
inline double esscher_phi_slope(const InnovationDistribution& d, double lambda, double phi, double sigma) {
  const double k1_sum = d.cgf_derivative(1, phi + sigma);
  return -(k1_sum - d.cgf_derivative(1, sigma) + lambda) / (k1_sum - d.cgf_derivative(1, phi));
}

/// Per-path pathwise (and, for Esscher, likelihood-ratio) sensitivity of
/// the discounted-payoff integrand with respect to sigma2_1.
inline double vega_integrand(const PathEnsemble& e, std::size_t i, const Payoff& h) {
  const auto& p = e.params;
  const auto& d = e.dist;
  const std::size_t n = e.horizon;
  const bool egp = e.measure == SimMeasure::egp;
  double b = 1.0;  // B(l, 1)
  double dlog_s = 0.0, dlog_z = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    const double v = e.variance(i, l), sig = std::sqrt(v), eps = e.innovation(i, l);
    if (egp) {
      dlog_s += b * (eps - d.cgf_derivative(1, sig)) / (2.0 * sig);
      const double news = eps - p.lambda - p.gamma;
      b *= p.alpha1 * news * news + p.beta1;
    } else {
      dlog_s += b * (p.lambda - d.cgf_derivative(1, sig) + eps) / (2.0 * sig);
      const double phi = esscher_theta(p, d, sig) * sig;
      dlog_z += b * esscher_phi_slope(d, p.lambda, phi, sig) * (eps - d.cgf_derivative(1, phi)) / (2.0 * sig);
      const double news = eps - p.gamma;
      b *= p.alpha1 * news * news + p.beta1;
    }
  }
  const double st = e.price(i, n);
  return h.slope(st) * st * dlog_s + (egp ? 0.0 : h(st) * dlog_z);
}

}  // namespace detail

/// Delta_sigma2 = d/d sigma2_1 of e^{-rT} E^Q[H(S_T)], holding innovations fixed.
inline HedgeResult vega_sigma2(const PathEnsemble& e, const Payoff& h) {
  detail::require_martingale_ensemble(e, "vega_sigma2");
  const double disc = std::exp(-e.params.r * double(e.horizon));
  const auto est = conditional_expectation(
      e, [&h](const PathEnsemble& en, std::size_t i) { return detail::vega_integrand(en, i, h); }, disc);
  HedgeResult out;
  out.ratio = est.value;
  out.std_error = est.std_error;
  out.delta_sigma2 = est.value;
  return out;
}

/// Closed-form VM^Q under the extended Girsanov measure:
/// a1 sigma2 (k'^2 - 2(lambda+gamma) k' + k'' - 1) / (e^r S (e^{k(2 sigma) - 2k(sigma)} - 1)).
inline double vega_multiplier_q(const NgarchParams& p, const InnovationDistribution& d, double s, double sigma2_next) {
  const double sig = std::sqrt(sigma2_next);
  if (!d.in_cgf_domain(2.0 * sig)) throw DomainError("vega_multiplier_q: 2 sigma outside the CGF domain");
  const double k1 = d.cgf_derivative(1, sig), k2 = d.cgf_derivative(2, sig);
  const double c = p.lambda + p.gamma;
  return p.alpha1 * sigma2_next * (k1 * k1 - 2.0 * c * k1 + k2 - 1.0) /
         (std::exp(p.r) * s * std::expm1(d.cgf_value(2.0 * sig) - 2.0 * d.cgf_value(sig)));
}

/// Closed-form VM^P (one step under P):
/// a1 sigma2 (k'^2 - 2 gamma k' + k'' - 1) / (e^{r + lambda sigma} S (e^{k(2 sigma) - 2k(sigma)} - 1)).
inline double vega_multiplier_p_closed_form(const NgarchParams& p, const InnovationDistribution& d, double s,
                                            double sigma2_next) {
  const double sig = std::sqrt(sigma2_next);
  if (!d.in_cgf_domain(2.0 * sig)) throw DomainError("vega_multiplier_p: 2 sigma outside the CGF domain");
  const double k1 = d.cgf_derivative(1, sig), k2 = d.cgf_derivative(2, sig);
  return p.alpha1 * sigma2_next * (k1 * k1 - 2.0 * p.gamma * k1 + k2 - 1.0) /
         (std::exp(p.r + p.lambda * sig) * s * std::expm1(d.cgf_value(2.0 * sig) - 2.0 * d.cgf_value(sig)));
}

/// Closed-form vega multiplier under the conditional Esscher measure: the
/// return innovation follows the tilted law kappa_theta(z) = kappa(z+phi) - kappa(phi)
/// while the variance news stays (eps - gamma)^2.
inline double vega_multiplier_esscher(const NgarchParams& p, const InnovationDistribution& d, double s, double sigma2_next) {
  const double sig = std::sqrt(sigma2_next);
  const double phi = esscher_theta(p, d, sig) * sig;
  if (!d.in_cgf_domain(2.0 * sig + phi)) throw DomainError("vega_multiplier_esscher: outside the CGF domain");
  const double k1 = d.cgf_derivative(1, sig + phi), k2 = d.cgf_derivative(2, sig + phi);
  const double k10 = d.cgf_derivative(1, phi), k20 = d.cgf_derivative(2, phi);
  const double cov = (k1 - p.gamma) * (k1 - p.gamma) + k2 - (k10 - p.gamma) * (k10 - p.gamma) - k20;
  const double var = std::expm1(esscher_tilted_cgf(d, phi, 2.0 * sig) - 2.0 * esscher_tilted_cgf(d, phi, sig));
  return p.alpha1 * sigma2_next * cov / (std::exp(p.r) * s * var);
}

/// Vega multiplier of the ensemble's pricing kernel at its root.
inline double vega_multiplier_for(const PathEnsemble& e) {
  const double v = e.variance(0, 0);
  if (e.measure == SimMeasure::egp) return vega_multiplier_q(e.params, e.dist, e.s0, v);
  return vega_multiplier_esscher(e.params, e.dist, e.s0, v);
}

/// OLS slope of Delta sigma2 on Delta S with a heteroskedasticity-robust
/// standard error.
inline Estimate regression_slope(const std::vector<double>& ds, const std::vector<double>& dv) {
  const std::size_t n = ds.size();
  CompensatedSum sx, sy;
  for (std::size_t i = 0; i < n; ++i) sx.add(ds[i]), sy.add(dv[i]);
  const double mx = sx.value() / n, my = sy.value() / n;
  CompensatedSum sxx, sxy;
  for (std::size_t i = 0; i < n; ++i) {
    sxx.add((ds[i] - mx) * (ds[i] - mx));
    sxy.add((ds[i] - mx) * (dv[i] - my));
  }
  if (!(sxx.value() > 0.0)) throw DegenerateVarianceError("vega multiplier: price increments have no variance");
  const double slope = sxy.value() / sxx.value();
  CompensatedSum meat;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (dv[i] - my) - slope * (ds[i] - mx);
    meat.add((ds[i] - mx) * (ds[i] - mx) * u * u);
  }
  return {slope, std::sqrt(meat.value()) / sxx.value()};
}

enum class OneStepMeasure { physical, egp };

/// One-step Monte Carlo estimate of Cov(Delta S, Delta sigma2)/Var(Delta S).
inline Estimate vega_multiplier_mc(const NgarchParams& p, const InnovationDistribution& d, double s, double sigma2_next,
                                   std::size_t draws, std::uint64_t seed, OneStepMeasure m) {
  auto eng = stream_engine(seed, 0);
  std::vector<double> ds(draws), dv(draws);
  const VarianceState st{sigma2_next, 0};
  for (std::size_t i = 0; i < draws; ++i) {
    const double eps = d.draw(eng);
    const auto r = m == OneStepMeasure::egp ? step_q_egp(p, d, st, eps) : step_p(p, d, st, eps);
    ds[i] = s * std::expm1(r.log_return);
    dv[i] = r.next.sigma2 - sigma2_next;
  }
  return regression_slope(ds, dv);
}

/// VM^P by one-step simulation under P.
inline Estimate vega_multiplier_p(const NgarchParams& p, const InnovationDistribution& d, double s, double sigma2_next,
                                  std::size_t draws = 1000000, std::uint64_t seed = 0) {
  return vega_multiplier_mc(p, d, s, sigma2_next, draws, seed, OneStepMeasure::physical);
}

/// Delta-SV = Delta_S + VM Delta_sigma2 on one ensemble.
inline HedgeResult delta_sv(const PathEnsemble& e, const Payoff& h) {
  detail::require_martingale_ensemble(e, "delta_sv");
  const double vm = vega_multiplier_for(e);
  const double disc = std::exp(-e.params.r * double(e.horizon));
  const auto ds = delta_s(e, h);
  HedgeResult out;
  out.delta_s = ds.ratio;
  out.vm = vm;
  if (vm == 0.0) {
    out.ratio = ds.ratio;
    out.std_error = ds.std_error;
    out.delta_sigma2 = vega_sigma2(e, h).ratio;
    return out;
  }
  const auto vg = vega_sigma2(e, h);
  out.delta_sigma2 = vg.ratio;
  out.ratio = ds.ratio + vm * vg.ratio;
  if (!e.enumerated) {
    std::vector<double> psi(e.n_paths);
    for (std::size_t i = 0; i < e.n_paths; ++i) {
      const double st = e.price(i, e.horizon);
      psi[i] = e.rn_weights[i] * disc * (h.slope(st) * st / e.s0 + vm * detail::vega_integrand(e, i, h));
    }
    out.std_error = mean_estimate(psi).std_error;
  }
  return out;
}

/// dsigma2_{t+1}/dS_t = 2 a1 sigma_t (eps_t - gamma) / S_t.
inline double total_derivative_vm(const NgarchParams& p, double s, double sigma, double eps) {
  if (!(s > 0.0)) throw ParamError("total_derivative_vm: S must be > 0");
  return 2.0 * p.alpha1 * sigma * (eps - p.gamma) / s;
}

/// Everything a single contract report needs, on one shared ensemble.
struct Contract {
  double strike = 100.0;
  std::size_t steps = 1;  // time to maturity in model steps
  bool call = true;
  Payoff payoff() const { return call ? Payoff::call(strike) : Payoff::put(strike); }
};

struct HedgeRequest {
  Contract contract;
  SimSpec spec;  // state (S_t, sigma2_{t+1}), kernel, paths, seed
  std::size_t j = 1;
  bool control_variate = false;
};

struct HedgeReport {
  HedgeResult lrm;
  HedgeResult delta;
  HedgeResult vega;
  HedgeResult delta_sv;
  std::size_t rejected = 0;
};

inline HedgeReport hedge_contract(const HedgeRequest& req) {
  if (req.j == 0 || req.contract.steps % req.j != 0) throw FrequencyError("hedge: j must divide the time to maturity");
  SimSpec s = req.spec;
  s.horizon = req.contract.steps;
  const auto e = simulate(s);
  const auto h = req.contract.payoff();
  HedgeReport out;
  out.rejected = e.rejected;
  LrmOptions opt;
  opt.j = req.j;
  opt.control_variate = req.control_variate;
  if (e.kernel == KernelKind::minimal_martingale) {
    out.lrm = lrm_p_hedge(e, h, opt);
    return out;
  }
  out.lrm = lrm_q_hedge(e, h, opt);
  out.delta = delta_s(e, h);
  out.vega = vega_sigma2(e, h);
  out.delta_sv = delta_sv(e, h);
  return out;
}

}  // namespace qhedge
