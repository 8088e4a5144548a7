#pragma once

// Pricing kernels: extended Girsanov principle, conditional Esscher
// transform and the minimal martingale stochastic discount factors.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "qhedge/distributions.hpp"
#include "qhedge/ensemble.hpp"
#include "qhedge/error.hpp"
#include "qhedge/garch.hpp"

namespace qhedge {

struct PricingKernel {
  KernelKind kind = KernelKind::extended_girsanov;
  std::size_t j = 1;  // rebalancing interval, minimal martingale only
};

// ---------------------------------------------------------------- EGP

/// log of the one-step density dQ/dP at P-innovation eps: log f(eps+lambda) - log f(eps).
inline double egp_log_rn_step(const NgarchParams& p, const InnovationDistribution& d, double eps) {
  if (p.lambda == 0.0) return 0.0;
  switch (d.kind()) {
    case InnovationKind::gaussian: return -p.lambda * eps - 0.5 * p.lambda * p.lambda;
    case InnovationKind::nig: {
      const auto& g = d.nig_shape();
      const double x0 = (eps - g.loc) / g.s, x1 = (eps + p.lambda - g.loc) / g.s;
      const double q0 = std::sqrt(1.0 + x0 * x0), q1 = std::sqrt(1.0 + x1 * x1);
      const double out = g.a * p.lambda / g.s + std::log(q0 / q1) + log_bessel_k1(g.k * q1) - log_bessel_k1(g.k * q0);
      if (!std::isfinite(out)) throw DomainError("egp_rn_derivative: non-finite Bessel ratio");
      return out;
    }
    case InnovationKind::two_point: break;
  }
  throw DomainError("egp_rn_derivative: a shifted two-point law is singular w.r.t. the original");
}

/// dQ^egp/dP along one path of P-innovations.
inline double egp_rn_derivative(const NgarchParams& p, const InnovationDistribution& d, std::span<const double> eps) {
  double s = 0.0;
  for (double e : eps) s += egp_log_rn_step(p, d, e);
  return std::exp(s);
}

// ---------------------------------------------------------------- Esscher

/// Martingale-equation residual kappa((theta+1) sigma) - kappa(theta sigma) - kappa(sigma) + lambda sigma.
inline double esscher_residual(const NgarchParams& p, const InnovationDistribution& d, double sigma, double theta) {
  const double phi = theta * sigma;
  return d.cgf_value(phi + sigma) - d.cgf_value(phi) - d.cgf_value(sigma) + p.lambda * sigma;
}

/// Root of the martingale equation by bisection on phi = theta sigma. The
/// residual is increasing in theta by convexity of the CGF.
inline double esscher_theta_root(const NgarchParams& p, const InnovationDistribution& d, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw NoRootError("esscher_theta: sigma must be > 0");
  auto g = [&](double phi) {
    return d.cgf_value(phi + sigma) - d.cgf_value(phi) - d.cgf_value(sigma) + p.lambda * sigma;
  };
  double lo, hi;
  if (d.kind() == InnovationKind::nig) {
    const auto& n = d.nig_shape();
    const double lim = n.k * (1.0 - 2e-10);
    lo = (-lim - n.a) / n.s;
    hi = (lim - n.a) / n.s - sigma;
    if (!(lo < hi)) throw NoRootError("esscher_theta: sigma outside the NIG Esscher domain");
  } else {
    lo = -1.0;
    hi = 1.0;
    int guard = 0;
    while (g(lo) > 0.0 && guard++ < 200) lo *= 2.0;
    guard = 0;
    while (g(hi) < 0.0 && guard++ < 200) hi *= 2.0;
  }
  double glo = g(lo), ghi = g(hi);
  if (!(glo <= 0.0 && ghi >= 0.0)) throw NoRootError("esscher_theta: martingale equation has no root");
  for (int it = 0; it < 300 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double gm = g(mid);
    if (gm < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double theta = 0.5 * (lo + hi) / sigma;
  if (!std::isfinite(theta)) throw NoRootError("esscher_theta: non-finite root");
  return theta;
}

/// Closed-form NIG Esscher parameter
///   theta = -1/2 - a/(sigma s) + D/(2 sigma s) sqrt(4k^2/(sigma^2 s^2 + D^2) - 1),
///   D = kappa(sigma) - (lambda + l) sigma.
inline double esscher_theta_closed_form(const NgarchParams& p, const InnovationDistribution& d, double sigma) {
  if (d.kind() != InnovationKind::nig) throw ParamError("esscher_theta_closed_form: NIG only");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw NoRootError("esscher_theta: sigma must be > 0");
  const auto& n = d.nig_shape();
  if (!d.in_cgf_domain(sigma)) throw NoRootError("esscher_theta: sigma outside the NIG CGF domain");
  const double c = sigma * n.s;
  const double D = d.cgf_value(sigma) - (p.lambda + n.loc) * sigma;
  const double radicand = 4.0 * n.k * n.k / (c * c + D * D) - 1.0;
  if (!(radicand >= 0.0)) throw NoRootError("esscher_theta: negative radicand in closed form");
  const double theta = -0.5 - n.a / c + D / (2.0 * c) * std::sqrt(radicand);
  if (!std::isfinite(theta)) throw NoRootError("esscher_theta: non-finite closed form");
  // squaring can admit a spurious value outside the CGF domain
  if (!d.in_cgf_domain(theta * sigma) || !d.in_cgf_domain(theta * sigma + sigma))
    throw NoRootError("esscher_theta: closed form leaves the CGF domain");
  return theta;
}

/// Esscher parameter theta_t for volatility sigma: closed form for NIG,
/// verified on the martingale equation with bisection as fallback;
/// -lambda/sigma for Gaussian; bisection otherwise.
inline double esscher_theta(const NgarchParams& p, const InnovationDistribution& d, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw NoRootError("esscher_theta: sigma must be > 0");
  switch (d.kind()) {
    case InnovationKind::gaussian: return -p.lambda / sigma;
    case InnovationKind::two_point: return esscher_theta_root(p, d, sigma);
    case InnovationKind::nig: break;
  }
  const double theta = esscher_theta_closed_form(p, d, sigma);
  const double res = esscher_residual(p, d, sigma, theta);
  const bool ok = std::abs(res) <= 1e-10 * std::max(1.0, std::abs(d.cgf_value(sigma)) + std::abs(p.lambda * sigma));
  return ok ? theta : esscher_theta_root(p, d, sigma);
}

/// CGF of the innovation under the Esscher-tilted one-step law, phi = theta sigma.
inline double esscher_tilted_cgf(const InnovationDistribution& d, double phi, double z) {
  return d.cgf_value(z + phi) - d.cgf_value(phi);
}

/// log of the one-step Esscher density exp(phi eps - kappa(phi)).
inline double esscher_log_rn_step(const NgarchParams& p, const InnovationDistribution& d, double sigma, double eps) {
  const double phi = esscher_theta(p, d, sigma) * sigma;
  return phi * eps - d.cgf_value(phi);
}

/// dQ^ess/dP along one path of volatilities sigma_t and P-innovations eps_t.
inline double esscher_rn_derivative(const NgarchParams& p, const InnovationDistribution& d, std::span<const double> sigma,
                                    std::span<const double> eps) {
  if (sigma.size() != eps.size()) throw ParamError("esscher_rn_derivative: sigma and eps lengths differ");
  double s = 0.0;
  for (std::size_t t = 0; t < sigma.size(); ++t) s += esscher_log_rn_step(p, d, sigma[t], eps[t]);
  return std::exp(s);
}

// ---------------------------------------------------------------- minimal martingale

/// Stochastic discount factors N_t at t = j, 2j, ..., T for every path.
struct SdfFactors {
  std::size_t j = 1;
  std::vector<std::size_t> block_ends;  // j, 2j, ..., T
  std::vector<double> factors;          // n x blocks, row-major
  std::vector<double> z;                // product over blocks per path
  std::size_t negative_paths = 0;       // paths with some N_t <= 0
  double negative_fraction = 0.0;

  std::size_t blocks() const { return block_ends.size(); }
  double factor(std::size_t p, std::size_t b) const { return factors[p * block_ends.size() + b]; }
  /// N_T N_{T-j} ... N_{(b+1) j} for path p (product of blocks >= b).
  double tail_product(std::size_t p, std::size_t b) const {
    double out = 1.0;
    for (std::size_t c = b; c < block_ends.size(); ++c) out *= factor(p, c);
    return out;
  }
};

namespace detail {

/// Fitted values of y on {1, v, .., v^degree} under weights w; intercept-only
/// when v carries no variation.
inline std::vector<double> weighted_poly_fit(std::span<const double> v, std::span<const double> y, std::span<const double> w,
                                             int degree) {
  const std::size_t n = v.size();
  double vmin = v[0], vmax = v[0], vmean = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    vmin = std::min(vmin, v[i]);
    vmax = std::max(vmax, v[i]);
    vmean += w[i] * v[i];
    wsum += w[i];
  }
  vmean /= wsum;
  std::vector<double> out(n);
  if (!(vmax - vmin > 1e-10 * std::abs(vmean)) || n < 10) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += w[i] * y[i];
    m /= wsum;
    std::fill(out.begin(), out.end(), m);
    return out;
  }
  const double scale = vmax - vmin;
  Eigen::MatrixXd X(n, degree + 1);
  Eigen::VectorXd Y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double sw = std::sqrt(w[i]);
    const double u = (v[i] - vmean) / scale;
    double pw = sw;
    for (int c = 0; c <= degree; ++c, pw *= u) X(i, c) = pw;
    Y(i) = sw * y[i];
  }
  const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(Y);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (v[i] - vmean) / scale;
    double acc = 0.0;
    for (int c = degree; c >= 0; --c) acc = acc * u + beta(c);
    out[i] = acc;
  }
  return out;
}

}  // namespace detail

/// N_t = 1 - m (R - m) / Var[R] with R = S~_t / S~_{t-j} - 1 and (m, Var) the
/// F_{t-j}-conditional P-moments of R. One-step blocks use the moments
/// implied by the CGF; multi-step blocks group paths by tree node when the
/// ensemble is enumerated and otherwise regress on the block-start variance
/// (quadratic for the mean; affine for the second moment, weighted by 1/v^2).
inline SdfFactors mmm_factors(const PathEnsemble& e, std::size_t j) {
  if (e.measure != SimMeasure::physical || !e.unit_weights())
    throw InvalidMeasureError("mmm_factors: needs an unweighted ensemble drawn under P");
  if (j == 0 || e.horizon % j != 0) throw FrequencyError("mmm_factors: j must divide the horizon");
  const std::size_t n = e.n_paths, T = e.horizon, nb = T / j;
  const auto& p = e.params;
  const auto& d = e.dist;
  SdfFactors out;
  out.j = j;
  for (std::size_t b = 1; b <= nb; ++b) out.block_ends.push_back(b * j);
  out.factors.assign(n * nb, 1.0);

  std::vector<double> ratio(n), comp(n), v(n), w(n), m(n), q(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = e.prob[i];
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t s = b * j, t = s + j;
    for (std::size_t i = 0; i < n; ++i) {
      const double base = e.price(i, s) * std::exp(-p.r * double(s));
      ratio[i] = e.price(i, t) * std::exp(-p.r * double(t)) / base - 1.0;
      v[i] = e.variance(i, s);
    }
    if (j == 1) {
      for (std::size_t i = 0; i < n; ++i) {
        const double sig = std::sqrt(v[i]);
        const double el = std::exp(p.lambda * sig);
        m[i] = el - 1.0;
        q[i] = std::exp(2.0 * p.lambda * sig - 2.0 * d.cgf_value(sig) + d.cgf_value(2.0 * sig)) - 2.0 * el + 1.0;
      }
    } else if (e.enumerated) {
      // Paths are laid out so that those sharing the first s innovations are contiguous.
      const std::size_t group = std::size_t(1) << (T - s);
      for (std::size_t g0 = 0; g0 < n; g0 += group) {
        double ws = 0.0, ms = 0.0, qs = 0.0;
        for (std::size_t i = g0; i < g0 + group; ++i) {
          ws += w[i];
          ms += w[i] * ratio[i];
          qs += w[i] * ratio[i] * ratio[i];
        }
        for (std::size_t i = g0; i < g0 + group; ++i) {
          m[i] = ms / ws;
          q[i] = qs / ws;
        }
      }
    } else {
      // Compensator of R: its conditional mean equals that of R and it
      // vanishes identically without a risk premium.
      for (std::size_t i = 0; i < n; ++i) {
        const double base = e.price(i, s) * std::exp(-p.r * double(s));
        double c = 0.0;
        for (std::size_t l = s; l < t; ++l) {
          const double prev = e.price(i, l) * std::exp(-p.r * double(l)) / base;
          c += prev * std::expm1(p.lambda * std::sqrt(e.variance(i, l)));
        }
        comp[i] = c;
      }
      m = detail::weighted_poly_fit(v, comp, w, 2);
      std::vector<double> r2(n), wq(n);
      for (std::size_t i = 0; i < n; ++i) {
        r2[i] = ratio[i] * ratio[i];
        wq[i] = w[i] / (v[i] * v[i]);
      }
      q = detail::weighted_poly_fit(v, r2, wq, 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double var = q[i] - m[i] * m[i];
      if (!(var > 1e-300) || !std::isfinite(var))
        throw DegenerateBlockError("mmm_factors: conditional variance estimate is not positive");
      out.factors[i * nb + b] = 1.0 - m[i] * (ratio[i] - m[i]) / var;
    }
  }
  out.z.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    bool neg = false;
    for (std::size_t b = 0; b < nb; ++b) {
      const double f = out.factors[i * nb + b];
      out.z[i] *= f;
      neg = neg || f <= 0.0;
    }
    if (neg) ++out.negative_paths;
  }
  out.negative_fraction = double(out.negative_paths) / double(n);
  return out;
}

}  // namespace qhedge
