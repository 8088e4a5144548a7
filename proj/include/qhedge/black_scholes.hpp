#pragma once

#include <algorithm>
#include <cmath>

#include "qhedge/error.hpp"
#include "qhedge/numeric.hpp"

namespace qhedge {

// T in the same time unit as r and vol (annualized: years).

inline double bs_d1(double S, double K, double T, double r, double vol) {
  return (std::log(S / K) + (r + 0.5 * vol * vol) * T) / (vol * std::sqrt(T));
}

inline double bs_price(double S, double K, double T, double r, double vol, bool call = true) {
  if (T <= 0.0 || vol <= 0.0) {
    const double fwd = S - K * std::exp(-r * std::max(T, 0.0));
    return call ? std::max(fwd, 0.0) : std::max(-fwd, 0.0);
  }
  const double d1 = bs_d1(S, K, T, r, vol), d2 = d1 - vol * std::sqrt(T);
  const double df = std::exp(-r * T);
  return call ? S * norm_cdf(d1) - K * df * norm_cdf(d2) : K * df * norm_cdf(-d2) - S * norm_cdf(-d1);
}

inline double bs_delta(double S, double K, double T, double r, double vol, bool call = true) {
  if (T <= 0.0 || vol <= 0.0) {
    const bool itm = S > K * std::exp(-r * std::max(T, 0.0));
    return call ? (itm ? 1.0 : 0.0) : (itm ? 0.0 : -1.0);
  }
  const double nd = norm_cdf(bs_d1(S, K, T, r, vol));
  return call ? nd : nd - 1.0;
}

inline double bs_vega(double S, double K, double T, double r, double vol) {
  if (T <= 0.0 || vol <= 0.0) return 0.0;
  return S * norm_pdf(bs_d1(S, K, T, r, vol)) * std::sqrt(T);
}

/// Black-Scholes implied volatility by safeguarded Newton with a bisection
/// fallback. Throws InversionError outside the no-arbitrage band.
inline double implied_vol(double price, double S, double K, double T, double r, bool call = true) {
  if (!(S > 0.0) || !(K > 0.0) || !(T > 0.0) || !std::isfinite(price)) throw InversionError("implied_vol: bad inputs");
  const double df = std::exp(-r * T);
  const double lower = call ? std::max(S - K * df, 0.0) : std::max(K * df - S, 0.0);
  const double upper = call ? S : K * df;
  const double tol = 1e-12 * std::max(1.0, S);
  if (!(price > lower + tol) || !(price < upper - tol))
    throw InversionError("implied_vol: price outside the no-arbitrage band");
  double lo = 1e-8, hi = 1.0;
  while (bs_price(S, K, T, r, hi, call) < price) {
    hi *= 2.0;
    if (hi > 1e3) throw InversionError("implied_vol: no volatility reproduces the price");
  }
  if (bs_price(S, K, T, r, lo, call) > price) throw InversionError("implied_vol: price below the low-volatility limit");
  double v = std::clamp(std::sqrt(2.0 * std::abs(std::log(S / K) + r * T) / T), 0.05, 0.5 * hi);
  for (int it = 0; it < 200; ++it) {
    const double f = bs_price(S, K, T, r, v, call) - price;
    if (std::abs(f) <= 1e-13 * std::max(1.0, price)) return v;
    if (f > 0.0)
      hi = v;
    else
      lo = v;
    const double vega = bs_vega(S, K, T, r, v);
    double next = vega > 0.0 ? v - f / vega : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo < 1e-15) return next;
    v = next;
  }
  return v;
}

}  // namespace qhedge
