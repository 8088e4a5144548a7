#pragma once

// Monte Carlo path ensembles under P or the extended Girsanov measure,
// Esscher reweighting, empirical martingale correction and exhaustive
// enumeration of two-point trees.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "qhedge/distributions.hpp"
#include "qhedge/ensemble.hpp"
#include "qhedge/error.hpp"
#include "qhedge/garch.hpp"
#include "qhedge/measures.hpp"
#include "qhedge/numeric.hpp"
#include "qhedge/parallel.hpp"
#include "qhedge/random.hpp"

namespace qhedge {

struct SimSpec {
  NgarchParams params;
  InnovationDistribution dist = InnovationDistribution::gaussian();
  PricingKernel kernel;
  double s0 = 100.0;
  double sigma2_0 = 1e-4;  // variance of the last observed return
  double eps0 = 0.0;       // last observed P-innovation
  std::optional<double> sigma2_1;  // next-step variance, overrides (sigma2_0, eps0) when set
  std::size_t n_paths = 100000;
  std::size_t horizon = 1;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool ems = false;  // apply the empirical martingale correction when the measure allows it

  double first_variance() const {
    if (sigma2_1) return *sigma2_1;
    return next_variance(params, sigma2_0, eps0 - params.gamma);
  }

  void validate() const {
    params.validate();
    if (n_paths < 2) throw ParamError("SimSpec: n_paths must be >= 2");
    if (horizon < 1) throw ParamError("SimSpec: horizon must be >= 1");
    if (!(s0 > 0.0)) throw ParamError("SimSpec: s0 must be > 0");
    if (!(sigma2_0 > 0.0) && !sigma2_1) throw ParamError("SimSpec: sigma2_0 must be > 0");
    if (!(first_variance() > 0.0)) throw ParamError("SimSpec: initial variance must be > 0");
  }
};

/// Simulation measure implied by a kernel. Esscher expectations are taken
/// by reweighting P-paths, except for Gaussian innovations where the
/// Esscher and Girsanov dynamics coincide.
inline SimMeasure simulation_measure(KernelKind k, const InnovationDistribution& d) {
  switch (k) {
    case KernelKind::extended_girsanov: return SimMeasure::egp;
    case KernelKind::esscher: return d.kind() == InnovationKind::gaussian ? SimMeasure::egp : SimMeasure::physical;
    case KernelKind::minimal_martingale: return SimMeasure::physical;
  }
  return SimMeasure::physical;
}

/// Rescales prices slice by slice so that the discounted cross-sectional
/// mean equals S0 at every date, carrying the rescaled price forward along
/// each path.
inline void apply_ems_inplace(PathEnsemble& e) {
  if (e.measure != SimMeasure::egp || !e.unit_weights())
    throw InvalidMeasureError("apply_ems: needs an unweighted ensemble under a martingale measure");
  const std::size_t n = e.n_paths, T = e.horizon;
  std::vector<double> prev_orig(n), z(n);
  for (std::size_t i = 0; i < n; ++i) prev_orig[i] = e.price(i, 0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double disc = std::exp(-e.params.r * double(t));
    long double acc = 0.0L, comp = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      const double orig = e.price(i, t);
      z[i] = e.price(i, t - 1) * (orig / prev_orig[i]);
      prev_orig[i] = orig;
      // Kahan in extended precision
      const long double y = (long double)e.prob[i] * z[i] - comp;
      const long double s = acc + y;
      comp = (s - acc) - y;
      acc = s;
    }
    const double z0 = double((long double)disc * acc);
    const double scale = e.s0 / z0;
    for (std::size_t i = 0; i < n; ++i) e.price(i, t) = z[i] * scale;
  }
  e.ems_applied = true;
}

inline PathEnsemble apply_ems(PathEnsemble e) {
  apply_ems_inplace(e);
  return e;
}

inline PathEnsemble simulate(const SimSpec& spec) {
  spec.validate();
  const auto& p = spec.params;
  const auto& d = spec.dist;
  PathEnsemble e;
  e.n_paths = spec.n_paths;
  e.horizon = spec.horizon;
  e.kernel = spec.kernel.kind;
  e.measure = simulation_measure(spec.kernel.kind, d);
  e.params = p;
  e.dist = d;
  e.s0 = spec.s0;
  const std::size_t n = spec.n_paths, T = spec.horizon;
  e.prices.assign(n * (T + 1), 0.0);
  e.variances.assign(n * (T + 1), 0.0);
  e.innovations.assign(n * T, 0.0);
  e.prob.assign(n, 1.0 / double(n));
  e.rn_weights.assign(n, 1.0);
  const bool esscher_weights = spec.kernel.kind == KernelKind::esscher && e.measure == SimMeasure::physical;
  const bool egp = e.measure == SimMeasure::egp;
  const double cap = p.persistence() < 1.0 ? 1e6 * unconditional_variance(p) : INFINITY;
  const double v1 = spec.first_variance();
  const double log_s0 = std::log(spec.s0);
  std::vector<std::uint32_t> retries(n, 0);

  auto run_path = [&](std::size_t i) {
    double* S = &e.prices[i * (T + 1)];
    double* V = &e.variances[i * (T + 1)];
    double* E = &e.innovations[i * T];
    for (std::uint32_t attempt = 0;; ++attempt) {
      auto eng = stream_engine(spec.seed, std::uint64_t(i) | (std::uint64_t(attempt) << 48));
      try {
        double logs = log_s0, v = v1, logw = 0.0;
        S[0] = spec.s0;
        for (std::size_t l = 0; l < T; ++l) {
          V[l] = v;
          const double eps = d.draw(eng);
          E[l] = eps;
          const double sig = std::sqrt(v);
          double y, news;
          if (egp) {
            y = p.r - d.cgf_value(sig) + sig * eps;
            news = eps - p.lambda - p.gamma;
          } else {
            y = p.r + p.lambda * sig - d.cgf_value(sig) + sig * eps;
            news = eps - p.gamma;
            if (esscher_weights) logw += esscher_log_rn_step(p, d, sig, eps);
          }
          logs += y;
          S[l + 1] = std::exp(logs);
          v = next_variance(p, v, news);
          if (!std::isfinite(v) || v > cap || !std::isfinite(S[l + 1]) || !(S[l + 1] > 0.0))
            throw NonFiniteError("simulate: path blew up");
        }
        V[T] = v;
        if (esscher_weights) {
          e.rn_weights[i] = std::exp(logw);
          if (!std::isfinite(e.rn_weights[i])) throw NonFiniteError("simulate: non-finite Esscher weight");
        }
        retries[i] = attempt;
        return;
      } catch (const NonFiniteError&) {
      } catch (const DomainError&) {
      } catch (const NoRootError&) {
      }
      if (attempt >= 64) throw NonFiniteError("simulate: path keeps failing after 64 redraws");
    }
  };
  parallel_for(n, spec.threads, run_path);
  std::size_t rejected = 0;
  for (auto r : retries) rejected += r;
  e.rejected = rejected;
  if (double(rejected) > 1e-3 * double(n))
    throw NonFiniteError("simulate: " + std::to_string(rejected) + " rejected paths exceed 0.1% of the ensemble");
  if (spec.ems && e.measure == SimMeasure::egp) apply_ems_inplace(e);
  return e;
}

/// Exhaustive tree for a two-point innovation law: 2^T paths, path index
/// bits read from the most significant (step 1) down, so paths sharing a
/// prefix are contiguous.
inline PathEnsemble enumerate_two_point(const NgarchParams& p, const InnovationDistribution& d, double s0, double sigma2_1,
                                        std::size_t T, KernelKind kernel) {
  if (d.kind() != InnovationKind::two_point) throw ParamError("enumerate_two_point: needs a two-point law");
  if (T < 1 || T > 20) throw ParamError("enumerate_two_point: horizon must be in [1, 20]");
  p.validate();
  const auto& tp = d.two_point_law();
  PathEnsemble e;
  e.n_paths = std::size_t(1) << T;
  e.horizon = T;
  e.kernel = kernel;
  e.measure = kernel == KernelKind::extended_girsanov ? SimMeasure::egp : SimMeasure::physical;
  e.params = p;
  e.dist = d;
  e.s0 = s0;
  e.enumerated = true;
  const std::size_t n = e.n_paths;
  e.prices.assign(n * (T + 1), 0.0);
  e.variances.assign(n * (T + 1), 0.0);
  e.innovations.assign(n * T, 0.0);
  e.prob.assign(n, 1.0);
  e.rn_weights.assign(n, 1.0);
  const bool egp = e.measure == SimMeasure::egp;
  for (std::size_t i = 0; i < n; ++i) {
    double logs = std::log(s0), v = sigma2_1, logw = 0.0, pr = 1.0;
    e.price(i, 0) = s0;
    for (std::size_t l = 0; l < T; ++l) {
      const bool up = (i >> (T - 1 - l)) & 1u;
      const double eps = up ? tp.up : tp.down;
      pr *= up ? tp.p : 1.0 - tp.p;
      e.variances[i * (T + 1) + l] = v;
      e.innovations[i * T + l] = eps;
      const double sig = std::sqrt(v);
      double y, news;
      if (egp) {
        y = p.r - d.cgf_value(sig) + sig * eps;
        news = eps - p.lambda - p.gamma;
      } else {
        y = p.r + p.lambda * sig - d.cgf_value(sig) + sig * eps;
        news = eps - p.gamma;
        if (kernel == KernelKind::esscher) logw += esscher_log_rn_step(p, d, sig, eps);
      }
      logs += y;
      e.price(i, l + 1) = std::exp(logs);
      v = next_variance(p, v, news);
    }
    e.variances[i * (T + 1) + T] = v;
    e.prob[i] = pr;
    e.rn_weights[i] = std::exp(logw);
  }
  return e;
}

/// Weighted estimate of discount * E[f(path)] under the ensemble's pricing
/// kernel. f is called as f(ensemble, path index).
template <class F>
Estimate conditional_expectation(const PathEnsemble& e, F&& f, double discount) {
  const std::size_t n = e.n_paths;
  if (e.enumerated) {
    CompensatedSum s;
    for (std::size_t i = 0; i < n; ++i) s.add(e.weight(i) * f(e, i));
    return {discount * s.value(), 0.0};
  }
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = e.rn_weights[i] * f(e, i);
  const Estimate m = mean_estimate(v);
  return {discount * m.value, std::abs(discount) * m.std_error};
}

/// Binary dump: u64 n_paths, u64 T, u32 measure, then row-major doubles for
/// prices n x (T+1), variances n x (T+1), innovations n x T, rn_weights n.
inline void write_ensemble_binary(const std::string& path, const PathEnsemble& e) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path + " for writing");
  const std::uint64_t n = e.n_paths, T = e.horizon;
  const std::uint32_t m = static_cast<std::uint32_t>(e.measure);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&T), sizeof T);
  out.write(reinterpret_cast<const char*>(&m), sizeof m);
  auto put = [&](const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
  };
  put(e.prices);
  put(e.variances);
  put(e.innovations);
  put(e.rn_weights);
  if (!out) throw InputError("failed writing " + path);
}

}  // namespace qhedge
