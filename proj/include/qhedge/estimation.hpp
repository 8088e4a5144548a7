#pragma once

// Maximum likelihood for NGARCH(1,1) with Gaussian or NIG innovations.
// The filter starts at the unconditional variance of the current iterate.
// NIG shape is estimated in the tail form (k, a) of nig_from_tail.

#include <ceres/autodiff_first_order_function.h>
#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>
#include <ceres/jet.h>

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qhedge/bessel.hpp"
#include "qhedge/distributions.hpp"
#include "qhedge/error.hpp"
#include "qhedge/garch.hpp"
#include "qhedge/numeric.hpp"
#include "qhedge/parallel.hpp"
#include "qhedge/random.hpp"

namespace qhedge {

namespace mle {

struct LogK1 {
  double operator()(double x) const { return log_bessel_k1(x); }
  template <class T, int N>
  ceres::Jet<T, N> operator()(const ceres::Jet<T, N>& x) const {
    const auto [f, df] = log_bessel_k1_with_derivative(x.a);
    return ceres::Jet<T, N>(f, df * x.v);
  }
};

inline double value_of(double x) { return x; }
template <class T, int N>
double value_of(const ceres::Jet<T, N>& x) {
  return x.a;
}

/// Model parameters in natural units; (tk, ta) are the NIG tail parameters.
template <class T>
struct Natural {
  T alpha0, alpha1, beta1, gamma, lambda, tk, ta;
};

/// Sum of per-observation log-likelihoods; NaN when the iterate leaves the
/// admissible region. per_obs, if given, receives each term.
template <class T>
T log_likelihood(const Natural<T>& q, bool nig, std::span<const double> y, double r, std::optional<double> sigma2_init,
                 std::vector<T>* per_obs = nullptr) {
  using std::log;
  using std::sqrt;
  const T nan = T(std::numeric_limits<double>::quiet_NaN());
  const T pers = q.alpha1 * (1.0 + q.gamma * q.gamma) + q.beta1;
  T v;
  if (sigma2_init) {
    v = T(*sigma2_init);
  } else {
    if (!(value_of(pers) < 1.0)) return nan;
    v = q.alpha0 / (1.0 - pers);
  }
  T k(0.0), a(0.0), s(1.0), loc(0.0), G(1.0);
  if (nig) {
    if (!(value_of(q.tk) > 0.0) || !(std::abs(value_of(q.ta)) < value_of(q.tk))) return nan;
    G = sqrt(q.tk * q.tk - q.ta * q.ta);
    s = G * G * G / (q.tk * q.tk);
    k = q.tk * s;
    a = q.ta * s;
    loc = -s * q.ta / G;
  }
  const double log_sqrt_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const LogK1 lk1;
  T total(0.0);
  if (per_obs) per_obs->clear();
  for (double yt : y) {
    if (!(value_of(v) > 0.0) || !std::isfinite(value_of(v))) return nan;
    const T sig = sqrt(v);
    T kap;
    if (nig) {
      const T u = a + sig * s;
      if (!(std::abs(value_of(u)) < value_of(k) * (1.0 - 1e-10))) return nan;
      kap = nig_kernel::cgf(sig, k, a, s, loc);
    } else {
      kap = 0.5 * v;
    }
    const T eps = (yt - r - q.lambda * sig + kap) / sig;
    const T ld = nig ? nig_kernel::log_density(eps, k, a, s, loc, lk1) : T(-log_sqrt_2pi) - 0.5 * eps * eps;
    const T term = ld - 0.5 * log(v);
    total += term;
    if (per_obs) per_obs->push_back(term);
    const T news = eps - q.gamma;
    v = q.alpha0 + q.alpha1 * v * news * news + q.beta1 * v;
  }
  return total;
}

template <class T>
T logistic(const T& x) {
  using std::exp;
  return 1.0 / (1.0 + exp(-x));
}

/// Unconstrained coordinates u -> natural parameters:
/// alpha0 = e^u0, persistence p = logistic(u1), ARCH share q = logistic(u2),
/// alpha1 = p q / (1 + gamma^2), beta1 = p (1 - q), gamma = u3, lambda = u4,
/// k = e^u5, a = k tanh(u6).
template <class T>
Natural<T> from_unconstrained(const T* u, bool nig) {
  using std::exp;
  using std::tanh;
  Natural<T> q;
  q.alpha0 = exp(u[0]);
  const T p = logistic(u[1]), share = logistic(u[2]);
  q.gamma = u[3];
  q.lambda = u[4];
  q.alpha1 = p * share / (1.0 + q.gamma * q.gamma);
  q.beta1 = p * (1.0 - share);
  if (nig) {
    q.tk = exp(u[5]);
    q.ta = q.tk * tanh(u[6]);
  } else {
    q.tk = T(0.0);
    q.ta = T(0.0);
  }
  return q;
}

inline std::vector<double> to_unconstrained(const NgarchParams& p, bool nig, double tk, double ta) {
  const double pers = p.persistence();
  const double share = p.alpha1 * (1.0 + p.gamma * p.gamma) / pers;
  auto logit = [](double x) { return std::log(x / (1.0 - x)); };
  std::vector<double> u{std::log(p.alpha0), logit(pers), logit(share), p.gamma, p.lambda};
  if (nig) {
    u.push_back(std::log(tk));
    u.push_back(std::atanh(ta / tk));
  }
  return u;
}

template <int N>
struct Cost {
  std::span<const double> y;
  double r;
  template <class T>
  bool operator()(const T* u, T* cost) const {
    const auto q = from_unconstrained(u, N == 7);
    const T ll = log_likelihood(q, N == 7, y, r, std::nullopt);
    if (!std::isfinite(value_of(ll))) return false;
    cost[0] = -ll / double(y.size());
    return true;
  }
};

struct Run {
  std::vector<double> u;
  double cost = INFINITY;
  int iterations = 0;
  double gradient_norm = INFINITY;
};

template <int N>
Run minimize(std::span<const double> y, double r, std::vector<double> u, int max_iter, double grad_tol) {
  ceres::GradientProblem problem(new ceres::AutoDiffFirstOrderFunction<Cost<N>, N>(new Cost<N>{y, r}));
  ceres::GradientProblemSolver::Options opt;
  opt.line_search_direction_type = ceres::LBFGS;
  opt.max_num_iterations = max_iter;
  opt.gradient_tolerance = grad_tol;
  opt.function_tolerance = 1e-15;
  opt.parameter_tolerance = 1e-14;
  opt.logging_type = ceres::SILENT;
  ceres::GradientProblemSolver::Summary sum;
  Run out;
  double c0 = 0.0;
  if (!problem.Evaluate(u.data(), &c0, nullptr)) return out;
  ceres::Solve(opt, problem, u.data(), &sum);
  out.u = u;
  out.cost = sum.final_cost;
  out.iterations = int(sum.iterations.size());
  std::vector<double> g(N);
  double c = 0.0;
  if (problem.Evaluate(u.data(), &c, g.data())) {
    out.cost = c;
    out.gradient_norm = 0.0;
    for (double x : g) out.gradient_norm = std::max(out.gradient_norm, std::abs(x));
  }
  return out;
}

}  // namespace mle

struct FitConfig {
  double r = 2.8e-5;
  int n_starts = 5;
  int probe_iterations = 30;
  int max_iterations = 1000;
  double gradient_tolerance = 1e-5;  // max-norm of the per-observation gradient in unconstrained coordinates
  unsigned threads = 0;
  std::optional<NgarchParams> start;  // replaces the default starts when set
  std::optional<std::pair<double, double>> nig_start;
};

struct MleResult {
  NgarchParams params;
  InnovationKind kind = InnovationKind::gaussian;
  double nig_k = 0.0, nig_a = 0.0;  // tail form, see InnovationDistribution::nig_from_tail
  double log_likelihood = 0.0;
  std::size_t n_obs = 0;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool boundary = false;
  std::vector<std::string> names;  // alpha0 alpha1 beta1 gamma lambda [k a]
  std::vector<double> values;
  std::vector<double> std_errors;  // outer-product-of-gradients

  InnovationDistribution dist() const {
    return kind == InnovationKind::nig ? InnovationDistribution::nig_from_tail(nig_k, nig_a) : InnovationDistribution::gaussian();
  }
};

/// Log-likelihood sum_t [log f(eps_t) - log sigma_t]; sigma2_init defaults to the
/// unconditional variance.
inline double log_likelihood(const NgarchParams& p, const InnovationDistribution& d, std::span<const double> returns,
                             std::optional<double> sigma2_init = std::nullopt) {
  if (d.kind() == InnovationKind::two_point) throw DomainError("log_likelihood: two-point law has no density");
  if (!sigma2_init) sigma2_init = unconditional_variance(p);
  const bool nig = d.kind() == InnovationKind::nig;
  mle::Natural<double> q{p.alpha0, p.alpha1, p.beta1, p.gamma, p.lambda, 0.0, 0.0};
  if (nig) std::tie(q.tk, q.ta) = d.nig_tail();
  const double ll = mle::log_likelihood(q, nig, returns, p.r, sigma2_init);
  if (!std::isfinite(ll)) throw NonFiniteError("log_likelihood: non-finite value");
  return ll;
}

namespace mle {

template <int N>
std::vector<double> opg_standard_errors(const std::vector<double>& theta, std::span<const double> y, double r) {
  using J = ceres::Jet<double, N>;
  Natural<J> q;
  J* slots[7] = {&q.alpha0, &q.alpha1, &q.beta1, &q.gamma, &q.lambda, &q.tk, &q.ta};
  for (int i = 0; i < 7; ++i) *slots[i] = J(0.0);
  for (int i = 0; i < N; ++i) *slots[i] = J(theta[i], i);
  std::vector<J> terms;
  log_likelihood(q, N == 7, y, r, std::nullopt, &terms);
  Eigen::Matrix<double, N, N> opg = Eigen::Matrix<double, N, N>::Zero();
  for (const auto& t : terms) opg += t.v * t.v.transpose();
  std::vector<double> se(N, std::numeric_limits<double>::quiet_NaN());
  if (terms.size() != y.size()) return se;
  Eigen::FullPivLU<Eigen::Matrix<double, N, N>> lu(opg);
  if (!lu.isInvertible()) return se;
  const Eigen::Matrix<double, N, N> cov = lu.inverse();
  for (int i = 0; i < N; ++i) se[i] = cov(i, i) > 0.0 ? std::sqrt(cov(i, i)) : std::numeric_limits<double>::quiet_NaN();
  return se;
}

template <int N>
MleResult fit_impl(std::span<const double> y, const FitConfig& cfg) {
  constexpr bool nig = N == 7;
  CompensatedSum s1, s2;
  for (double x : y) s1.add(x), s2.add(x * x);
  const double n = double(y.size());
  const double var = s2.value() / n - (s1.value() / n) * (s1.value() / n);
  if (!(var > 1e-20)) throw NonConvergenceError("fit: returns have no variation");

  std::vector<std::vector<double>> starts;
  if (cfg.start) {
    const auto [tk, ta] = cfg.nig_start.value_or(std::pair{1.5, 0.0});
    starts.push_back(to_unconstrained(*cfg.start, nig, tk, ta));
  } else {
    // persistence, ARCH share of persistence, gamma, lambda, k, a
    const std::array<std::array<double, 6>, 5> grid{{{0.98, 0.05, 0.5, 0.0, 1.5, 0.0},
                                                    {0.95, 0.08, 1.0, 0.05, 1.2, -0.2},
                                                    {0.99, 0.03, 0.0, 0.0, 2.0, 0.0},
                                                    {0.90, 0.10, 0.8, 0.02, 1.0, -0.1},
                                                    {0.97, 0.05, 1.5, 0.03, 3.0, -0.5}}};
    const int m = std::clamp(cfg.n_starts, 1, int(grid.size()));
    for (int i = 0; i < m; ++i) {
      const auto& g = grid[i];
      NgarchParams p;
      p.gamma = g[2];
      p.alpha1 = g[0] * g[1] / (1.0 + g[2] * g[2]);
      p.beta1 = g[0] * (1.0 - g[1]);
      p.alpha0 = var * (1.0 - g[0]);
      p.lambda = g[3];
      starts.push_back(to_unconstrained(p, nig, g[4], g[5]));
    }
  }
  std::vector<Run> probes(starts.size());
  const int probe_iter = starts.size() > 1 ? cfg.probe_iterations : cfg.max_iterations;
  parallel_for(starts.size(), cfg.threads,
               [&](std::size_t i) { probes[i] = minimize<N>(y, cfg.r, starts[i], probe_iter, 1e-12); });
  std::size_t best = 0;
  for (std::size_t i = 1; i < probes.size(); ++i)
    if (probes[i].cost < probes[best].cost) best = i;
  if (!std::isfinite(probes[best].cost)) throw NonConvergenceError("fit: no start gives a finite likelihood");
  Run run = starts.size() > 1 ? minimize<N>(y, cfg.r, probes[best].u, cfg.max_iterations, 1e-12) : probes[best];
  if (!std::isfinite(run.cost)) run = probes[best];
  run.iterations += starts.size() > 1 ? probes[best].iterations : 0;

  const auto q = from_unconstrained(run.u.data(), nig);
  MleResult res;
  res.kind = nig ? InnovationKind::nig : InnovationKind::gaussian;
  res.params.alpha0 = q.alpha0;
  res.params.alpha1 = q.alpha1;
  res.params.beta1 = q.beta1;
  res.params.gamma = q.gamma;
  res.params.lambda = q.lambda;
  res.params.r = cfg.r;
  res.nig_k = q.tk;
  res.nig_a = q.ta;
  res.n_obs = y.size();
  res.log_likelihood = -run.cost * n;
  res.iterations = run.iterations;
  res.gradient_norm = run.gradient_norm;
  res.boundary = res.params.persistence() > 1.0 - 1e-8 || res.params.alpha0 < 1e-14 ||
                 (nig && std::abs(res.nig_a) > res.nig_k * (1.0 - 1e-8));
  res.names = {"alpha0", "alpha1", "beta1", "gamma", "lambda"};
  res.values = {q.alpha0, q.alpha1, q.beta1, q.gamma, q.lambda};
  if (nig) {
    res.names.insert(res.names.end(), {"k", "a"});
    res.values.insert(res.values.end(), {q.tk, q.ta});
  }
  if (!(run.gradient_norm <= cfg.gradient_tolerance))
    throw NonConvergenceError("fit: gradient norm " + std::to_string(run.gradient_norm) + " above tolerance after " +
                              std::to_string(run.iterations) + " iterations");
  res.std_errors = opg_standard_errors<N>(res.values, y, cfg.r);
  return res;
}

}  // namespace mle

/// Fits NGARCH(1,1) by maximum likelihood from up to five starts: each is
/// run for a few iterations, the best one is iterated to convergence.
inline MleResult fit(std::span<const double> returns, InnovationKind kind, const FitConfig& cfg = {}) {
  if (returns.size() < 500) throw InsufficientDataError("fit: need at least 500 returns");
  for (double x : returns)
    if (!std::isfinite(x)) throw NonFiniteError("fit: non-finite return");
  switch (kind) {
    case InnovationKind::gaussian: return mle::fit_impl<5>(returns, cfg);
    case InnovationKind::nig: return mle::fit_impl<7>(returns, cfg);
    default: throw ParamError("fit: only Gaussian and NIG innovations can be estimated");
  }
}

/// Log-returns ln(S_t / S_{t-1}) from a price series.
inline std::vector<double> log_returns(std::span<const double> prices) {
  std::vector<double> y;
  for (std::size_t i = 1; i < prices.size(); ++i) {
    if (!(prices[i] > 0.0) || !(prices[i - 1] > 0.0)) throw InputError("log_returns: prices must be positive");
    y.push_back(std::log(prices[i] / prices[i - 1]));
  }
  return y;
}

/// Simulates n daily log-returns under P, starting at the unconditional variance.
inline std::vector<double> simulate_returns(const NgarchParams& p, const InnovationDistribution& d, std::size_t n,
                                            std::uint64_t seed) {
  auto eng = stream_engine(seed, 0);
  std::vector<double> y(n);
  VarianceState st{unconditional_variance(p), 0};
  for (std::size_t t = 0; t < n; ++t) {
    const auto r = step_p(p, d, st, d.draw(eng));
    y[t] = r.log_return;
    st = r.next;
  }
  return y;
}

}  // namespace qhedge
