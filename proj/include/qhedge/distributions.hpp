#pragma once

// Standardized innovation laws D(0,1): Gaussian, Normal Inverse Gaussian and
// a two-point law used for exhaustively enumerable toy markets.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "qhedge/bessel.hpp"
#include "qhedge/error.hpp"

namespace qhedge {

enum class InnovationKind { gaussian, nig, two_point };

/// NIG(k, a, s, l) in density form:
///   f(x) = k/(pi s) exp(sqrt(k^2-a^2) + a (x-l)/s) K1(k q) / q,  q = sqrt(1 + ((x-l)/s)^2)
/// k: tail heaviness (>0), a: asymmetry (|a|<k), s: scale, l: location.
struct NigShape {
  double k = 1.0;
  double a = 0.0;
  double s = 1.0;
  double loc = 0.0;
};

/// Two-point law taking `up` with probability p and `down` otherwise.
struct TwoPointLaw {
  double p = 0.5;
  double up = 1.0;
  double down = -1.0;
};

/// CGF value and its first two derivatives at a point.
struct CgfValue {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Scale and location making NIG(k, a, s, l) mean-zero and unit-variance:
///   l + a s / sqrt(k^2-a^2) = 0,   s^2 k^2 / (k^2-a^2)^{3/2} = 1.
inline std::pair<double, double> standardize_nig(double k, double a) {
  if (!(k > 0.0) || !(std::abs(a) < k)) throw ParamError("standardize_nig: need k > 0 and |a| < k");
  const double g = std::sqrt((k - a) * (k + a));
  const double s = std::pow(g, 1.5) / k;
  const double loc = -a * s / g;
  return {s, loc};
}

// Scalar-generic kernels, shared by the double API below and by the
// automatic-differentiation likelihood.
namespace nig_kernel {

template <class T>
T cgf(const T& z, const T& k, const T& a, const T& s, const T& loc) {
  using std::sqrt;
  // z loc + G - g written without cancellation near z = 0
  const T u = a + z * s;
  const T G = sqrt(k * k - a * a), g = sqrt(k * k - u * u);
  const T zs = z * s;
  return z * (loc + a * s / G) + zs * zs * (G + a * (2.0 * a + zs) / (G + g)) / (G * (G + g));
}

template <class T, class LogK1>
T log_density(const T& x, const T& k, const T& a, const T& s, const T& loc, LogK1&& log_k1) {
  using std::log;
  using std::sqrt;
  const T xs = (x - loc) / s;
  const T q = sqrt(1.0 + xs * xs);
  return log(k) - log(std::numbers::pi * s) + sqrt(k * k - a * a) + a * xs + log_k1(k * q) - log(q);
}

}  // namespace nig_kernel

class InnovationDistribution {
 public:
  static InnovationDistribution gaussian() { return InnovationDistribution(InnovationKind::gaussian); }

  /// Standardized NIG with density-form shape (k, a); s and l follow from
  /// standardize_nig.
  static InnovationDistribution nig(double k, double a) {
    auto [s, loc] = standardize_nig(k, a);
    InnovationDistribution d(InnovationKind::nig);
    d.nig_ = {k, a, s, loc};
    return d;
  }

  /// Standardized NIG specified by its tail-decay parameters (alpha, beta):
  /// the density decays like exp(-alpha|x| + beta x). Maps to the density
  /// form via k = alpha*delta, a = beta*delta with delta the standardizing
  /// scale (k^2-a^2 in alpha units)^{3/2}/alpha^2.
  static InnovationDistribution nig_from_tail(double alpha, double beta) {
    if (!(alpha > 0.0) || !(std::abs(beta) < alpha)) throw ParamError("nig_from_tail: need alpha > 0 and |beta| < alpha");
    const double g = std::sqrt((alpha - beta) * (alpha + beta));
    const double delta = g * g * g / (alpha * alpha);
    return nig(alpha * delta, beta * delta);
  }

  /// Standardized two-point law with P(up) = p.
  static InnovationDistribution two_point(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ParamError("two_point: need 0 < p < 1");
    InnovationDistribution d(InnovationKind::two_point);
    d.two_point_ = {p, std::sqrt((1.0 - p) / p), -std::sqrt(p / (1.0 - p))};
    return d;
  }

  InnovationKind kind() const { return kind_; }
  const NigShape& nig_shape() const { return nig_; }
  const TwoPointLaw& two_point_law() const { return two_point_; }

  /// Tail parameters (alpha, beta) of an NIG law.
  std::pair<double, double> nig_tail() const { return {nig_.k / nig_.s, nig_.a / nig_.s}; }

  std::string name() const {
    switch (kind_) {
      case InnovationKind::gaussian: return "gaussian";
      case InnovationKind::nig: return "nig";
      case InnovationKind::two_point: return "two_point";
    }
    return "?";
  }

  /// Open interval on which the CGF is finite (with the NIG guard margin).
  std::pair<double, double> cgf_domain() const {
    if (kind_ != InnovationKind::nig) return {-INFINITY, INFINITY};
    const double lim = nig_.k * (1.0 - 1e-10);
    return {(-lim - nig_.a) / nig_.s, (lim - nig_.a) / nig_.s};
  }

  bool in_cgf_domain(double z) const {
    if (kind_ != InnovationKind::nig) return std::isfinite(z);
    return std::abs(nig_.a + z * nig_.s) <= nig_.k * (1.0 - 1e-10);
  }

  CgfValue cgf(double z) const { return {cgf_derivative(0, z), cgf_derivative(1, z), cgf_derivative(2, z)}; }

  double cgf_value(double z) const { return cgf_derivative(0, z); }

  /// n-th derivative of the CGF at z, n in [0, 4].
  double cgf_derivative(int order, double z) const {
    if (order < 0 || order > 4) throw ParamError("cgf_derivative: order must be in [0, 4]");
    switch (kind_) {
      case InnovationKind::gaussian:
        return order == 0 ? 0.5 * z * z : order == 1 ? z : order == 2 ? 1.0 : 0.0;
      case InnovationKind::nig: return nig_cgf_derivative(order, z);
      case InnovationKind::two_point: return two_point_cgf_derivative(order, z);
    }
    return 0.0;
  }

  /// Raw moment E[eps^j], j in [0, 4].
  double raw_moment(int j) const {
    const double k3 = cgf_derivative(3, 0.0), k4 = cgf_derivative(4, 0.0);
    const double k1 = cgf_derivative(1, 0.0), k2 = cgf_derivative(2, 0.0);
    switch (j) {
      case 0: return 1.0;
      case 1: return k1;
      case 2: return k2 + k1 * k1;
      case 3: return k3 + 3.0 * k2 * k1 + k1 * k1 * k1;
      case 4: return k4 + 4.0 * k3 * k1 + 3.0 * k2 * k2 + 6.0 * k2 * k1 * k1 + k1 * k1 * k1 * k1;
      default: throw ParamError("raw_moment: j must be in [0, 4]");
    }
  }

  double skewness() const { return cgf_derivative(3, 0.0) / std::pow(cgf_derivative(2, 0.0), 1.5); }

  /// Kurtosis (not excess): 3 + k4 / k2^2.
  double kurtosis() const {
    const double k2 = cgf_derivative(2, 0.0);
    return 3.0 + cgf_derivative(4, 0.0) / (k2 * k2);
  }

  double log_density(double x) const {
    switch (kind_) {
      case InnovationKind::gaussian: return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
      case InnovationKind::nig:
        return nig_kernel::log_density(x, nig_.k, nig_.a, nig_.s, nig_.loc, [](double v) { return log_bessel_k1(v); });
      case InnovationKind::two_point: throw DomainError("two_point law has no density");
    }
    return 0.0;
  }

  double density(double x) const { return std::exp(log_density(x)); }

  /// One draw. NIG uses the normal variance-mean mixture with an inverse
  /// Gaussian mixing variable (Michael-Schucany-Haas), consuming two normals
  /// and one uniform per draw.
  template <class Engine>
  double draw(Engine& eng) const {
    switch (kind_) {
      case InnovationKind::gaussian: {
        std::normal_distribution<double> normal;
        return normal(eng);
      }
      case InnovationKind::nig: {
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> uniform;
        const double g = std::sqrt((nig_.k - nig_.a) * (nig_.k + nig_.a));
        const double mu = nig_.s * nig_.s / g;  // IG mean
        const double lam = nig_.s * nig_.s;     // IG shape
        const double nu = normal(eng);
        const double y = nu * nu;
        const double root = std::sqrt(mu * mu * y * y + 4.0 * mu * lam * y);
        const double x = mu - 2.0 * mu * mu * y / (mu * y + root);
        const double v = uniform(eng) <= mu / (mu + x) ? x : mu * mu / x;
        return nig_.loc + (nig_.a / nig_.s) * v + std::sqrt(v) * normal(eng);
      }
      case InnovationKind::two_point: {
        std::uniform_real_distribution<double> uniform;
        return uniform(eng) < two_point_.p ? two_point_.up : two_point_.down;
      }
    }
    return 0.0;
  }

  template <class Engine>
  std::vector<double> sample(Engine& eng, std::size_t n) const {
    if (n == 0) throw ParamError("sample: n must be >= 1");
    std::vector<double> out(n);
    for (auto& x : out) x = draw(eng);
    return out;
  }

 private:
  explicit InnovationDistribution(InnovationKind kind) : kind_(kind) {}

  double nig_cgf_derivative(int order, double z) const {
    const double k = nig_.k, s = nig_.s;
    const double u = nig_.a + z * s;
    if (!(std::abs(u) <= k * (1.0 - 1e-10)))
      throw DomainError("NIG cgf: |a + z s| must stay below k (z = " + std::to_string(z) + ")");
    const double g = std::sqrt((k - u) * (k + u));
    const double k2 = k * k;
    switch (order) {
      case 0: return nig_kernel::cgf(z, k, nig_.a, s, nig_.loc);
      case 1: return nig_.loc + s * u / g;
      case 2: return s * s * k2 / (g * g * g);
      case 3: return 3.0 * s * s * s * k2 * u / std::pow(g, 5);
      default: return 3.0 * s * s * s * s * k2 * (k2 + 4.0 * u * u) / std::pow(g, 7);
    }
  }

  double two_point_cgf_derivative(int order, double z) const {
    const auto& tp = two_point_;
    // Tilted probability of the upper atom, computed in log space.
    const double lu = std::log(tp.p) + z * tp.up;
    const double ld = std::log1p(-tp.p) + z * tp.down;
    const double m = std::max(lu, ld);
    const double log_mgf = m + std::log(std::exp(lu - m) + std::exp(ld - m));
    const double w = std::exp(lu - log_mgf);
    const double span = tp.up - tp.down;
    switch (order) {
      case 0:
        if (std::abs(z) * span < 1.0) return std::log1p(tp.p * std::expm1(z * tp.up) + (1.0 - tp.p) * std::expm1(z * tp.down));
        return log_mgf;
      case 1: return w * tp.up + (1.0 - w) * tp.down;
      case 2: return w * (1.0 - w) * span * span;
      case 3: return w * (1.0 - w) * (1.0 - 2.0 * w) * span * span * span;
      default: return w * (1.0 - w) * (1.0 - 6.0 * w + 6.0 * w * w) * std::pow(span, 4);
    }
  }

  InnovationKind kind_;
  NigShape nig_{};
  TwoPointLaw two_point_{};
};

}  // namespace qhedge
