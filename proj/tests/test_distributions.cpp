#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "qhedge/distributions.hpp"
#include "qhedge/random.hpp"

using namespace qhedge;

namespace {

// composite Simpson on [lo, hi]
template <class F>
double simpson(F&& f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

InnovationDistribution paper_nig() { return InnovationDistribution::nig_from_tail(1.322, -0.144); }

}  // namespace

TEST(Cgf, GaussianValues) {
  const auto g = InnovationDistribution::gaussian();
  const auto c = g.cgf(0.3);
  EXPECT_DOUBLE_EQ(c.value, 0.045);
  EXPECT_DOUBLE_EQ(c.d1, 0.3);
  EXPECT_DOUBLE_EQ(c.d2, 1.0);
}

TEST(Cgf, StandardizedAtZero) {
  std::vector<InnovationDistribution> laws = {InnovationDistribution::gaussian(), InnovationDistribution::nig(1.322, -0.144),
                                              InnovationDistribution::nig(0.4, 0.3), InnovationDistribution::nig(25.0, -10.0),
                                              paper_nig(), InnovationDistribution::two_point(0.3)};
  for (const auto& d : laws) {
    const auto c = d.cgf(0.0);
    EXPECT_NEAR(c.value, 0.0, 1e-15);
    EXPECT_NEAR(c.d1, 0.0, 1e-12);
    EXPECT_NEAR(c.d2, 1.0, 1e-12);
  }
}

TEST(Cgf, PaperNigMomentsFromTailParameters) {
  const auto d = paper_nig();
  EXPECT_NEAR(d.skewness(), -0.250, 5e-3);
  EXPECT_NEAR(d.kurtosis(), 4.839, 5e-3);
  // moments by quadrature of the density, independent of the CGF
  const double m3 = simpson([&](double x) { return x * x * x * d.density(x); }, -60, 60, 240000);
  const double m4 = simpson([&](double x) { return x * x * x * x * d.density(x); }, -60, 60, 240000);
  EXPECT_NEAR(m3, d.skewness(), 1e-7);
  EXPECT_NEAR(m4, d.kurtosis(), 1e-6);
}

TEST(Cgf, DensityFormReadingOfPaperPairHasLargerMoments) {
  // (k, a) = (1.322, -0.144) read as density-form shape parameters
  const auto d = InnovationDistribution::nig(1.322, -0.144);
  const double g = std::sqrt(1.322 * 1.322 - 0.144 * 0.144);
  EXPECT_NEAR(d.skewness(), 3 * -0.144 / (1.322 * std::sqrt(g)), 1e-12);
  EXPECT_NEAR(d.kurtosis(), 3.0 + 3.0 * (1.322 * 1.322 + 4 * 0.144 * 0.144) / (1.322 * 1.322 * g), 1e-12);
  EXPECT_NEAR(d.skewness(), -0.285, 1e-3);
}

TEST(Cgf, TailConstructorRoundTrip) {
  const auto d = paper_nig();
  const auto [alpha, beta] = d.nig_tail();
  EXPECT_NEAR(alpha, 1.322, 1e-12);
  EXPECT_NEAR(beta, -0.144, 1e-12);
  EXPECT_THROW(InnovationDistribution::nig_from_tail(1.0, 1.0), ParamError);
}

TEST(Cgf, DomainGuard) {
  const auto d = paper_nig();
  const auto [lo, hi] = d.cgf_domain();
  EXPECT_NEAR(lo, -1.178, 2e-3);
  EXPECT_NEAR(hi, 1.466, 2e-3);
  EXPECT_NO_THROW(d.cgf(0.99 * hi));
  EXPECT_THROW(d.cgf(1.01 * hi), DomainError);
  EXPECT_THROW(d.cgf(1.01 * lo), DomainError);
  EXPECT_NO_THROW(InnovationDistribution::gaussian().cgf(1e3));
}

TEST(Cgf, DerivativesMatchCentralDifferences) {
  std::vector<InnovationDistribution> laws = {paper_nig(), InnovationDistribution::nig(0.8, 0.5),
                                              InnovationDistribution::two_point(0.2), InnovationDistribution::gaussian()};
  auto eng = stream_engine(11, 0);
  const double h = 1e-5;
  for (const auto& d : laws) {
    auto [lo, hi] = d.cgf_domain();
    if (!std::isfinite(lo)) lo = -3.0, hi = 3.0;
    std::uniform_real_distribution<double> u(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
    for (int i = 0; i < 20; ++i) {
      const double z = u(eng);
      for (int order = 1; order <= 4; ++order) {
        const double fd = (d.cgf_derivative(order - 1, z + h) - d.cgf_derivative(order - 1, z - h)) / (2 * h);
        const double an = d.cgf_derivative(order, z);
        EXPECT_NEAR(an, fd, 1e-6 * std::max(1.0, std::abs(an))) << d.name() << " z=" << z << " order=" << order;
      }
    }
  }
}

TEST(Cgf, TiltedMeanIsNondecreasing) {
  for (const auto& d : {paper_nig(), InnovationDistribution::nig(0.5, -0.4), InnovationDistribution::two_point(0.7)}) {
    auto [lo, hi] = d.cgf_domain();
    if (!std::isfinite(lo)) lo = -5.0, hi = 5.0;
    double prev = -INFINITY;
    for (int i = 1; i < 400; ++i) {
      const double z = lo + (hi - lo) * i / 400.0;
      const auto c = d.cgf(z);
      EXPECT_GE(c.d2, 0.0);
      EXPECT_GE(c.d1, prev);
      prev = c.d1;
    }
  }
}

TEST(Cgf, RawMomentsAreStandardized) {
  const auto d = paper_nig();
  EXPECT_DOUBLE_EQ(d.raw_moment(0), 1.0);
  EXPECT_NEAR(d.raw_moment(1), 0.0, 1e-12);
  EXPECT_NEAR(d.raw_moment(2), 1.0, 1e-12);
  EXPECT_NEAR(d.raw_moment(3), d.skewness(), 1e-12);
  EXPECT_NEAR(d.raw_moment(4), d.kurtosis(), 1e-12);
  const auto tp = InnovationDistribution::two_point(0.25);
  const auto& law = tp.two_point_law();
  const double m3 = 0.25 * std::pow(law.up, 3) + 0.75 * std::pow(law.down, 3);
  EXPECT_NEAR(tp.raw_moment(3), m3, 1e-12);
}

TEST(StandardizeNig, SatisfiesMomentIdentities) {
  auto eng = stream_engine(5, 1);
  std::uniform_real_distribution<double> uk(0.05, 30.0), ur(-0.99, 0.99);
  for (int i = 0; i < 50; ++i) {
    const double k = uk(eng), a = ur(eng) * k;
    const auto [s, l] = standardize_nig(k, a);
    const double g = std::sqrt(k * k - a * a);
    EXPECT_NEAR(l + a * s / g, 0.0, 1e-12 * std::max(1.0, std::abs(l)));
    EXPECT_NEAR(s * s * k * k / std::pow(g, 3), 1.0, 1e-12);
  }
  const auto [s, l] = standardize_nig(1.322, -0.144);
  EXPECT_NEAR(l + -0.144 * s / std::sqrt(1.322 * 1.322 - 0.144 * 0.144), 0.0, 1e-12);
}

TEST(StandardizeNig, SymmetricCase) {
  const auto [s, l] = standardize_nig(2.0, 0.0);
  EXPECT_EQ(l, 0.0);
  EXPECT_NEAR(s, std::sqrt(2.0), 1e-15);
}

TEST(StandardizeNig, BoundaryRejected) {
  EXPECT_THROW(standardize_nig(1.0, 1.0), ParamError);
  EXPECT_THROW(standardize_nig(0.0, 0.0), ParamError);
  EXPECT_THROW(InnovationDistribution::nig(1.0, -1.5), ParamError);
}

TEST(Density, GaussianAtZero) {
  EXPECT_DOUBLE_EQ(InnovationDistribution::gaussian().density(0.0), 1.0 / std::sqrt(2.0 * std::numbers::pi));
}

TEST(Density, SymmetricNig) {
  const auto d = InnovationDistribution::nig(1.5, 0.0);
  for (double x : {0.5, 1.0, 2.0}) EXPECT_DOUBLE_EQ(d.density(x), d.density(-x));
}

TEST(Density, IntegratesToOneWithUnitVariance) {
  for (const auto& d : {paper_nig(), InnovationDistribution::nig(1.322, -0.144), InnovationDistribution::gaussian()}) {
    const double mass = simpson([&](double x) { return d.density(x); }, -30, 30, 120000);
    const double var = simpson([&](double x) { return x * x * d.density(x); }, -30, 30, 120000);
    EXPECT_NEAR(mass, 1.0, 1e-6) << d.name();
    EXPECT_NEAR(var, 1.0, 1e-6) << d.name();
  }
}

TEST(Density, NonnegativeFarInTails) {
  const auto d = paper_nig();
  for (double x : {-200.0, -40.0, 40.0, 300.0}) {
    EXPECT_GE(d.density(x), 0.0);
    EXPECT_TRUE(std::isfinite(d.log_density(x)));
  }
}

TEST(Sample, GaussianMean) {
  auto eng = stream_engine(1, 0);
  const auto xs = InnovationDistribution::gaussian().sample(eng, 1000000);
  double m = 0.0;
  for (double x : xs) m += x;
  EXPECT_NEAR(m / xs.size(), 0.0, 0.005);
}

TEST(Sample, NigMomentsWithinCltBands) {
  const auto d = paper_nig();
  auto eng = stream_engine(2, 0);
  const std::size_t n = 1000000;
  const auto xs = d.sample(eng, n);
  double m1 = 0, m2 = 0, m3 = 0;
  for (double x : xs) m1 += x, m2 += x * x, m3 += x * x * x;
  m1 /= n, m2 /= n, m3 /= n;
  const double var = m2 - m1 * m1;
  const double skew = (m3 - 3 * m1 * m2 + 2 * m1 * m1 * m1) / std::pow(var, 1.5);
  EXPECT_NEAR(m1, 0.0, 5.0 / std::sqrt(double(n)));
  EXPECT_NEAR(var, 1.0, 5.0 * std::sqrt((d.kurtosis() - 1.0) / n));
  EXPECT_NEAR(skew, -0.250, 0.05);
}

TEST(Sample, LogEmpiricalMgfMatchesCgf) {
  const auto d = paper_nig();
  auto eng = stream_engine(3, 0);
  const std::size_t n = 1000000;
  const auto xs = d.sample(eng, n);
  for (double z : {-0.5, -0.1, 0.1, 0.5}) {
    double s = 0, s2 = 0;
    for (double x : xs) {
      const double e = std::exp(z * x);
      s += e;
      s2 += e * e;
    }
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    EXPECT_NEAR(std::log(mean), d.cgf_value(z), 5.0 * se / mean) << z;
  }
}

TEST(Sample, TwoPointFrequencies) {
  const auto d = InnovationDistribution::two_point(0.3);
  auto eng = stream_engine(4, 0);
  const auto xs = d.sample(eng, 200000);
  double ups = 0;
  for (double x : xs) ups += x > 0;
  EXPECT_NEAR(ups / xs.size(), 0.3, 5.0 * std::sqrt(0.21 / xs.size()));
}

TEST(Sample, ZeroCountRejected) {
  auto eng = stream_engine(0, 0);
  EXPECT_THROW(InnovationDistribution::gaussian().sample(eng, 0), ParamError);
}

TEST(NigCgf, AccurateNearOrigin) {
  const auto d = InnovationDistribution::nig_from_tail(1.322, -0.144);
  const double k3 = d.cgf_derivative(3, 0.0), k4 = d.cgf_derivative(4, 0.0);
  for (double z : {1e-3, 1e-5, 3e-7, -2e-6}) {
    const double series = z * z / 2 + k3 * z * z * z / 6 + k4 * z * z * z * z / 24;
    EXPECT_NEAR(d.cgf_value(z), series, 1e-10 * series);
  }
}
