#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "lattice_oracle.hpp"
#include "qhedge/hedging.hpp"

using namespace qhedge;
using namespace oracle;

namespace {

NgarchParams tree_params() {
  NgarchParams p;
  p.alpha0 = 1e-5;
  p.alpha1 = 0.1;
  p.beta1 = 0.8;
  p.gamma = 0.5;
  p.lambda = 0.05;
  p.r = 1e-4;
  return p;
}

NgarchParams nig_params() {
  NgarchParams p;
  p.alpha0 = 8.665e-7;
  p.alpha1 = 0.047;
  p.beta1 = 0.909;
  p.gamma = 0.860;
  p.lambda = 0.041;
  p.r = 2.8e-5;
  return p;
}

SimSpec nig_spec(KernelKind k, std::size_t n, std::size_t T, std::uint64_t seed) {
  SimSpec s;
  s.params = nig_params();
  s.dist = InnovationDistribution::nig_from_tail(1.322, -0.144);
  s.kernel.kind = k;
  s.sigma2_1 = 1.2e-4;
  s.n_paths = n;
  s.horizon = T;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Payoff, ValuesAndSlopes) {
  EXPECT_EQ(Payoff::call(100)(110), 10);
  EXPECT_EQ(Payoff::call(100)(90), 0);
  EXPECT_EQ(Payoff::put(100)(90), 10);
  EXPECT_EQ(Payoff::put(100).slope(90), -1);
  EXPECT_EQ(Payoff::asset()(42), 42);
  EXPECT_EQ(Payoff::constant(3).slope(5), 0);
}

TEST(LrmQ, TwoPointTreeMatchesIndependentLattice) {
  const auto p = tree_params();
  const auto d = InnovationDistribution::two_point(0.4);
  const double s0 = 50, v1 = 3e-4;
  for (std::size_t j : {1u, 2u, 4u}) {
    const auto e = enumerate_two_point(p, d, s0, v1, 4, KernelKind::extended_girsanov);
    for (double k : {45.0, 50.0, 55.0}) {
      const auto h = Payoff::call(k);
      LrmOptions o;
      o.j = j;
      const auto res = lrm_q_hedge(e, h, o);
      EXPECT_NEAR(res.ratio, tree_q_hedge(p, d, s0, v1, 4, j, TreeLaw::egp, h), 1e-12) << "j=" << j << " K=" << k;
      EXPECT_NEAR(res.price, tree_value(p, d, {1, s0, v1}, 4, TreeLaw::egp, h), 1e-12);
      EXPECT_EQ(res.std_error, 0.0);
    }
  }
}

TEST(LrmQ, EsscherTreeMatchesIndependentLattice) {
  const auto p = tree_params();
  const auto d = InnovationDistribution::two_point(0.4);
  const auto e = enumerate_two_point(p, d, 50.0, 3e-4, 4, KernelKind::esscher);
  for (std::size_t j : {1u, 2u}) {
    LrmOptions o;
    o.j = j;
    const auto h = Payoff::put(50);
    EXPECT_NEAR(lrm_q_hedge(e, h, o).ratio, tree_q_hedge(p, d, 50, 3e-4, 4, j, TreeLaw::esscher, h), 1e-12);
  }
}

TEST(LrmP, TwoPointTreeMatchesBackwardRecursion) {
  const auto p = tree_params();
  const auto d = InnovationDistribution::two_point(0.4);
  const auto e = enumerate_two_point(p, d, 50.0, 3e-4, 4, KernelKind::minimal_martingale);
  for (std::size_t j : {1u, 2u}) {
    for (double k : {47.0, 50.0, 53.0}) {
      const auto h = Payoff::call(k);
      LrmOptions o;
      o.j = j;
      const auto res = lrm_p_hedge(e, h, o);
      double xi = 0;
      const double v0 = tree_p_lrm(p, d, {1, 50.0, 3e-4}, 0, 4, j, h, &xi);
      EXPECT_NEAR(res.ratio, xi, 1e-12) << "j=" << j << " K=" << k;
      EXPECT_NEAR(res.price, v0, 1e-12);
      ASSERT_TRUE(res.negative_n_fraction.has_value());
      ASSERT_TRUE(res.negative_z_fraction.has_value());
    }
  }
}

TEST(LrmQ, FrequencyAndMeasureErrors) {
  const auto e = simulate(nig_spec(KernelKind::extended_girsanov, 100, 6, 1));
  LrmOptions o;
  o.j = 4;
  EXPECT_THROW(lrm_q_hedge(e, Payoff::call(100), o), FrequencyError);
  o.j = 0;
  EXPECT_THROW(lrm_q_hedge(e, Payoff::call(100), o), FrequencyError);
  const auto pm = simulate(nig_spec(KernelKind::minimal_martingale, 100, 6, 1));
  EXPECT_THROW(lrm_q_hedge(pm, Payoff::call(100)), InvalidMeasureError);
  EXPECT_THROW(delta_s(pm, Payoff::call(100)), InvalidMeasureError);
  EXPECT_THROW(lrm_p_hedge(e, Payoff::call(100)), InvalidMeasureError);
  o.j = 4;
  EXPECT_THROW(lrm_p_hedge(pm, Payoff::call(100), o), FrequencyError);
}

TEST(LrmQ, DegenerateIncrementVariance) {
  auto s = nig_spec(KernelKind::extended_girsanov, 100, 2, 1);
  s.sigma2_1 = 1e-300;
  s.params.alpha0 = 1e-300;
  s.params.alpha1 = 0;
  s.params.beta1 = 0;
  const auto e = simulate(s);
  EXPECT_THROW(lrm_q_hedge(e, Payoff::call(100)), DegenerateVarianceError);
}

TEST(LrmQ, PutCallConsistencyOnSharedEnsemble) {
  const auto e = apply_ems(simulate(nig_spec(KernelKind::extended_girsanov, 20000, 20, 3)));
  for (double k : {90.0, 100.0, 110.0}) {
    const double c = lrm_q_hedge(e, Payoff::call(k)).ratio;
    const double pu = lrm_q_hedge(e, Payoff::put(k)).ratio;
    const double a = lrm_q_hedge(e, Payoff::asset()).ratio;
    EXPECT_NEAR(c - pu, a, 1e-10);
    const double dc = delta_s(e, Payoff::call(k)).ratio, dp = delta_s(e, Payoff::put(k)).ratio;
    EXPECT_NEAR(dc - dp, delta_s(e, Payoff::asset()).ratio, 1e-12);
  }
}

TEST(LrmQ, AssetHedgedAtMaturityFrequencyIsOne) {
  const auto e = simulate(nig_spec(KernelKind::extended_girsanov, 5000, 5, 4));
  LrmOptions o;
  o.j = 5;
  EXPECT_NEAR(lrm_q_hedge(e, Payoff::asset(), o).ratio, 1.0, 1e-12);
  EXPECT_NEAR(lrm_q_hedge(e, Payoff::constant(7.0), o).ratio, 0.0, 1e-12);
}

TEST(DeltaS, MonotoneInStrike) {
  const auto e = apply_ems(simulate(nig_spec(KernelKind::extended_girsanov, 20000, 30, 5)));
  double prev = 2.0;
  for (double k = 80; k <= 120; k += 2.5) {
    const double d = delta_s(e, Payoff::call(k)).ratio;
    EXPECT_LE(d, prev);
    EXPECT_GE(d, 0.0);
    prev = d;
  }
}

TEST(DeltaS, BlackScholesWorld) {
  SimSpec s;
  s.params.alpha0 = 1e-4;
  s.params.r = 1e-4;
  s.sigma2_1 = 1e-4;
  s.n_paths = 200000;
  s.horizon = 30;
  s.seed = 6;
  s.ems = true;
  const auto e = simulate(s);
  const auto d = delta_s(e, Payoff::call(100));
  EXPECT_NEAR(d.ratio, bs_delta(100, 100, 30, 1e-4, 0.01), 4 * d.std_error);
  const auto sv = delta_sv(e, Payoff::call(100));
  EXPECT_EQ(*sv.vm, 0.0);
  EXPECT_DOUBLE_EQ(sv.ratio, d.ratio);
}

namespace {

double mc_price(SimSpec s, double v1, const Payoff& h) {
  s.sigma2_1 = v1;
  const auto e = simulate(s);
  return conditional_expectation(e, [&h](const PathEnsemble& en, std::size_t i) { return h(en.price(i, en.horizon)); },
                                 std::exp(-s.params.r * double(s.horizon)))
      .value;
}

}  // namespace

TEST(Vega, PathwiseMatchesCommonRandomNumberFiniteDifference) {
  for (KernelKind k : {KernelKind::extended_girsanov, KernelKind::esscher}) {
    auto s = nig_spec(k, 100000, 20, 7);
    const double v1 = *s.sigma2_1, dv = 1e-3 * v1;
    const auto h = Payoff::call(101);
    const double fd = (mc_price(s, v1 + dv, h) - mc_price(s, v1 - dv, h)) / (2 * dv);
    const auto pw = vega_sigma2(simulate(s), h);
    EXPECT_NEAR(pw.ratio, fd, 0.01 * std::abs(fd)) << kernel_name(k);
    EXPECT_GT(pw.ratio, 0.0);
  }
}

TEST(VegaMultiplier, ClosedFormsAgreeWithOneStepSimulation) {
  const auto p = nig_params();
  const auto d = InnovationDistribution::nig_from_tail(1.322, -0.144);
  for (double v : {5e-5, 1.2e-4, 4e-4}) {
    const auto q = vega_multiplier_mc(p, d, 100, v, 2000000, 11, OneStepMeasure::egp);
    EXPECT_NEAR(vega_multiplier_q(p, d, 100, v), q.value, 4 * q.std_error);
    const auto pm = vega_multiplier_p(p, d, 100, v, 2000000, 12);
    EXPECT_NEAR(vega_multiplier_p_closed_form(p, d, 100, v), pm.value, 4 * pm.std_error);
    EXPECT_LT(vega_multiplier_q(p, d, 100, v), 0.0);
  }
}

TEST(VegaMultiplier, EsscherClosedFormAgainstWeightedRegression) {
  const auto p = nig_params();
  const auto d = InnovationDistribution::nig_from_tail(1.322, -0.144);
  const double v = 1.2e-4, sig = std::sqrt(v), s = 100;
  const double phi = esscher_theta(p, d, sig) * sig;
  auto eng = stream_engine(13, 0);
  const std::size_t n = 2000000;
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = d.draw(eng);
    const double w = std::exp(phi * eps - d.cgf_value(phi));
    const auto r = step_p(p, d, {v, 0}, eps);
    const double x = s * std::expm1(r.log_return), y = r.next.sigma2 - v;
    sw += w, sx += w * x, sy += w * y, sxx += w * x * x, sxy += w * x * y;
  }
  const double mx = sx / sw, my = sy / sw;
  const double slope = (sxy / sw - mx * my) / (sxx / sw - mx * mx);
  EXPECT_NEAR(vega_multiplier_esscher(p, d, s, v), slope, 0.03 * std::abs(slope));
}

TEST(VegaMultiplier, GaussianEsscherEqualsGirsanov) {
  const auto p = nig_params();
  const auto g = InnovationDistribution::gaussian();
  EXPECT_NEAR(vega_multiplier_esscher(p, g, 100, 1e-4), vega_multiplier_q(p, g, 100, 1e-4), 1e-9);
}

TEST(DeltaSv, CombinesComponents) {
  const auto e = apply_ems(simulate(nig_spec(KernelKind::extended_girsanov, 20000, 10, 8)));
  const auto h = Payoff::call(100);
  const auto sv = delta_sv(e, h);
  EXPECT_NEAR(sv.ratio, *sv.delta_s + *sv.vm * *sv.delta_sigma2, 1e-14);
  EXPECT_DOUBLE_EQ(*sv.delta_s, delta_s(e, h).ratio);
  EXPECT_DOUBLE_EQ(*sv.vm, vega_multiplier_q(e.params, e.dist, e.s0, e.variance(0, 0)));
  EXPECT_GT(sv.std_error, 0.0);
}

TEST(TotalDerivativeVm, Formula) {
  const auto p = nig_params();
  EXPECT_DOUBLE_EQ(total_derivative_vm(p, 100, 0.01, 0.5), 2 * 0.047 * 0.01 * (0.5 - 0.86) / 100);
  EXPECT_THROW(total_derivative_vm(p, 0, 0.01, 0.5), ParamError);
}

TEST(LrmQ, ControlVariateShrinksErrorWithoutShiftingEstimate) {
  const auto e = apply_ems(simulate(nig_spec(KernelKind::extended_girsanov, 50000, 20, 9)));
  const auto h = Payoff::call(100);
  LrmOptions plain, cv;
  cv.control_variate = true;
  const auto a = lrm_q_hedge(e, h, plain), b = lrm_q_hedge(e, h, cv);
  EXPECT_LT(b.std_error, a.std_error);
  EXPECT_NEAR(a.ratio, b.ratio, 4 * a.std_error);
}

TEST(LrmQ, StdErrorCoversSeedToSeedSpread) {
  std::vector<double> xs;
  double se = 0;
  for (int rep = 0; rep < 40; ++rep) {
    const auto r = lrm_q_hedge(simulate(nig_spec(KernelKind::extended_girsanov, 4000, 10, 300 + rep)), Payoff::call(100));
    xs.push_back(r.ratio);
    se += r.std_error / 40;
  }
  double m = 0, v = 0;
  for (double x : xs) m += x / xs.size();
  for (double x : xs) v += (x - m) * (x - m) / (xs.size() - 1);
  EXPECT_GT(std::sqrt(v) / se, 0.7);
  EXPECT_LT(std::sqrt(v) / se, 1.4);
}

TEST(HedgeContract, ReportsAllMeasures) {
  HedgeRequest req;
  req.contract = {100.0, 10, true};
  req.spec = nig_spec(KernelKind::extended_girsanov, 5000, 1, 10);
  req.spec.ems = true;
  const auto r = hedge_contract(req);
  EXPECT_GT(r.lrm.ratio, 0.0);
  EXPECT_LT(r.lrm.ratio, 1.0);
  EXPECT_TRUE(r.delta_sv.vm.has_value());
  req.j = 3;
  EXPECT_THROW(hedge_contract(req), FrequencyError);
}
