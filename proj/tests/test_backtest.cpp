#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lattice_oracle.hpp"
#include "qhedge/backtest.hpp"
#include "qhedge/presets.hpp"
#include "qhedge/synthetic.hpp"

using namespace qhedge;

namespace {

OptionQuote base_quote() {
  OptionQuote q;
  q.quote_date = make_date(2004, 1, 7);
  q.expiry = q.quote_date + std::chrono::days{30};
  q.strike = 100;
  q.bid = 2.0;
  q.ask = 2.2;
  q.volume = 1000;
  q.open_interest = 1000;
  q.spot = 100;
  return q;
}

SynthConfig small_world(std::uint64_t seed) {
  SynthConfig c;
  c.params = spx_gaussian().params;
  c.dist = spx_gaussian().dist;
  c.history_days = 120;
  c.quote_weeks = 8;
  c.n_expiries = 3;
  c.pricing_paths = 400;
  c.seed = seed;
  c.threads = 2;
  return c;
}

}  // namespace

TEST(Dates, CalendarHelpers) {
  const Date d = parse_date("2004-01-07");
  EXPECT_EQ(format_date(d), "2004-01-07");
  EXPECT_THROW(parse_date("2004-13-01"), InputError);
  EXPECT_THROW(parse_date("04-1-7"), InputError);
  EXPECT_EQ(trading_days_between(parse_date("2004-01-05"), parse_date("2004-01-12")), 5u);
  EXPECT_EQ(settlement_date(parse_date("2004-01-17")), parse_date("2004-01-16"));
  EXPECT_EQ(monthly_expiry(std::chrono::year{2004} / std::chrono::January), parse_date("2004-01-17"));
}

TEST(Filter, BoundariesFollowTheSelectionRules) {
  auto q = base_quote();
  EXPECT_TRUE(passes_filter(q));
  auto m = q;
  m.expiry = m.quote_date + std::chrono::days{6};
  EXPECT_FALSE(passes_filter(m));
  m.expiry = m.quote_date + std::chrono::days{7};
  EXPECT_TRUE(passes_filter(m));
  m.expiry = m.quote_date + std::chrono::days{200};
  EXPECT_TRUE(passes_filter(m));
  m.expiry = m.quote_date + std::chrono::days{201};
  EXPECT_FALSE(passes_filter(m));
  auto v = q;
  v.volume = 200;
  EXPECT_FALSE(passes_filter(v));
  v.volume = 201;
  EXPECT_TRUE(passes_filter(v));
  auto o = q;
  o.open_interest = 500;
  EXPECT_TRUE(passes_filter(o));
  o.open_interest = 499;
  EXPECT_FALSE(passes_filter(o));
  auto x = q;
  x.spot = 90;
  EXPECT_TRUE(passes_filter(x));
  x.spot = 110;
  EXPECT_TRUE(passes_filter(x));
  x.spot = 89.9;
  EXPECT_FALSE(passes_filter(x));
  x.spot = 110.1;
  EXPECT_FALSE(passes_filter(x));
  const std::vector<OptionQuote> all{q, v, o, x};
  EXPECT_EQ(filter_contracts(all).size(), 2u);
}

TEST(ImpliedVol, ForwardThenInvert) {
  const double p = bs_price(100, 100, 0.25, 0.0, 0.2);
  EXPECT_NEAR(implied_vol(p, 100, 100, 0.25, 0.0), 0.2, 1e-10);
  for (double k : {80.0, 95.0, 120.0})
    for (double t : {0.05, 0.5})
      EXPECT_NEAR(implied_vol(bs_price(100, k, t, 0.02, 0.35), 100, k, t, 0.02), 0.35, 1e-10) << k << " " << t;
  EXPECT_THROW(implied_vol(100.0, 100, 100, 0.25, 0.0), InversionError);
  EXPECT_THROW(implied_vol(10.0, 100, 90, 0.25, 0.0), InversionError);
}

TEST(AdhocSurface, FlatVolatilityIsRecovered) {
  std::vector<SurfacePoint> pts;
  for (double k : {90.0, 95.0, 100.0, 105.0, 110.0})
    for (double t : {0.1, 0.3, 0.5}) pts.push_back({k, t, bs_price(100, k, t, 0.01, 0.2), 100, 0.01, true});
  const auto s = fit_adhoc_surface(pts);
  EXPECT_EQ(s.n_used, 15u);
  double dev = 0;
  for (double k = 90; k <= 110; k += 1)
    for (double t = 0.1; t <= 0.5; t += 0.05) dev = std::max(dev, std::abs(s(k, t) - 0.2));
  EXPECT_LT(dev, 1e-6);
}

TEST(AdhocSurface, LinearInStrike) {
  std::vector<SurfacePoint> pts;
  for (double k : {90.0, 94.0, 98.0, 102.0, 106.0, 110.0})
    for (double t : {0.1, 0.25, 0.4}) {
      const double vol = 0.1 + 0.001 * k;
      pts.push_back({k, t, bs_price(100, k, t, 0.0, vol), 100, 0.0, true});
    }
  const auto s = fit_adhoc_surface(pts);
  EXPECT_NEAR(s.coef[1], 0.001, 1e-6);
  EXPECT_NEAR(s.coef[2], 0.0, 1e-8);
  EXPECT_NEAR(s(100, 0.2), 0.2, 1e-8);
}

TEST(AdhocSurface, TooFewValidQuotes) {
  std::vector<SurfacePoint> pts;
  for (double k : {90.0, 95.0, 100.0, 105.0, 110.0}) pts.push_back({k, 0.2, bs_price(100, k, 0.2, 0.0, 0.2), 100, 0.0, true});
  EXPECT_THROW(fit_adhoc_surface(pts), InsufficientDataError);
  pts.push_back({100, 0.3, 150.0, 100, 0.0, true});  // above the spot: not invertible
  EXPECT_THROW(fit_adhoc_surface(pts), InsufficientDataError);
  pts.push_back({100, 0.3, bs_price(100, 100, 0.3, 0.0, 0.2), 100, 0.0, true});
  const auto s = fit_adhoc_surface(pts);
  EXPECT_EQ(s.n_dropped, 1u);
  EXPECT_EQ(s.n_used, 6u);
}

TEST(AdhocSurface, FloorAtOneBasisPoint) {
  AdhocSurface s;
  s.coef[0] = -1.0;
  EXPECT_EQ(s(100, 0.1), 1e-4);
}

TEST(AdhocDelta, ClosedForm) {
  const auto flat = AdhocSurface::flat(0.2);
  EXPECT_NEAR(adhoc_bs_delta(flat, 100, 100, 0.25, 0.0), norm_cdf(0.05), 1e-15);
  EXPECT_NEAR(adhoc_bs_delta(flat, 100, 100, 0.25, 0.0), 0.5199388, 1e-7);
  EXPECT_NEAR(adhoc_bs_delta(flat, 100, 1e-6, 0.25, 0.0), 1.0, 1e-12);
  EXPECT_NEAR(adhoc_bs_delta(flat, 100, 1e4, 0.25, 0.0), 0.0, 1e-12);
}

namespace {

ContractTrack straight_track(double s0, double k, std::vector<double> spots_after, std::size_t steps_each) {
  ContractTrack t;
  t.id = "t";
  t.strike = k;
  Date d = make_date(2004, 1, 5);
  t.spots.push_back(s0);
  t.dates.push_back(d);
  for (std::size_t i = 0; i + 1 < spots_after.size(); ++i) {
    d += std::chrono::days{7};
    t.dates.push_back(d);
    t.spots.push_back(spots_after[i]);
  }
  t.steps.assign(t.dates.size(), steps_each);
  t.expiry = d + std::chrono::days{7};
  t.s_terminal = spots_after.back();
  return t;
}

HedgeProvider constant_provider(double xi) {
  return [xi](const MarketView&, const HedgeContext&) { return std::vector<double>{xi}; };
}

}  // namespace

TEST(Replication, ZeroVolatilityForwardIsExact) {
  MarketData m;
  auto t = straight_track(100, 80, {100, 100, 100, 100}, 5);
  t.v0 = 100 - 80;
  EXPECT_EQ(run_replication(t, m, constant_provider(1.0), InitMode::garch).nhe[0], 0.0);

  // with carry: S grows at r and the cash account accrues
  const double r = 3e-4;
  ContractTrack g;
  g.id = "carry";
  g.strike = 80;
  g.spots = {100, 100 * std::exp(5 * r), 100 * std::exp(10 * r)};
  g.dates = {make_date(2004, 1, 5), make_date(2004, 1, 12), make_date(2004, 1, 19)};
  g.steps = {5, 5, 5};
  g.expiry = make_date(2004, 1, 26);
  g.s_terminal = 100 * std::exp(15 * r);
  g.v0 = 100 - 80 * std::exp(-15 * r);
  const auto res = run_replication(g, m, constant_provider(1.0), InitMode::garch, {r, true});
  EXPECT_NEAR(res.nhe[0], 0.0, 1e-12);
}

TEST(Replication, NoHedgeIsPayoffGap) {
  MarketData m;
  auto t = straight_track(100, 95, {104, 97, 108}, 5);
  t.v0 = 4.5;
  EXPECT_DOUBLE_EQ(run_replication(t, m, no_hedge_provider(), InitMode::garch).nhe[0], std::abs(13.0 - 4.5) / 4.5);
  const std::vector<double> xi{0.5, 0.4, 0.7};
  EXPECT_NEAR(normalized_hedging_error(t, xi), std::abs(13.0 - 4.5 - (0.5 * 4 + 0.4 * -7 + 0.7 * 11)) / 4.5, 1e-15);
}

TEST(Replication, MissingSpot) {
  MarketData m;
  auto t = straight_track(100, 95, {104, NAN, 108}, 5);
  t.v0 = 4.5;
  EXPECT_THROW(run_replication(t, m, no_hedge_provider(), InitMode::garch), MissingQuoteError);
}

TEST(Replication, TwoPointLatticeMatchesEnumeration) {
  NgarchParams p;
  p.alpha0 = 1e-5;
  p.alpha1 = 0.1;
  p.beta1 = 0.8;
  p.gamma = 0.5;
  p.lambda = 0.05;
  p.r = 1e-4;
  const auto d = InnovationDistribution::two_point(0.4);
  const double s0 = 50.0, v1 = 3e-4, k = 50.5;
  const std::size_t T = 4;
  const std::vector<std::size_t> gaps{1, 2, 1};
  const std::vector<std::size_t> offsets{0, 1, 3};
  const auto h = Payoff::call(k);
  const double v0 = oracle::tree_value(p, d, {1.0, s0, v1}, T, oracle::TreeLaw::egp, h);

  // provider: filtered variance along the realized path, then the library hedge on an enumerated tree
  HedgeProvider prov = [&](const MarketView& view, const HedgeContext& c) {
    const auto cl = view.closes();
    double v = v1;
    if (cl.size() > 1) {
      std::vector<double> y;
      for (std::size_t i = 1; i < cl.size(); ++i) y.push_back(std::log(cl[i] / cl[i - 1]));
      v = filter_variance(p, d, y, v1).variances.back();
    }
    const auto e = enumerate_two_point(p, d, c.spot(), v, c.steps_to_maturity(), KernelKind::extended_girsanov);
    LrmOptions opt;
    opt.j = c.steps_to_next();
    opt.any_horizon = true;
    return std::vector<double>{lrm_q_hedge(e, h, opt).ratio};
  };

  double worst = 0;
  for (std::size_t path = 0; path < (1u << T); ++path) {
    // oracle: walk the path, hedge each node by brute force
    std::vector<oracle::Node> nodes{{1.0, s0, v1}};
    for (std::size_t l = 0; l < T; ++l) {
      const bool up = (path >> (T - 1 - l)) & 1u;
      nodes.push_back(oracle::children(p, d, nodes.back(), oracle::TreeLaw::egp)[up ? 1 : 0]);
    }
    double gain = 0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
      const auto& nd = nodes[offsets[i]];
      const double xi = oracle::tree_q_hedge(p, d, nd.s, nd.v, T - offsets[i], gaps[i], oracle::TreeLaw::egp, h);
      gain += xi * (nodes[offsets[i] + gaps[i]].s - nd.s);
    }
    const double expected = std::abs(h(nodes[T].s) - v0 - gain) / v0;

    MarketData m;
    ContractTrack t;
    t.id = "tree";
    t.strike = k;
    const Date start = make_date(2004, 1, 5);  // Monday
    for (std::size_t l = 0; l <= T; ++l) {
      m.index.dates.push_back(start + std::chrono::days{long(l)});
      m.index.closes.push_back(nodes[l].s);
    }
    for (std::size_t i = 0; i < gaps.size(); ++i) {
      t.dates.push_back(m.index.dates[offsets[i]]);
      t.spots.push_back(nodes[offsets[i]].s);
      t.steps.push_back(gaps[i]);
    }
    t.expiry = m.index.dates[T];
    t.s_terminal = nodes[T].s;
    t.v0 = v0;
    const double got = run_replication(t, m, prov, InitMode::garch).nhe[0];
    worst = std::max(worst, std::abs(got - expected));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Replication, ScaleInvariance) {
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<double> u(-0.2, 1.2);
  auto t = straight_track(100, 95, {104, 97, 108, 111}, 5);
  t.v0 = 6.1;
  std::vector<double> xi(t.dates.size());
  for (auto& x : xi) x = u(eng);
  auto s = t;
  const double c = 7.3;
  for (auto& x : s.spots) x *= c;
  s.strike *= c, s.s_terminal *= c, s.v0 *= c;
  EXPECT_NEAR(normalized_hedging_error(s, xi), normalized_hedging_error(t, xi), 1e-13);
  EXPECT_NEAR(normalized_hedging_error(s, xi, {2e-4, true}), normalized_hedging_error(t, xi, {2e-4, true}), 1e-13);
}

TEST(Replication, ScaleInvariantAdhocBacktest) {
  const auto w = make_synthetic_market(small_world(11));
  auto scaled = w.data;
  const double c = 3.7;
  for (auto& x : scaled.index.closes) x *= c;
  for (auto& q : scaled.quotes) q.strike *= c, q.spot *= c, q.bid *= c, q.ask *= c;
  const auto a = build_tracks(w.data).tracks, b = build_tracks(scaled).tracks;
  ASSERT_EQ(a.size(), b.size());
  ASSERT_GT(a.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    const double x = run_replication(a[i], w.data, adhoc_bs_provider(), InitMode::adhoc).nhe[0];
    const double y = run_replication(b[i], scaled, adhoc_bs_provider(), InitMode::adhoc).nhe[0];
    EXPECT_NEAR(x, y, 1e-9 * std::max(1.0, x));
  }
}

TEST(Tracks, StructureOnSyntheticMarket) {
  const auto w = make_synthetic_market(small_world(5));
  const auto set = build_tracks(w.data);
  ASSERT_GT(set.tracks.size(), 20u);
  for (const auto& t : set.tracks) {
    EXPECT_NO_THROW(t.validate());
    EXPECT_LE(t.dates.back(), t.expiry);
    // t0 is the first quote that passes the filters
    for (const auto& q : w.data.quotes)
      if (q.expiry == t.expiry && q.strike == t.strike && q.quote_date < t.dates.front()) {
        EXPECT_FALSE(passes_filter(q));
      }
    EXPECT_EQ(t.steps_to_maturity(0), trading_days_between(t.dates.front(), settlement_date(t.expiry)));
    const auto it = std::find(w.data.index.dates.begin(), w.data.index.dates.end(), settlement_date(t.expiry));
    ASSERT_NE(it, w.data.index.dates.end());
    EXPECT_EQ(t.s_terminal, w.data.index.closes[std::size_t(it - w.data.index.dates.begin())]);
  }
}

TEST(NoLookAhead, PoisonedFutureLeavesHedgesUnchanged) {
  const auto w = make_synthetic_market(small_world(7));
  const auto tracks = build_tracks(w.data).tracks;
  const ContractTrack* t = nullptr;
  for (const auto& c : tracks)
    if (c.dates.size() >= 4) {
      t = &c;
      break;
    }
  ASSERT_NE(t, nullptr);
  ModelHedgerConfig mc;
  mc.params = spx_gaussian().params;
  mc.n_paths = 300;
  const auto model = model_hedger(mc);
  const auto adhoc = adhoc_bs_provider();
  for (std::size_t i = 0; i < t->dates.size(); ++i) {
    const Date now = t->dates[i];
    auto poisoned = w.data;
    for (std::size_t l = 0; l < poisoned.index.dates.size(); ++l)
      if (poisoned.index.dates[l] > now) poisoned.index.closes[l] *= 1.7;
    for (auto& q : poisoned.quotes)
      if (q.quote_date > now) q.bid *= 3, q.ask *= 3, q.spot *= 0.5;
    const MarketView clean(w.data, now), dirty(poisoned, now);
    EXPECT_EQ(dirty.closes().size(), clean.closes().size());
    for (auto init : {InitMode::garch, InitMode::adhoc}) {
      const HedgeContext ctx{*t, i, init, mc.params.r};
      EXPECT_EQ(model(clean, ctx), model(dirty, ctx)) << i;
    }
    const HedgeContext ctx{*t, i, InitMode::adhoc, mc.params.r};
    EXPECT_EQ(adhoc(clean, ctx), adhoc(dirty, ctx));
    for (const auto& q : clean.quotes_today()) EXPECT_EQ(q.quote_date, now);
    EXPECT_LE(clean.dates().back(), now);
  }
}

TEST(Bins, TiesGoToTheLowerBin) {
  const auto s = BinScheme::table();
  EXPECT_EQ(s.maturity_bin(7), 0u);
  EXPECT_EQ(s.maturity_bin(71), 0u);
  EXPECT_EQ(s.maturity_bin(72), 1u);
  EXPECT_EQ(s.maturity_bin(135), 1u);
  EXPECT_EQ(s.maturity_bin(199), 2u);
  EXPECT_EQ(s.maturity_bin(200), 2u);
  EXPECT_EQ(s.moneyness_bin(0.90), 0u);
  EXPECT_EQ(s.moneyness_bin(0.95), 0u);
  EXPECT_EQ(s.moneyness_bin(0.96), 1u);
  EXPECT_EQ(s.moneyness_bin(1.00), 2u);
  EXPECT_EQ(s.moneyness_bin(1.10), 4u);
  EXPECT_EQ(BinScheme::ten_bins().n_moneyness(), 10u);
  EXPECT_EQ(BinScheme::ten_bins().moneyness_bin(0.93), 1u);
}

TEST(Bins, SingleAndUniformPopulations) {
  const MethodKey k{Method::lrm, KernelKind::extended_girsanov, InitMode::garch};
  const std::vector<ContractResult> one{{"a", k, 1.0, 30, 0.37}};
  const auto r1 = bin_report(one);
  ASSERT_EQ(r1.tables.size(), 1u);
  EXPECT_EQ(*r1.tables[0].cells[0][2].mean(), 0.37);
  EXPECT_EQ(*r1.tables[0].total.mean(), 0.37);
  EXPECT_FALSE(r1.tables[0].cells[1][1].mean().has_value());

  std::vector<ContractResult> uni;
  std::mt19937_64 eng(1);
  std::uniform_real_distribution<double> m(0.9, 1.1), t(7, 200);
  for (int i = 0; i < 300; ++i) uni.push_back({"c", k, m(eng), long(t(eng)), 0.25});
  const auto r = bin_report(uni);
  for (const auto& row : r.tables[0].cells)
    for (const auto& c : row) {
      if (c.n) {
        EXPECT_DOUBLE_EQ(*c.mean(), 0.25);
      }
    }
  for (const auto& c : r.tables[0].by_maturity) EXPECT_DOUBLE_EQ(*c.mean(), 0.25);
  EXPECT_DOUBLE_EQ(*r.tables[0].total.mean(), 0.25);
}

TEST(Bins, KnownBinMeansAndRecombination) {
  const MethodKey k{Method::adhoc_bs, std::nullopt, std::nullopt};
  const auto s = BinScheme::table();
  const double mids[] = {0.93, 0.97, 1.01, 1.06, 1.10};
  const long mats[] = {30, 100, 170};
  std::vector<ContractResult> rows;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 5; ++b)
      for (int n = 0; n <= a + b; ++n) rows.push_back({"x", k, mids[b], mats[a], 0.1 * (a + 1) + 0.01 * b + (n % 2 ? 0.05 : -0.05)});
  const auto rep = bin_report(rows, s);
  const auto& t = rep.tables[0];
  double sum = 0;
  std::size_t cnt = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 5; ++b) {
      const std::size_t n = std::size_t(a + b + 1);
      const double expect = 0.1 * (a + 1) + 0.01 * b + (n % 2 ? -0.05 / double(n) : 0.0);
      EXPECT_EQ(t.cells[a][b].n, n);
      EXPECT_NEAR(*t.cells[a][b].mean(), expect, 1e-14);
      sum += *t.cells[a][b].mean() * double(n);
      cnt += n;
    }
  EXPECT_EQ(t.total.n, rows.size());
  EXPECT_NEAR(*t.total.mean(), sum / double(cnt), 1e-14);
  double rsum = 0;
  for (const auto& c : t.by_maturity) rsum += c.sum;
  EXPECT_EQ(rsum, t.total.sum);
}

TEST(Backtest, DeterministicAcrossThreadCounts) {
  const auto w = make_synthetic_market(small_world(9));
  BacktestConfig cfg;
  cfg.params = spx_gaussian().params;
  cfg.kernels = {KernelKind::extended_girsanov};
  cfg.n_paths = 300;
  cfg.max_contracts = 6;
  cfg.seed = 4;
  cfg.threads = 1;
  const auto a = run_backtest(w.data, cfg);
  cfg.threads = 4;
  const auto b = run_backtest(w.data, cfg);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  EXPECT_EQ(a.n_contracts, 6u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].id, b.rows[i].id);
    EXPECT_EQ(a.rows[i].nhe, b.rows[i].nhe);
  }
  // every contract lands in exactly one bin per method
  EXPECT_EQ(a.failures, 0u);
  const auto rep = bin_report(a.rows);
  for (const auto& t : rep.tables) EXPECT_EQ(t.total.n, a.n_contracts) << t.key.label();
}

TEST(Backtest, MethodRestrictionAndEmptyInput) {
  const auto w = make_synthetic_market(small_world(10));
  BacktestConfig cfg;
  cfg.params = spx_gaussian().params;
  cfg.methods = {Method::adhoc_bs, Method::no_hedge};
  cfg.max_contracts = 4;
  const auto r = run_backtest(w.data, cfg);
  for (const auto& row : r.rows) EXPECT_TRUE(row.key.method == Method::adhoc_bs || row.key.method == Method::no_hedge);
  EXPECT_EQ(r.rows.size(), 8u);
  MarketData empty;
  const auto e = run_backtest(empty, cfg);
  EXPECT_EQ(e.n_contracts, 0u);
  EXPECT_TRUE(bin_report(e.rows).tables.empty());
}
