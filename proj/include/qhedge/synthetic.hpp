#pragma once

// GARCH-world synthetic market: an index path simulated under P and weekly
// call quotes priced under the extended Girsanov measure at the true state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "qhedge/backtest.hpp"
#include "qhedge/garch.hpp"
#include "qhedge/mc_engine.hpp"
#include "qhedge/parallel.hpp"
#include "qhedge/random.hpp"

namespace qhedge {

struct SynthConfig {
  NgarchParams params;
  InnovationDistribution dist = InnovationDistribution::gaussian();
  Date start = make_date(2002, 1, 7);
  std::size_t history_days = 500;  // index history before the first quote date
  std::size_t quote_weeks = 52;
  double s0 = 1000.0;
  double strike_step = 10.0;
  double min_listed = 0.85;  // listed moneyness S/K range
  double max_listed = 1.15;
  std::size_t n_expiries = 7;  // monthly expiries listed at any time
  std::size_t pricing_paths = 4000;
  double half_spread = 0.01;  // relative
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct SyntheticMarket {
  MarketData data;
  std::vector<double> next_variance;  // sigma2_{t+1} known at each index date
};

/// Saturday after the third Friday of the month.
inline Date monthly_expiry(std::chrono::year_month ym) {
  using namespace std::chrono;
  const Date third_friday{ym / Friday[3]};
  return third_friday + days{1};
}

inline SyntheticMarket make_synthetic_market(const SynthConfig& cfg) {
  using namespace std::chrono;
  const auto& p = cfg.params;
  const auto& d = cfg.dist;
  SyntheticMarket out;
  auto& idx = out.data.index;

  const std::size_t n_days = cfg.history_days + 5 * cfg.quote_weeks + 230;
  auto eng = stream_engine(cfg.seed, 0);
  VarianceState st{unconditional_variance(p), 0};
  double s = cfg.s0;
  for (Date day = cfg.start; idx.dates.size() < n_days; day += days{1}) {
    if (!is_weekday(day)) continue;
    if (!idx.dates.empty()) {
      const auto r = step_p(p, d, st, d.draw(eng));
      s *= std::exp(r.log_return);
      st = r.next;
    }
    idx.dates.push_back(day);
    idx.closes.push_back(s);
    out.next_variance.push_back(st.sigma2);
  }

  struct Job {
    std::size_t t;  // index position of the quote date
    Date expiry;
  };
  std::vector<Job> jobs;
  for (std::size_t t = cfg.history_days; t < idx.dates.size(); ++t) {
    if (weekday{idx.dates[t]} != Wednesday) continue;
    if (jobs.size() && calendar_days(idx.dates[jobs.front().t], idx.dates[t]) >= long(7 * cfg.quote_weeks)) break;
    const year_month_day ymd{idx.dates[t]};
    auto ym = ymd.year() / ymd.month();
    for (std::size_t k = 0, listed = 0; listed < cfg.n_expiries && k < 24; ++k, ym += months{1}) {
      const Date e = monthly_expiry(ym);
      if (settlement_date(e) <= idx.dates[t]) continue;
      jobs.push_back({t, e});
      ++listed;
    }
  }

  std::vector<std::vector<OptionQuote>> quotes(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
    const auto& job = jobs[j];
    const Date today = idx.dates[job.t];
    const double spot = idx.closes[job.t];
    SimSpec spec;
    spec.params = p;
    spec.dist = d;
    spec.s0 = spot;
    spec.sigma2_1 = out.next_variance[job.t];
    spec.n_paths = cfg.pricing_paths;
    spec.horizon = trading_days_between(today, settlement_date(job.expiry));
    spec.seed = splitmix64(cfg.seed ^ (std::uint64_t(job.t) << 20) ^ std::uint64_t(job.expiry.time_since_epoch().count()));
    spec.threads = 1;
    spec.ems = true;
    const auto e = simulate(spec);
    const double disc = std::exp(-p.r * double(spec.horizon));
    auto flow = stream_engine(spec.seed, 1);
    std::uniform_int_distribution<long> vol(0, 3000), oi(0, 8000);
    const double k_lo = std::ceil(spot / cfg.max_listed / cfg.strike_step) * cfg.strike_step;
    for (double k = k_lo; spot / k >= cfg.min_listed; k += cfg.strike_step) {
      double sum = 0.0;
      for (std::size_t i = 0; i < e.n_paths; ++i) sum += std::max(e.price(i, e.horizon) - k, 0.0);
      const double price = disc * sum / double(e.n_paths);
      OptionQuote q;
      q.quote_date = today;
      q.expiry = job.expiry;
      q.strike = k;
      q.bid = price * (1.0 - cfg.half_spread);
      q.ask = price * (1.0 + cfg.half_spread);
      q.volume = vol(flow);
      q.open_interest = oi(flow);
      q.spot = spot;
      if (price >= 0.05) quotes[j].push_back(q);
    }
  });
  for (auto& q : quotes) out.data.quotes.insert(out.data.quotes.end(), q.begin(), q.end());
  out.data.sort();
  return out;
}

}  // namespace qhedge
