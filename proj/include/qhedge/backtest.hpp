#pragma once

// Option-quote ingestion types, contract filters, the Ad-hoc Black-Scholes
// surface, self-financing replication with NHE, and binned reports.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qhedge/black_scholes.hpp"
#include "qhedge/error.hpp"
#include "qhedge/garch.hpp"
#include "qhedge/hedging.hpp"
#include "qhedge/mc_engine.hpp"
#include "qhedge/parallel.hpp"
#include "qhedge/random.hpp"

namespace qhedge {

// ------------------------------------------------------------------ dates

using Date = std::chrono::sys_days;

inline Date make_date(int y, unsigned m, unsigned d) {
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw InputError("invalid date");
  return Date{ymd};
}

/// YYYY-MM-DD.
inline Date parse_date(std::string_view s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  const std::string str(s);
  if (s.size() != 10 || std::sscanf(str.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
    throw InputError("bad date '" + str + "', expected YYYY-MM-DD");
  return make_date(y, m, d);
}

inline std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

inline bool is_weekday(Date d) {
  const std::chrono::weekday w{d};
  return w != std::chrono::Saturday && w != std::chrono::Sunday;
}

inline long calendar_days(Date from, Date to) { return (to - from).count(); }

/// Last weekday on or before d.
inline Date settlement_date(Date d) {
  while (!is_weekday(d)) d -= std::chrono::days{1};
  return d;
}

/// Weekdays in (from, to]; model steps are trading days on a weekday calendar.
inline std::size_t trading_days_between(Date from, Date to) {
  std::size_t n = 0;
  for (Date d = from + std::chrono::days{1}; d <= to; d += std::chrono::days{1})
    if (is_weekday(d)) ++n;
  return n;
}

// ----------------------------------------------------------------- quotes

struct OptionQuote {
  Date quote_date{};
  Date expiry{};
  double strike = 0.0;
  double bid = 0.0;
  double ask = 0.0;
  long volume = 0;
  long open_interest = 0;
  double spot = 0.0;

  double mid() const { return 0.5 * (bid + ask); }
  long maturity_days() const { return calendar_days(quote_date, expiry); }
  double moneyness() const { return spot / strike; }

  void validate() const {
    if (!(strike > 0.0) || !(spot > 0.0)) throw InputError("quote: strike and spot must be > 0");
    if (!(bid <= ask) || !(bid >= 0.0)) throw InputError("quote: need 0 <= bid <= ask");
  }
};

struct FilterRules {
  long min_days = 7;
  long max_days = 200;
  double min_moneyness = 0.9;
  double max_moneyness = 1.1;
  long volume_above = 200;  // strict
  long min_open_interest = 500;
};

inline bool passes_filter(const OptionQuote& q, const FilterRules& f = {}) {
  const long m = q.maturity_days();
  const double x = q.moneyness();
  return m >= f.min_days && m <= f.max_days && x >= f.min_moneyness && x <= f.max_moneyness && q.volume > f.volume_above &&
         q.open_interest >= f.min_open_interest;
}

inline std::vector<OptionQuote> filter_contracts(std::span<const OptionQuote> quotes, const FilterRules& f = {}) {
  std::vector<OptionQuote> out;
  for (const auto& q : quotes)
    if (passes_filter(q, f)) out.push_back(q);
  return out;
}

/// Contract timing at a quote date: calendar tau in years, model steps to
/// settlement, and the annual rate matching e^{-r_daily steps}.
struct Maturity {
  long days = 0;
  double tau = 0.0;
  std::size_t steps = 0;
  double rate = 0.0;
};

inline Maturity maturity_of(Date on, Date expiry, double r_daily) {
  Maturity m;
  m.days = calendar_days(on, expiry);
  m.tau = double(m.days) / 365.0;
  m.steps = trading_days_between(on, settlement_date(expiry));
  m.rate = m.tau > 0.0 ? r_daily * double(m.steps) / m.tau : 0.0;
  return m;
}

// -------------------------------------------------------- Ad-hoc surface

struct SurfacePoint {
  double strike = 0.0;
  double tau = 0.0;  // years
  double price = 0.0;
  double spot = 0.0;
  double rate = 0.0;  // annual, continuously compounded
  bool call = true;
};

/// sigma(K, T) = a0 + a1 K + a2 K^2 + a3 T + a4 T^2 + a5 K T, floored at 1e-4.
/// (K, T) outside the fitted quotes' range is clamped to it.
struct AdhocSurface {
  std::array<double, 6> coef{};
  double k_min = -INFINITY, k_max = INFINITY;
  double t_min = -INFINITY, t_max = INFINITY;
  std::size_t n_used = 0;
  std::size_t n_dropped = 0;  // failed inversions

  double raw(double k, double t) const {
    return coef[0] + coef[1] * k + coef[2] * k * k + coef[3] * t + coef[4] * t * t + coef[5] * k * t;
  }
  double operator()(double k, double t) const {
    return std::max(raw(std::clamp(k, k_min, k_max), std::clamp(t, t_min, t_max)), 1e-4);
  }

  static AdhocSurface flat(double vol) {
    AdhocSurface s;
    s.coef[0] = vol;
    return s;
  }
};

inline AdhocSurface fit_adhoc_surface(std::span<const SurfacePoint> pts) {
  std::vector<std::array<double, 3>> rows;  // K, T, iv
  std::size_t dropped = 0;
  for (const auto& p : pts) {
    try {
      rows.push_back({p.strike, p.tau, implied_vol(p.price, p.spot, p.strike, p.tau, p.rate, p.call)});
    } catch (const InversionError&) {
      ++dropped;
    }
  }
  if (rows.size() < 6)
    throw InsufficientDataError("adhoc_bs_surface: " + std::to_string(rows.size()) + " valid quotes, need 6");
  const Eigen::Index n = Eigen::Index(rows.size());
  Eigen::MatrixXd x(n, 6);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double k = rows[i][0], t = rows[i][1];
    x.row(i) << 1.0, k, k * k, t, t * t, k * t;
    y(i) = rows[i][2];
  }
  // column scaling keeps K^2 ~ 1e6 from swamping the QR
  Eigen::VectorXd scale = x.cwiseAbs().colwise().maxCoeff().transpose();
  for (Eigen::Index c = 0; c < 6; ++c)
    if (scale(c) == 0.0) scale(c) = 1.0;
  const Eigen::MatrixXd xs = x * scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
  qr.setThreshold(1e-9);  // too few distinct maturities leave T^2 collinear
  const Eigen::VectorXd b = qr.solve(y).cwiseQuotient(scale);
  AdhocSurface s;
  for (int c = 0; c < 6; ++c) s.coef[c] = std::isfinite(b(c)) ? b(c) : 0.0;
  s.k_min = x.col(1).minCoeff(), s.k_max = x.col(1).maxCoeff();
  s.t_min = x.col(3).minCoeff(), s.t_max = x.col(3).maxCoeff();
  s.n_used = rows.size();
  s.n_dropped = dropped;
  return s;
}

/// Surface from one date's cross-section of call quotes (mid prices).
inline AdhocSurface adhoc_bs_surface(std::span<const OptionQuote> quotes, double r_daily) {
  std::vector<SurfacePoint> pts;
  for (const auto& q : quotes) {
    const auto m = maturity_of(q.quote_date, q.expiry, r_daily);
    if (m.steps == 0) continue;
    pts.push_back({q.strike, m.tau, q.mid(), q.spot, m.rate, true});
  }
  return fit_adhoc_surface(pts);
}

inline double adhoc_bs_delta(const AdhocSurface& s, double spot, double k, double t, double r, bool call = true) {
  return bs_delta(spot, k, t, r, s(k, t), call);
}

// ---------------------------------------------------------------- market

struct IndexSeries {
  std::vector<Date> dates;
  std::vector<double> closes;
};

struct MarketData {
  IndexSeries index;
  std::vector<OptionQuote> quotes;  // sorted by quote date

  void sort() {
    std::stable_sort(quotes.begin(), quotes.end(),
                     [](const OptionQuote& a, const OptionQuote& b) { return a.quote_date < b.quote_date; });
  }
};

/// Read-only window on the market as of one date: index closes and option
/// quotes dated on or before it, nothing later.
class MarketView {
 public:
  MarketView(const MarketData& m, Date asof) : m_(&m), asof_(asof) {
    const auto& d = m.index.dates;
    n_index_ = std::size_t(std::upper_bound(d.begin(), d.end(), asof) - d.begin());
    auto cmp_lo = [](const OptionQuote& q, Date x) { return q.quote_date < x; };
    auto lo = std::lower_bound(m.quotes.begin(), m.quotes.end(), asof, cmp_lo);
    auto hi = lo;
    while (hi != m.quotes.end() && hi->quote_date == asof) ++hi;
    q_begin_ = std::size_t(lo - m.quotes.begin());
    q_end_ = std::size_t(hi - m.quotes.begin());
  }

  Date asof() const { return asof_; }
  std::span<const double> closes() const { return {m_->index.closes.data(), n_index_}; }
  std::span<const Date> dates() const { return {m_->index.dates.data(), n_index_}; }
  std::span<const OptionQuote> quotes_today() const { return {m_->quotes.data() + q_begin_, q_end_ - q_begin_}; }

  double close() const {
    if (n_index_ == 0 || m_->index.dates[n_index_ - 1] != asof_)
      throw MissingQuoteError("no index close on " + format_date(asof_));
    return m_->index.closes[n_index_ - 1];
  }

 private:
  const MarketData* m_;
  Date asof_;
  std::size_t n_index_ = 0, q_begin_ = 0, q_end_ = 0;
};

// ---------------------------------------------------------------- tracks

/// One contract hedged at t_0 .. t_K and settled at expiry. steps[i] is the
/// number of model steps from t_i to t_{i+1} (the last entry runs to
/// settlement).
struct ContractTrack {
  std::string id;
  double strike = 0.0;
  bool call = true;
  Date expiry{};
  std::vector<Date> dates;
  std::vector<double> spots;
  std::vector<std::size_t> steps;
  double v0 = 0.0;
  double s_terminal = 0.0;

  double payoff() const { return call ? std::max(s_terminal - strike, 0.0) : std::max(strike - s_terminal, 0.0); }
  double moneyness() const { return spots.front() / strike; }
  long maturity_days() const { return calendar_days(dates.front(), expiry); }
  std::size_t steps_to_maturity(std::size_t i) const {
    std::size_t n = 0;
    for (std::size_t l = i; l < steps.size(); ++l) n += steps[l];
    return n;
  }

  void validate() const {
    if (dates.empty() || spots.size() != dates.size() || steps.size() != dates.size())
      throw InputError("track " + id + ": dates, spots and steps must align");
    for (std::size_t i = 1; i < dates.size(); ++i)
      if (!(dates[i - 1] < dates[i])) throw InputError("track " + id + ": dates must increase strictly");
    if (dates.back() > expiry) throw InputError("track " + id + ": rebalance after expiry");
    for (auto s : steps)
      if (s == 0) throw InputError("track " + id + ": zero-length rebalance interval");
    if (!(v0 > 0.0)) throw InputError("track " + id + ": V0 must be > 0");
  }
};

inline std::string contract_id(Date expiry, double strike) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s:%.4f", format_date(expiry).c_str(), strike);
  return buf;
}

struct TrackSet {
  std::vector<ContractTrack> tracks;
  std::vector<std::string> skipped;  // contract id and reason
};

/// Groups quotes into contracts. A contract starts at its first quote that
/// passes the filters and is rebalanced on every later quote date before
/// expiry; S_T is the index close at settlement.
inline TrackSet build_tracks(const MarketData& m, const FilterRules& rules = {}) {
  std::map<std::pair<Date, double>, std::vector<const OptionQuote*>> groups;
  for (const auto& q : m.quotes) groups[{q.expiry, q.strike}].push_back(&q);
  TrackSet out;
  for (auto& [key, qs] : groups) {
    std::stable_sort(qs.begin(), qs.end(), [](auto a, auto b) { return a->quote_date < b->quote_date; });
    auto first = std::find_if(qs.begin(), qs.end(), [&](auto q) { return passes_filter(*q, rules); });
    if (first == qs.end()) continue;
    ContractTrack t;
    t.id = contract_id(key.first, key.second);
    t.expiry = key.first;
    t.strike = key.second;
    t.v0 = (*first)->mid();
    for (auto it = first; it != qs.end(); ++it) {
      const auto* q = *it;
      if (q->quote_date >= settlement_date(t.expiry)) break;
      if (!t.dates.empty() && q->quote_date == t.dates.back()) continue;
      t.dates.push_back(q->quote_date);
      t.spots.push_back(q->spot);
    }
    if (t.dates.empty()) continue;
    const Date settle = settlement_date(t.expiry);
    for (std::size_t i = 0; i < t.dates.size(); ++i)
      t.steps.push_back(trading_days_between(t.dates[i], i + 1 < t.dates.size() ? t.dates[i + 1] : settle));
    const auto& d = m.index.dates;
    auto it = std::upper_bound(d.begin(), d.end(), settle);
    if (it == d.begin() || calendar_days(*(it - 1), settle) > 4 || *(it - 1) <= t.dates.back()) {
      out.skipped.push_back(t.id + ": no index close at settlement " + format_date(settle));
      continue;
    }
    t.s_terminal = m.index.closes[std::size_t(it - d.begin()) - 1];
    try {
      t.validate();
    } catch (const InputError& e) {
      out.skipped.push_back(e.what());
      continue;
    }
    out.tracks.push_back(std::move(t));
  }
  return out;
}

// ----------------------------------------------------------- replication

enum class InitMode { garch, adhoc };

inline std::string init_name(InitMode m) { return m == InitMode::garch ? "garch" : "adhoc"; }

struct HedgeContext {
  const ContractTrack& track;
  std::size_t i;  // rebalance index: the provider sets xi_{t_{i+1}} at t_i
  InitMode init;
  double r_daily;

  double spot() const { return track.spots[i]; }
  std::size_t steps_to_maturity() const { return track.steps_to_maturity(i); }
  std::size_t steps_to_next() const { return track.steps[i]; }
  double tau() const { return double(calendar_days(track.dates[i], track.expiry)) / 365.0; }
  double annual_rate() const { return tau() > 0.0 ? r_daily * double(steps_to_maturity()) / tau() : 0.0; }
};

/// Returns one hedge ratio per output the provider computes.
using HedgeProvider = std::function<std::vector<double>(const MarketView&, const HedgeContext&)>;

struct ReplicationConfig {
  double r_daily = 0.0;
  bool accrue_cash = false;  // grow the cash account at r between rebalances
};

/// |H - V0 - sum_i xi_{i+1} (S_{i+1} - S_i)| / V0 with S_{K+1} = S_T. With
/// accrue_cash the cash account V - xi S earns e^{r steps} over each interval.
inline double normalized_hedging_error(const ContractTrack& t, std::span<const double> ratios, const ReplicationConfig& cfg = {}) {
  if (ratios.size() != t.dates.size()) throw ParamError("nhe: need one ratio per rebalance date");
  const std::size_t k = t.dates.size();
  auto spot_at = [&](std::size_t i) { return i < k ? t.spots[i] : t.s_terminal; };
  double value = t.v0;
  for (std::size_t i = 0; i < k; ++i) {
    const double s0 = spot_at(i), s1 = spot_at(i + 1);
    if (cfg.accrue_cash) {
      const double cash = value - ratios[i] * s0;
      value = ratios[i] * s1 + cash * std::exp(cfg.r_daily * double(t.steps[i]));
    } else {
      value += ratios[i] * (s1 - s0);
    }
  }
  return std::abs(t.payoff() - value) / t.v0;
}

struct ReplicationResult {
  std::vector<double> nhe;                  // per provider output
  std::vector<std::vector<double>> ratios;  // [output][rebalance]
};

inline ReplicationResult run_replication(const ContractTrack& t, const MarketData& m, const HedgeProvider& provider, InitMode init,
                                         const ReplicationConfig& cfg = {}) {
  t.validate();
  for (double s : t.spots)
    if (!(s > 0.0) || !std::isfinite(s)) throw MissingQuoteError("track " + t.id + ": missing spot at a rebalance date");
  if (!(t.s_terminal > 0.0) || !std::isfinite(t.s_terminal))
    throw MissingQuoteError("track " + t.id + ": missing settlement price");
  ReplicationResult out;
  for (std::size_t i = 0; i < t.dates.size(); ++i) {
    const MarketView view(m, t.dates[i]);
    const auto xi = provider(view, HedgeContext{t, i, init, cfg.r_daily});
    if (i == 0) out.ratios.assign(xi.size(), std::vector<double>(t.dates.size()));
    if (xi.size() != out.ratios.size()) throw ParamError("run_replication: provider changed its output count");
    for (std::size_t o = 0; o < xi.size(); ++o) {
      if (!std::isfinite(xi[o])) throw NonFiniteError("run_replication: non-finite hedge ratio");
      out.ratios[o][i] = xi[o];
    }
  }
  for (const auto& r : out.ratios) out.nhe.push_back(normalized_hedging_error(t, r, cfg));
  return out;
}

// -------------------------------------------------------------- providers

inline HedgeProvider no_hedge_provider() {
  return [](const MarketView&, const HedgeContext&) { return std::vector<double>{0.0}; };
}

/// Ad-hoc surface from the filtered cross-section quoted on the view date.
inline AdhocSurface surface_at(const MarketView& v, double r_daily, const FilterRules& rules) {
  std::vector<OptionQuote> qs;
  for (const auto& q : v.quotes_today())
    if (passes_filter(q, rules)) qs.push_back(q);
  return adhoc_bs_surface(qs, r_daily);
}

inline HedgeProvider adhoc_bs_provider(FilterRules rules = {}) {
  return [rules](const MarketView& v, const HedgeContext& c) {
    const auto s = surface_at(v, c.r_daily, rules);
    return std::vector<double>{adhoc_bs_delta(s, c.spot(), c.track.strike, c.tau(), c.annual_rate(), c.track.call)};
  };
}

struct ModelHedgerConfig {
  NgarchParams params;
  InnovationDistribution dist = InnovationDistribution::gaussian();
  KernelKind kernel = KernelKind::extended_girsanov;
  std::size_t n_paths = 2000;
  std::uint64_t seed = 0;
  bool ems = true;
  bool control_variate = false;
  FilterRules rules;
};

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

/// (sigma2_0, eps_0) for the last observed return: the filtered GARCH
/// variance, or the Ad-hoc implied variance per step with eps_0 backed out
/// of that return.
inline std::pair<double, double> initial_state(const ModelHedgerConfig& cfg, const MarketView& v, const HedgeContext& c) {
  const auto closes = v.closes();
  if (closes.size() < 2) throw InsufficientDataError("model hedge: need index history before " + format_date(v.asof()));
  std::vector<double> y(closes.size() - 1);
  for (std::size_t i = 1; i < closes.size(); ++i) y[i - 1] = std::log(closes[i] / closes[i - 1]);
  const auto& p = cfg.params;
  if (c.init == InitMode::garch) {
    const auto f = filter_variance(p, cfg.dist, y, unconditional_variance(p));
    return {f.variances[y.size() - 1], f.innovations.back()};
  }
  const double iv = surface_at(v, c.r_daily, cfg.rules)(c.track.strike, c.tau());
  const double s2 = iv * iv * c.tau() / double(c.steps_to_maturity());
  const double sig = std::sqrt(s2);
  if (!cfg.dist.in_cgf_domain(sig)) throw DomainError("model hedge: Ad-hoc volatility outside the CGF domain");
  return {s2, (y.back() - p.r - p.lambda * sig + cfg.dist.cgf_value(sig)) / sig};
}

/// Outputs {LRM (j = steps to the next rebalance), Delta_S, Delta-SV}, all
/// from one ensemble. The seed depends on the contract and date only, so
/// the two init modes and kernels share random numbers.
inline HedgeProvider model_hedger(ModelHedgerConfig cfg) {
  return [cfg](const MarketView& v, const HedgeContext& c) {
    const auto [s2, eps0] = initial_state(cfg, v, c);
    SimSpec spec;
    spec.params = cfg.params;
    spec.dist = cfg.dist;
    spec.kernel.kind = cfg.kernel;
    spec.s0 = c.spot();
    spec.sigma2_0 = s2;
    spec.eps0 = eps0;
    spec.n_paths = cfg.n_paths;
    spec.horizon = c.steps_to_maturity();
    spec.seed = splitmix64(cfg.seed ^ fnv1a(c.track.id) ^ (std::uint64_t(c.i) << 40));
    spec.threads = 1;
    spec.ems = cfg.ems;
    const auto e = simulate(spec);
    const auto h = c.track.call ? Payoff::call(c.track.strike) : Payoff::put(c.track.strike);
    LrmOptions opt;
    opt.j = c.steps_to_next();
    opt.any_horizon = true;
    opt.control_variate = cfg.control_variate;
    return std::vector<double>{lrm_q_hedge(e, h, opt).ratio, delta_s(e, h).ratio, delta_sv(e, h).ratio};
  };
}

// ---------------------------------------------------------------- report

enum class Method { adhoc_bs, lrm, delta, delta_sv, no_hedge };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::adhoc_bs: return "AdhocBS";
    case Method::lrm: return "LRM";
    case Method::delta: return "Delta";
    case Method::delta_sv: return "Delta-SV";
    case Method::no_hedge: return "NoHedge";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (auto m : {Method::adhoc_bs, Method::lrm, Method::delta, Method::delta_sv, Method::no_hedge})
    if (method_name(m) == s) return m;
  return std::nullopt;
}

inline bool model_based(Method m) { return m == Method::lrm || m == Method::delta || m == Method::delta_sv; }

struct MethodKey {
  Method method = Method::no_hedge;
  std::optional<KernelKind> kernel;  // model-based methods only
  std::optional<InitMode> init;

  std::string label() const {
    std::string s = method_name(method);
    if (init == InitMode::adhoc) s += "-Adhoc";
    return s;
  }
  std::string kernel_label() const { return kernel ? kernel_short_name(*kernel) : "-"; }
  std::string init_label() const { return init ? init_name(*init) : "-"; }

  static std::string kernel_short_name(KernelKind k) {
    switch (k) {
      case KernelKind::extended_girsanov: return "egp";
      case KernelKind::esscher: return "esscher";
      case KernelKind::minimal_martingale: return "mmm";
    }
    return "?";
  }

  auto order() const { return std::tuple{int(method), kernel ? int(*kernel) : -1, init ? int(*init) : -1}; }
  bool operator<(const MethodKey& o) const { return order() < o.order(); }
  bool operator==(const MethodKey& o) const { return order() == o.order(); }
};

struct ContractResult {
  std::string id;
  MethodKey key;
  double moneyness = 0.0;  // S_0 / K
  long maturity_days = 0;
  double nhe = 0.0;
};

/// Upper-closed bins, ties to the lower bin; values beyond the outer edges
/// go to the nearest edge bin.
struct BinScheme {
  std::vector<double> moneyness_edges{0.91, 0.95, 0.99, 1.04, 1.08, 1.12};
  std::vector<double> maturity_edges{7, 71, 135, 199};

  static BinScheme table() { return {}; }
  static BinScheme ten_bins() {
    BinScheme s;
    s.moneyness_edges.clear();
    for (int i = 0; i <= 10; ++i) s.moneyness_edges.push_back(0.9 + 0.02 * i);
    return s;
  }

  std::size_t n_moneyness() const { return moneyness_edges.size() - 1; }
  std::size_t n_maturity() const { return maturity_edges.size() - 1; }

  static std::size_t locate(const std::vector<double>& edges, double x) {
    const std::size_t n = edges.size() - 1;
    for (std::size_t b = 0; b + 1 < n; ++b)
      if (x <= edges[b + 1]) return b;
    return n - 1;
  }
  std::size_t moneyness_bin(double m) const { return locate(moneyness_edges, m); }
  std::size_t maturity_bin(long days) const { return locate(maturity_edges, double(days)); }

  static std::string range_label(const std::vector<double>& e, std::size_t b, int prec) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "[%.*f,%.*f]", prec, e[b], prec, e[b + 1]);
    return buf;
  }
  std::string moneyness_label(std::size_t b) const { return range_label(moneyness_edges, b, 2); }
  std::string maturity_label(std::size_t b) const { return range_label(maturity_edges, b, 0); }
};

struct BinCell {
  std::size_t n = 0;
  double sum = 0.0;
  std::optional<double> mean() const { return n ? std::optional<double>(sum / double(n)) : std::nullopt; }
};

struct MethodTable {
  MethodKey key;
  std::vector<std::vector<BinCell>> cells;  // [maturity][moneyness]
  std::vector<BinCell> by_maturity;         // row averages
  std::vector<BinCell> by_moneyness;        // column averages
  BinCell total;
};

struct BacktestReport {
  BinScheme scheme;
  std::vector<MethodTable> tables;
  std::size_t n_contracts = 0;
  std::size_t failures = 0;
  std::string tie_rule = "bin edges are upper-closed; ties go to the lower bin; outliers go to the nearest edge bin";

  const MethodTable* find(const MethodKey& k) const {
    for (const auto& t : tables)
      if (t.key == k) return &t;
    return nullptr;
  }
};

/// Row, column and total averages pool contracts, so they are count-weighted
/// recombinations of the cells.
inline BacktestReport bin_report(std::span<const ContractResult> rows, const BinScheme& scheme = {}) {
  BacktestReport rep;
  rep.scheme = scheme;
  std::map<MethodKey, MethodTable> acc;
  for (const auto& r : rows) {
    auto& t = acc[r.key];
    if (t.cells.empty()) {
      t.key = r.key;
      t.cells.assign(scheme.n_maturity(), std::vector<BinCell>(scheme.n_moneyness()));
    }
    auto& c = t.cells[scheme.maturity_bin(r.maturity_days)][scheme.moneyness_bin(r.moneyness)];
    ++c.n;
    c.sum += r.nhe;
  }
  for (auto& [k, t] : acc) {
    t.by_maturity.assign(scheme.n_maturity(), {});
    t.by_moneyness.assign(scheme.n_moneyness(), {});
    for (std::size_t a = 0; a < scheme.n_maturity(); ++a)
      for (std::size_t b = 0; b < scheme.n_moneyness(); ++b) {
        const auto& c = t.cells[a][b];
        t.by_maturity[a].n += c.n, t.by_maturity[a].sum += c.sum;
        t.by_moneyness[b].n += c.n, t.by_moneyness[b].sum += c.sum;
      }
    for (const auto& c : t.by_maturity) t.total.n += c.n, t.total.sum += c.sum;
    rep.tables.push_back(std::move(t));
  }
  return rep;
}

// -------------------------------------------------------------- backtest

struct BacktestConfig {
  NgarchParams params;
  InnovationDistribution dist = InnovationDistribution::gaussian();
  std::vector<KernelKind> kernels{KernelKind::extended_girsanov, KernelKind::esscher};
  std::vector<InitMode> inits{InitMode::garch, InitMode::adhoc};
  std::vector<Method> methods{Method::adhoc_bs, Method::lrm, Method::delta, Method::delta_sv, Method::no_hedge};
  std::size_t n_paths = 2000;
  std::uint64_t seed = 0;
  bool ems = true;
  bool control_variate = false;
  bool accrue_cash = false;
  unsigned threads = 0;
  std::size_t max_contracts = 0;  // 0 = all; otherwise an evenly spaced subset
  FilterRules rules;
};

struct BacktestRun {
  std::vector<ContractResult> rows;
  std::size_t n_contracts = 0;
  std::size_t failures = 0;
  std::vector<std::string> log;  // skipped tracks and failed (contract, method) pairs
};

inline std::vector<ContractTrack> select_tracks(std::vector<ContractTrack> all, std::size_t max) {
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return std::tuple{a.dates.front(), a.expiry, a.strike} < std::tuple{b.dates.front(), b.expiry, b.strike};
  });
  if (max == 0 || all.size() <= max) return all;
  std::vector<ContractTrack> out;
  for (std::size_t i = 0; i < max; ++i) out.push_back(all[i * all.size() / max]);
  return out;
}

/// Contracts run in parallel; each writes its own slot, so the output does
/// not depend on the worker count.
inline BacktestRun run_backtest(const MarketData& market, const BacktestConfig& cfg) {
  auto set = build_tracks(market, cfg.rules);
  const auto tracks = select_tracks(std::move(set.tracks), cfg.max_contracts);
  auto wants = [&](Method m) { return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end(); };
  const bool any_model = wants(Method::lrm) || wants(Method::delta) || wants(Method::delta_sv);
  const ReplicationConfig rc{cfg.params.r, cfg.accrue_cash};

  struct Slot {
    std::vector<ContractResult> rows;
    std::vector<std::string> log;
    std::size_t failures = 0;
  };
  std::vector<Slot> slots(tracks.size());
  parallel_for(tracks.size(), cfg.threads, [&](std::size_t ci) {
    const auto& t = tracks[ci];
    auto& slot = slots[ci];
    auto record = [&](const MethodKey& k, double nhe) { slot.rows.push_back({t.id, k, t.moneyness(), t.maturity_days(), nhe}); };
    auto attempt = [&](const std::string& what, auto&& body) {
      try {
        body();
      } catch (const Error& e) {
        ++slot.failures;
        slot.log.push_back(t.id + " " + what + ": " + e.what());
      }
    };
    if (wants(Method::adhoc_bs))
      attempt("AdhocBS", [&] {
        record({Method::adhoc_bs, std::nullopt, std::nullopt},
               run_replication(t, market, adhoc_bs_provider(cfg.rules), InitMode::adhoc, rc).nhe[0]);
      });
    if (any_model)
      for (auto k : cfg.kernels)
        for (auto init : cfg.inits)
          attempt(MethodKey::kernel_short_name(k) + "/" + init_name(init), [&] {
            ModelHedgerConfig mc{cfg.params, cfg.dist, k, cfg.n_paths, cfg.seed, cfg.ems, cfg.control_variate, cfg.rules};
            const auto r = run_replication(t, market, model_hedger(mc), init, rc);
            const Method order[] = {Method::lrm, Method::delta, Method::delta_sv};
            for (int o = 0; o < 3; ++o)
              if (wants(order[o])) record({order[o], k, init}, r.nhe[o]);
          });
    if (wants(Method::no_hedge))
      attempt("NoHedge", [&] {
        record({Method::no_hedge, std::nullopt, std::nullopt},
               run_replication(t, market, no_hedge_provider(), InitMode::garch, rc).nhe[0]);
      });
  });

  BacktestRun run;
  run.n_contracts = tracks.size();
  run.log = std::move(set.skipped);
  for (auto& s : slots) {
    run.rows.insert(run.rows.end(), s.rows.begin(), s.rows.end());
    run.log.insert(run.log.end(), s.log.begin(), s.log.end());
    run.failures += s.failures;
  }
  return run;
}

inline double mean_nhe(std::span<const ContractResult> rows, const MethodKey& k) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (r.key == k) s += r.nhe, ++n;
  return n ? s / double(n) : NAN;
}

}  // namespace qhedge
