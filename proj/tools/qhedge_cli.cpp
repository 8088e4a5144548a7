#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qhedge/estimation.hpp"
#include "qhedge/qhedge.hpp"

using namespace qhedge;

namespace {

std::string num(double x, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

KernelKind parse_kernel(const std::string& s) {
  if (s == "egp") return KernelKind::extended_girsanov;
  if (s == "esscher") return KernelKind::esscher;
  if (s == "mmm") return KernelKind::minimal_martingale;
  throw InputError("unknown kernel '" + s + "'");
}

InitMode parse_init(const std::string& s) {
  if (s == "garch") return InitMode::garch;
  if (s == "adhoc") return InitMode::adhoc;
  throw InputError("unknown init mode '" + s + "'");
}

// Writes to --out when given, else to stdout.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  auto f = io_detail::open_out(path);
  f << text;
  if (!f) throw InputError("cannot write " + path);
}

struct Common {
  std::string model;
  std::string dist = "gaussian";
  std::string kernel = "egp";
  std::size_t paths = 20000;
  std::uint64_t seed = 0;
  std::string ems = "on";
  unsigned threads = 0;
  std::string out;
};

ModelFile load_model(const Common& c) {
  if (c.model.empty()) {
    const auto p = c.dist == "nig" ? spx_nig() : spx_gaussian();
    ModelFile m;
    m.params = p.params;
    if (c.dist == "nig") {
      m.kind = InnovationKind::nig;
      m.nig_k = 1.322;
      m.nig_a = -0.144;
    }
    return m;
  }
  return read_model_json(c.model);
}

// ------------------------------------------------------------------ estimate

struct EstimateArgs {
  std::string input;
  std::string dist = "gaussian";
  double rate = kSpxDailyRate;
  unsigned threads = 0;
  std::string out;
};

// Accepts an index file (date,close) or a single "return" column.
std::vector<double> read_returns(const std::string& path) {
  auto in = io_detail::open_in(path);
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  in.seekg(0);
  if (header == "date,close") return log_returns(read_index_csv(in).closes);
  const auto rows = io_detail::read_table(in, {"return"}, path);
  std::vector<double> y;
  for (std::size_t i = 0; i < rows.size(); ++i) y.push_back(io_detail::to_double(rows[i][0], path + " row " + std::to_string(i + 2)));
  return y;
}

int cmd_estimate(const EstimateArgs& a) {
  const auto y = read_returns(a.input);
  FitConfig cfg;
  cfg.r = a.rate;
  cfg.threads = a.threads;
  if (a.dist != "gaussian" && a.dist != "nig") throw InputError("--dist must be gaussian or nig");
  const auto fitted = fit(y, a.dist == "nig" ? InnovationKind::nig : InnovationKind::gaussian, cfg);
  ModelFile m;
  m.params = fitted.params;
  m.kind = fitted.kind;
  m.nig_k = fitted.nig_k;
  m.nig_a = fitted.nig_a;
  m.loglik = fitted.log_likelihood;
  m.names = fitted.names;
  m.std_errors = fitted.std_errors;

  std::ostringstream t;
  t << "observations " << fitted.n_obs << "\nlog-likelihood " << num(fitted.log_likelihood, 12) << "\n";
  if (fitted.boundary) t << "warning: estimate on the boundary of the admissible region\n";
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %16s %16s\n", "param", "estimate", "std.err");
  t << line;
  for (std::size_t i = 0; i < fitted.names.size(); ++i) {
    std::snprintf(line, sizeof line, "%-8s %16.6e %16.6e\n", fitted.names[i].c_str(), fitted.values[i], fitted.std_errors[i]);
    t << line;
  }
  if (a.out.empty()) {
    std::cout << t.str() << model_json_text(m);
  } else {
    std::cout << t.str();
    emit(a.out, model_json_text(m));
  }
  return 0;
}

// ------------------------------------------------------------ price / hedge

struct ContractArgs {
  double spot = 100.0;
  double strike = 100.0;
  std::size_t steps = 20;
  bool put = false;
  double sigma2 = 0.0;  // next-step variance, 0 = unconditional
  std::size_t j = 1;
  bool control_variate = false;
};

SimSpec make_spec(const Common& c, const ModelFile& m, const ContractArgs& k) {
  SimSpec s;
  s.params = m.params;
  s.dist = m.dist();
  s.kernel.kind = parse_kernel(c.kernel);
  s.kernel.j = k.j;
  s.s0 = k.spot;
  s.sigma2_1 = k.sigma2 > 0.0 ? k.sigma2 : unconditional_variance(m.params);
  s.n_paths = c.paths;
  s.horizon = k.steps;
  s.seed = c.seed;
  s.threads = c.threads;
  s.ems = c.ems == "on";
  return s;
}

int cmd_price(const Common& c, const ContractArgs& k) {
  const auto m = load_model(c);
  const auto spec = make_spec(c, m, k);
  const auto e = simulate(spec);
  const auto h = k.put ? Payoff::put(k.strike) : Payoff::call(k.strike);
  const auto est = conditional_expectation(
      e, [&](const PathEnsemble& en, std::size_t i) { return h(en.price(i, en.horizon)); }, std::exp(-m.params.r * double(k.steps)));
  std::ostringstream o;
  o << "kernel " << kernel_name(e.kernel) << "\nsigma2_next " << num(*spec.sigma2_1) << "\nprice " << num(est.value) << "\nstd_error "
    << num(est.std_error) << "\n";
  if (e.rejected) o << "rejected_paths " << e.rejected << "\n";
  emit(c.out, o.str());
  return 0;
}

int cmd_hedge(const Common& c, const ContractArgs& k) {
  const auto m = load_model(c);
  HedgeRequest req;
  req.contract = {k.strike, k.steps, !k.put};
  req.spec = make_spec(c, m, k);
  req.j = k.j;
  req.control_variate = k.control_variate;
  const auto r = hedge_contract(req);
  std::ostringstream o;
  auto row = [&](const char* name, double v, std::optional<double> se = std::nullopt) {
    o << name << " " << num(v);
    if (se) o << " " << num(*se);
    o << "\n";
  };
  o << "kernel " << c.kernel << "\nquantity value std_error\n";
  row("V0", r.lrm.price, r.lrm.price_std_error);
  o << "xi_LRM(j=" << k.j << ") " << num(r.lrm.ratio) << " " << num(r.lrm.std_error) << "\n";
  if (r.lrm.negative_n_fraction) row("negative_N_fraction", *r.lrm.negative_n_fraction);
  if (r.lrm.negative_z_fraction) row("negative_Z_fraction", *r.lrm.negative_z_fraction);
  if (parse_kernel(c.kernel) != KernelKind::minimal_martingale) {
    row("Delta_S", r.delta.ratio, r.delta.std_error);
    row("Delta_sigma2", r.vega.ratio, r.vega.std_error);
    row("VM", r.delta_sv.vm.value_or(0.0));
    row("Delta_SV", r.delta_sv.ratio, r.delta_sv.std_error);
  }
  if (r.rejected) o << "rejected_paths " << r.rejected << "\n";
  emit(c.out, o.str());
  return 0;
}

// ------------------------------------------------------------------ backtest

struct BacktestArgs {
  std::string quotes, index;
  std::vector<std::string> kernels{"egp", "esscher"};
  std::vector<std::string> inits{"garch", "adhoc"};
  std::vector<std::string> methods{"AdhocBS", "LRM", "Delta", "Delta-SV"};
  std::string bins = "table";
  std::size_t max_contracts = 0;
  bool accrue_cash = false;
  bool control_variate = false;
};

int cmd_backtest(const Common& c, const BacktestArgs& a) {
  const auto m = load_model(c);
  MarketData data;
  data.index = read_index_csv(a.index);
  data.quotes = read_quotes_csv(a.quotes);
  data.sort();
  for (const auto& w : weekly_spacing_warnings(data.quotes)) std::cerr << "warning: " << w << "\n";

  BacktestConfig cfg;
  cfg.params = m.params;
  cfg.dist = m.dist();
  cfg.kernels.clear();
  for (const auto& k : a.kernels) {
    const auto kk = parse_kernel(k);
    if (kk == KernelKind::minimal_martingale) throw InputError("backtest: kernel must be egp or esscher");
    cfg.kernels.push_back(kk);
  }
  cfg.inits.clear();
  for (const auto& i : a.inits) cfg.inits.push_back(parse_init(i));
  cfg.methods.clear();
  for (const auto& s : a.methods) {
    const auto mm = parse_method(s);
    if (!mm) throw InputError("unknown method '" + s + "'");
    cfg.methods.push_back(*mm);
  }
  cfg.n_paths = c.paths;
  cfg.seed = c.seed;
  cfg.ems = c.ems == "on";
  cfg.control_variate = a.control_variate;
  cfg.accrue_cash = a.accrue_cash;
  cfg.threads = c.threads;
  cfg.max_contracts = a.max_contracts;

  const auto run = run_backtest(data, cfg);
  if (run.n_contracts == 0) std::cerr << "warning: no contracts pass the filters; the report is empty\n";
  for (const auto& l : run.log) std::cerr << "note: " << l << "\n";
  const BinScheme scheme = a.bins == "ten" ? BinScheme::ten_bins() : BinScheme::table();
  auto rep = bin_report(run.rows, scheme);
  rep.n_contracts = run.n_contracts;
  rep.failures = run.failures;

  std::ostringstream csv;
  write_report_csv(csv, rep);
  const auto table = format_report_table(rep);
  if (c.out.empty() || c.out == "-") {
    std::cout << table;
  } else {
    emit(c.out + ".csv", csv.str());
    emit(c.out + ".txt", table);
    std::ostringstream per;
    per << "contract,method,kernel,init_mode,moneyness,maturity_days,nhe\n";
    for (const auto& r : run.rows)
      per << r.id << "," << method_name(r.key.method) << "," << r.key.kernel_label() << "," << r.key.init_label() << ","
          << num(r.moneyness) << "," << r.maturity_days << "," << num(r.nhe) << "\n";
    emit(c.out + ".contracts.csv", per.str());
    std::cout << table;
  }
  return 0;
}

// --------------------------------------------------------------- limit-check

struct LimitArgs {
  double spot = 100.0;
  double sigma = 0.0;  // 0 = unconditional daily sigma
  std::vector<double> grid = default_h_grid();
};

int cmd_limit_check(const Common& c, const LimitArgs& a) {
  const auto m = load_model(c);
  const auto d = m.dist();
  const auto l = LimitParams::from_unit_step(m.params, d);
  const double sigma = a.sigma > 0.0 ? a.sigma : std::sqrt(unconditional_variance(m.params));
  const auto rows = vm_convergence_study(l, d, a.spot, sigma, a.grid, m.params.lambda, m.params.r);
  std::ostringstream o;
  o << "h,vm,limit,abs_error,rel_error\n";
  const double lim = limit_vega_multiplier(l, a.spot, sigma);
  for (const auto& r : rows) o << num(r.h) << "," << num(r.vm, 15) << "," << num(lim, 15) << "," << num(r.abs_error) << "," << num(r.rel_error) << "\n";
  emit(c.out, o.str());
  return 0;
}

// --------------------------------------------------------------------- synth

struct SynthArgs {
  std::size_t weeks = 52;
  std::size_t history = 500;
  std::size_t pricing_paths = 4000;
};

int cmd_synth(const Common& c, const SynthArgs& a) {
  const auto m = load_model(c);
  if (c.out.empty()) throw InputError("synth: --out <directory> is required");
  SynthConfig cfg;
  cfg.params = m.params;
  cfg.dist = m.dist();
  cfg.quote_weeks = a.weeks;
  cfg.history_days = a.history;
  cfg.pricing_paths = a.pricing_paths;
  cfg.seed = c.seed;
  cfg.threads = c.threads;
  const auto s = make_synthetic_market(cfg);
  std::error_code ec;
  std::filesystem::create_directories(c.out, ec);
  if (ec) throw InputError("cannot create " + c.out);
  const auto dir = std::filesystem::path(c.out);
  {
    auto f = io_detail::open_out((dir / "index.csv").string());
    write_index_csv(f, s.data.index);
  }
  {
    auto f = io_detail::open_out((dir / "quotes.csv").string());
    write_quotes_csv(f, s.data.quotes);
  }
  std::cout << "index days " << s.data.index.dates.size() << "\nquotes " << s.data.quotes.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GARCH option pricing and local risk minimization hedging"};
  app.require_subcommand(1);

  Common c;
  auto add_model = [&](CLI::App* s) {
    s->add_option("--model", c.model, "model JSON from `estimate` (default: built-in S&P 500 fit)")->check(CLI::ExistingFile);
    s->add_option("--dist", c.dist, "built-in model when --model is absent")->check(CLI::IsMember({"gaussian", "nig"}));
  };
  auto add_mc = [&](CLI::App* s) {
    add_model(s);
    s->add_option("--kernel", c.kernel)->check(CLI::IsMember({"egp", "esscher", "mmm"}));
    s->add_option("--paths", c.paths)->check(CLI::PositiveNumber);
    s->add_option("--seed", c.seed)->required();
    s->add_option("--ems", c.ems)->check(CLI::IsMember({"on", "off"}));
    s->add_option("--threads", c.threads, "0 = all cores");
    s->add_option("--out", c.out);
  };

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "fit NGARCH(1,1) by maximum likelihood");
  est->add_option("input", ea.input, "index CSV (date,close) or a CSV with a single 'return' column")->required();
  est->add_option("--dist", ea.dist)->check(CLI::IsMember({"gaussian", "nig"}));
  est->add_option("--rate", ea.rate, "daily risk-free rate");
  est->add_option("--threads", ea.threads);
  est->add_option("--out", ea.out, "model JSON path");

  ContractArgs ka;
  auto add_contract = [&](CLI::App* s) {
    s->add_option("--spot", ka.spot)->check(CLI::PositiveNumber);
    s->add_option("--strike", ka.strike)->check(CLI::PositiveNumber);
    s->add_option("--steps", ka.steps, "trading days to maturity")->check(CLI::PositiveNumber);
    s->add_flag("--put", ka.put);
    s->add_option("--sigma2", ka.sigma2, "next-day conditional variance (default: unconditional)");
    s->add_option("--j", ka.j, "rebalancing interval in steps")->check(CLI::PositiveNumber);
  };
  auto* price = app.add_subcommand("price", "Monte Carlo option price");
  add_mc(price);
  add_contract(price);
  auto* hedge = app.add_subcommand("hedge", "hedge ratios for one contract");
  add_mc(hedge);
  add_contract(hedge);
  hedge->add_flag("--control-variate", ka.control_variate);

  BacktestArgs ba;
  auto* bt = app.add_subcommand("backtest", "weekly replication backtest");
  add_mc(bt);
  bt->remove_option(bt->get_option("--kernel"));
  bt->get_option("--paths")->default_val(2000);
  bt->add_option("--quotes", ba.quotes)->required()->check(CLI::ExistingFile);
  bt->add_option("--index", ba.index)->required()->check(CLI::ExistingFile);
  bt->add_option("--kernels", ba.kernels, "egp,esscher")->delimiter(',');
  bt->add_option("--init", ba.inits)->delimiter(',')->check(CLI::IsMember({"garch", "adhoc"}));
  bt->add_option("--methods", ba.methods, "AdhocBS,LRM,Delta,Delta-SV,NoHedge")->delimiter(',');
  bt->add_option("--bins", ba.bins)->check(CLI::IsMember({"table", "ten"}));
  bt->add_option("--max-contracts", ba.max_contracts, "evenly spaced subset, 0 = all");
  bt->add_flag("--accrue-cash", ba.accrue_cash);
  bt->add_flag("--control-variate", ba.control_variate);

  LimitArgs la;
  auto* lc = app.add_subcommand("limit-check", "vega multiplier convergence to the diffusion limit");
  add_model(lc);
  lc->add_option("--spot", la.spot)->check(CLI::PositiveNumber);
  lc->add_option("--sigma", la.sigma, "daily volatility (default: unconditional)");
  lc->add_option("--grid", la.grid, "h values")->delimiter(',');
  lc->add_option("--out", c.out);

  SynthArgs sa;
  auto* sy = app.add_subcommand("synth", "GARCH-world synthetic index and option quotes");
  add_model(sy);
  sy->add_option("--seed", c.seed)->required();
  sy->add_option("--threads", c.threads);
  sy->add_option("--out", c.out, "output directory")->required();
  sy->add_option("--weeks", sa.weeks);
  sy->add_option("--history", sa.history);
  sy->add_option("--pricing-paths", sa.pricing_paths);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*est) return cmd_estimate(ea);
    if (*price) return cmd_price(c, ka);
    if (*hedge) return cmd_hedge(c, ka);
    if (*bt) return cmd_backtest(c, ba);
    if (*lc) return cmd_limit_check(c, la);
    if (*sy) return cmd_synth(c, sa);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
