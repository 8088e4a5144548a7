#pragma once

// CSV and JSON formats: option quotes, index closes, fitted models and
// backtest reports.

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "qhedge/backtest.hpp"
#include "qhedge/distributions.hpp"
#include "qhedge/garch.hpp"

namespace qhedge {

namespace io_detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t"), e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? "" : f.substr(b, e - b + 1);
  }
  return out;
}

inline double to_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(where + ": bad number '" + s + "'");
  }
}

inline long to_long(const std::string& s, const std::string& where) {
  const double v = to_double(s, where);
  if (v != std::floor(v)) throw InputError(where + ": expected an integer, got '" + s + "'");
  return long(v);
}

/// Reads a CSV whose header must start with the given columns.
inline std::vector<std::vector<std::string>> read_table(std::istream& in, const std::vector<std::string>& columns,
                                                        const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw InputError(what + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < columns.size() || !std::equal(columns.begin(), columns.end(), header.begin()))
    throw InputError(what + ": header must be " + [&] {
      std::string h;
      for (const auto& c : columns) h += (h.empty() ? "" : ",") + c;
      return h;
    }());
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = split_csv_line(line);
    if (f.size() < columns.size()) throw InputError(what + " line " + std::to_string(lineno) + ": too few fields");
    rows.push_back(std::move(f));
  }
  return rows;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << std::setprecision(17);
  return out;
}

}  // namespace io_detail

// ----------------------------------------------------------------- index

inline IndexSeries read_index_csv(std::istream& in) {
  IndexSeries s;
  for (const auto& f : io_detail::read_table(in, {"date", "close"}, "index csv")) {
    s.dates.push_back(parse_date(f[0]));
    s.closes.push_back(io_detail::to_double(f[1], "index csv"));
    if (!(s.closes.back() > 0.0)) throw InputError("index csv: close must be > 0 on " + f[0]);
    if (s.dates.size() > 1 && !(s.dates[s.dates.size() - 2] < s.dates.back()))
      throw InputError("index csv: dates must increase strictly at " + f[0]);
  }
  return s;
}

inline IndexSeries read_index_csv(const std::string& path) {
  auto in = io_detail::open_in(path);
  return read_index_csv(in);
}

inline void write_index_csv(std::ostream& out, const IndexSeries& s) {
  out << "date,close\n" << std::setprecision(17);
  for (std::size_t i = 0; i < s.dates.size(); ++i) out << format_date(s.dates[i]) << ',' << s.closes[i] << '\n';
}

// ---------------------------------------------------------------- quotes

inline const std::vector<std::string>& quote_columns() {
  static const std::vector<std::string> c{"quote_date", "expiry_date", "strike", "bid", "ask", "volume", "open_interest", "spot"};
  return c;
}

inline std::vector<OptionQuote> read_quotes_csv(std::istream& in) {
  std::vector<OptionQuote> qs;
  for (const auto& f : io_detail::read_table(in, quote_columns(), "quote csv")) {
    OptionQuote q;
    q.quote_date = parse_date(f[0]);
    q.expiry = parse_date(f[1]);
    q.strike = io_detail::to_double(f[2], "quote csv");
    q.bid = io_detail::to_double(f[3], "quote csv");
    q.ask = io_detail::to_double(f[4], "quote csv");
    q.volume = io_detail::to_long(f[5], "quote csv");
    q.open_interest = io_detail::to_long(f[6], "quote csv");
    q.spot = io_detail::to_double(f[7], "quote csv");
    q.validate();
    qs.push_back(q);
  }
  return qs;
}

inline std::vector<OptionQuote> read_quotes_csv(const std::string& path) {
  auto in = io_detail::open_in(path);
  return read_quotes_csv(in);
}

inline void write_quotes_csv(std::ostream& out, const std::vector<OptionQuote>& qs) {
  const auto& c = quote_columns();
  for (std::size_t i = 0; i < c.size(); ++i) out << (i ? "," : "") << c[i];
  out << '\n' << std::setprecision(17);
  for (const auto& q : qs)
    out << format_date(q.quote_date) << ',' << format_date(q.expiry) << ',' << q.strike << ',' << q.bid << ',' << q.ask << ','
        << q.volume << ',' << q.open_interest << ',' << q.spot << '\n';
}

/// Gaps between consecutive quote dates outside [5, 9] calendar days.
inline std::vector<std::string> weekly_spacing_warnings(const std::vector<OptionQuote>& qs) {
  std::vector<Date> dates;
  for (const auto& q : qs) dates.push_back(q.quote_date);
  std::sort(dates.begin(), dates.end());
  dates.erase(std::unique(dates.begin(), dates.end()), dates.end());
  std::vector<std::string> w;
  for (std::size_t i = 1; i < dates.size(); ++i) {
    const long gap = calendar_days(dates[i - 1], dates[i]);
    if (gap < 5 || gap > 9)
      w.push_back("quote dates " + format_date(dates[i - 1]) + " -> " + format_date(dates[i]) + " are " + std::to_string(gap) +
                  " days apart (expected weekly)");
  }
  return w;
}

// ----------------------------------------------------------------- model

/// {model, dist, params, loglik}; NIG shape stored as tail parameters
/// (k, a) of the standardized law.
struct ModelFile {
  NgarchParams params;
  InnovationKind kind = InnovationKind::gaussian;
  double nig_k = 0.0, nig_a = 0.0;
  double loglik = NAN;
  std::vector<std::string> names;
  std::vector<double> std_errors;

  InnovationDistribution dist() const {
    return kind == InnovationKind::nig ? InnovationDistribution::nig_from_tail(nig_k, nig_a) : InnovationDistribution::gaussian();
  }
};

inline nlohmann::ordered_json model_to_json(const ModelFile& m) {
  nlohmann::ordered_json j;
  j["model"] = "ngarch11";
  j["dist"] = m.kind == InnovationKind::nig ? "nig" : "gaussian";
  auto& p = j["params"];
  p["alpha0"] = m.params.alpha0;
  p["alpha1"] = m.params.alpha1;
  p["beta1"] = m.params.beta1;
  p["gamma"] = m.params.gamma;
  p["lambda"] = m.params.lambda;
  p["r"] = m.params.r;
  if (m.kind == InnovationKind::nig) {
    p["k"] = m.nig_k;
    p["a"] = m.nig_a;
  }
  j["loglik"] = std::isfinite(m.loglik) ? nlohmann::ordered_json(m.loglik) : nlohmann::ordered_json(nullptr);
  if (!m.std_errors.empty()) {
    auto& se = j["std_errors"];
    for (std::size_t i = 0; i < m.names.size(); ++i)
      se[m.names[i]] = std::isfinite(m.std_errors[i]) ? nlohmann::ordered_json(m.std_errors[i]) : nlohmann::ordered_json(nullptr);
  }
  return j;
}

inline std::string model_json_text(const ModelFile& m) { return model_to_json(m).dump(2) + "\n"; }

inline ModelFile model_from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("model").get<std::string>() != "ngarch11") throw InputError("model file: unknown model");
    ModelFile m;
    const auto dist = j.at("dist").get<std::string>();
    const auto& p = j.at("params");
    m.params.alpha0 = p.at("alpha0").get<double>();
    m.params.alpha1 = p.at("alpha1").get<double>();
    m.params.beta1 = p.at("beta1").get<double>();
    m.params.gamma = p.at("gamma").get<double>();
    m.params.lambda = p.at("lambda").get<double>();
    m.params.r = p.value("r", 0.0);
    if (dist == "nig") {
      m.kind = InnovationKind::nig;
      m.nig_k = p.at("k").get<double>();
      m.nig_a = p.at("a").get<double>();
    } else if (dist != "gaussian") {
      throw InputError("model file: dist must be gaussian or nig");
    }
    if (j.contains("loglik") && j["loglik"].is_number()) m.loglik = j["loglik"].get<double>();
    if (j.contains("std_errors"))
      for (auto it = j["std_errors"].begin(); it != j["std_errors"].end(); ++it) {
        m.names.push_back(it.key());
        m.std_errors.push_back(it.value().is_null() ? NAN : it.value().get<double>());
      }
    m.params.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model file: ") + e.what());
  }
}

inline ModelFile read_model_json(const std::string& path) {
  auto in = io_detail::open_in(path);
  try {
    return model_from_json(nlohmann::ordered_json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- report

inline std::string format_mean(const BinCell& c) {
  if (!c.n) return "---";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", c.sum / double(c.n));
  return buf;
}

/// Long form: method,kernel,init_mode,moneyness_bin,maturity_bin,n,mean_nhe
/// with "all" rows for the averages and NA for empty cells.
inline void write_report_csv(std::ostream& out, const BacktestReport& rep) {
  out << "method,kernel,init_mode,moneyness_bin,maturity_bin,n,mean_nhe\n";
  const auto& s = rep.scheme;
  auto line = [&](const MethodTable& t, const std::string& mb, const std::string& tb, const BinCell& c) {
    char buf[40] = "NA";
    if (c.n) std::snprintf(buf, sizeof buf, "%.10g", c.sum / double(c.n));
    out << method_name(t.key.method) << ',' << t.key.kernel_label() << ',' << t.key.init_label() << ',' << mb << ',' << tb << ','
        << c.n << ',' << buf << '\n';
  };
  for (const auto& t : rep.tables) {
    for (std::size_t a = 0; a < s.n_maturity(); ++a) {
      for (std::size_t b = 0; b < s.n_moneyness(); ++b) line(t, s.moneyness_label(b), s.maturity_label(a), t.cells[a][b]);
      line(t, "all", s.maturity_label(a), t.by_maturity[a]);
    }
    for (std::size_t b = 0; b < s.n_moneyness(); ++b) line(t, s.moneyness_label(b), "all", t.by_moneyness[b]);
    line(t, "all", "all", t.total);
  }
}

/// Method blocks with one row per maturity bin, moneyness columns and an
/// average column, then an "Average NHE" row.
inline std::string format_report_table(const BacktestReport& rep) {
  std::ostringstream os;
  const auto& s = rep.scheme;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-24s %-11s", "Method", "Maturities");
  os << buf;
  for (std::size_t b = 0; b < s.n_moneyness(); ++b) {
    std::snprintf(buf, sizeof buf, " %13s", s.moneyness_label(b).c_str());
    os << buf;
  }
  os << "   Average NHE\n";
  for (const auto& t : rep.tables) {
    std::string name = t.key.label();
    if (t.key.kernel) name += " (" + t.key.kernel_label() + ")";
    for (std::size_t a = 0; a < s.n_maturity(); ++a) {
      std::snprintf(buf, sizeof buf, "%-24s %-11s", a == 0 ? name.c_str() : "", s.maturity_label(a).c_str());
      os << buf;
      for (std::size_t b = 0; b < s.n_moneyness(); ++b) {
        std::snprintf(buf, sizeof buf, " %13s", format_mean(t.cells[a][b]).c_str());
        os << buf;
      }
      std::snprintf(buf, sizeof buf, " %13s\n", format_mean(t.by_maturity[a]).c_str());
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%-24s %-11s", "  Average NHE", "");
    os << buf;
    for (std::size_t b = 0; b < s.n_moneyness(); ++b) {
      std::snprintf(buf, sizeof buf, " %13s", format_mean(t.by_moneyness[b]).c_str());
      os << buf;
    }
    std::snprintf(buf, sizeof buf, " %13s\n", format_mean(t.total).c_str());
    os << buf;
  }
  os << "contracts: " << rep.n_contracts << ", failures: " << rep.failures << "\n";
  os << "binning: " << rep.tie_rule << "\n";
  return os.str();
}

}  // namespace qhedge
