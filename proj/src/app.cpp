// SPDX-License-Identifier: Apache-2.0
#include "frelay/app.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

#include "frelay/arma.hpp"
#include "frelay/block.hpp"
#include "frelay/bounds.hpp"
#include "frelay/coding.hpp"
#include "frelay/errors.hpp"
#include "frelay/network.hpp"
#include "frelay/noisyfb.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace frelay::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_number(const std::string& raw) {
  const std::string t = trim(raw);
  if (t.empty()) throw ConfigParse("empty number");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || std::isnan(v)) throw ConfigParse("not a number: '" + t + "'");
  return v;
}

struct KeySpec {
  std::string key;
  std::string def;
  std::string help;
};

class Params {
 public:
  std::map<std::string, std::string> values;

  const std::string& str(const std::string& k) const {
    const auto it = values.find(k);
    if (it == values.end()) throw ConfigParse("missing key '" + k + "'");
    return it->second;
  }
  bool has(const std::string& k) const { return !trim(str(k)).empty(); }
  double num(const std::string& k) const {
    try {
      return to_number(str(k));
    } catch (const ConfigParse& e) {
      throw ConfigParse(k + ": " + e.what());
    }
  }
  int integer(const std::string& k) const {
    const double v = num(k);
    if (v != std::floor(v) || std::abs(v) > 2e9) throw ConfigParse(k + ": expected an integer");
    return static_cast<int>(v);
  }
  std::vector<double> list(const std::string& k) const {
    try {
      return parse_values(str(k));
    } catch (const ConfigParse& e) {
      throw ConfigParse(k + ": " + e.what());
    }
  }
  bool flag(const std::string& k) const {
    const std::string v = trim(str(k));
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigParse(k + ": expected true or false");
  }
};

struct Context {
  std::string command;
  Params p;
  fs::path out;
  std::uint64_t seed = 1;
  int threads = 0;
  bool bits = false;
  std::vector<std::string> outputs;
  json extra;  // merged into the manifest

  double rate(double nats) const { return bits ? nats / std::numbers::ln2 : nats; }
  std::string rate_col(const std::string& base) const { return base + (bits ? "_bits" : "_nats"); }

  void write(const std::string& name, const std::string& content) {
    const fs::path target = out / name;
    const fs::path tmp = out / (name + ".tmp");
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw IoError("cannot open " + tmp.string());
      f << content;
      if (!f) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("rename to " + target.string() + " failed: " + ec.message());
    outputs.push_back(name);
  }
};

using Row = std::vector<std::string>;

std::string csv(const Row& header, const std::vector<Row>& rows) {
  std::string s;
  auto line = [&](const Row& r) {
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
    s += "\n";
  };
  line(header);
  for (const Row& r : rows) line(r);
  return s;
}

std::string num(double v) { return format_number(v); }

struct Series {
  std::string label;
  std::vector<double> x, y;
};

// Polyline plot with axes and a legend.
std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                     const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const Series& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad, y1 += pad;
  const double W = 640, H = 420, L = 70, R = 160, T = 40, B = 50;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  std::ostringstream o;
  char buf[256];
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, H - B, W - R, H - B);
  o << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, T, L, H - B);
  o << buf;
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-size=\"11\">%.3g</text>\n", px(xv), H - B + 16, xv);
    o << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"end\" font-size=\"11\">%.3g</text>\n", L - 6, py(yv) + 4, yv);
    o << buf;
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* c = colors[k % 7];
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(s.x[i]), py(s.y[i]));
      o << buf;
    }
    o << "\"/>\n";
    const double ly = T + 16 * (k + 1);
    std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\" stroke-width=\"2\"/>\n", W - R + 10, ly, W - R + 30, ly, c);
    o << buf;
    o << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// ---- noise helpers -------------------------------------------------------

// w[k] = sigma_w (chi e[k] + sqrt(1 - chi^2) e[k-1]); chi = 1 is white.
ArmaProcess fig3_noise(double sigma_w2, double chi) {
  if (!(sigma_w2 >= 0.0)) throw ConfigParse("sigma_w2 must be nonnegative");
  if (!(chi >= 0.0 && chi <= 1.0)) throw ConfigParse("chi must lie in [0, 1]");
  if (chi == 1.0) return ArmaProcess::white(sigma_w2);
  const double sw = std::sqrt(sigma_w2);
  return ArmaProcess{{1.0}, {sw * chi, sw * std::sqrt(1.0 - chi * chi)}};
}

ArmaProcess relay_noise(const Params& p, double chi) {
  return p.has("w") ? parse_arma(p.str("w")) : fig3_noise(p.num("sigma_w2"), chi);
}

ArmaProcess dest_noise(const Params& p) {
  if (p.has("z")) return parse_arma(p.str("z"));
  const double v = p.num("z_var");
  if (!(v > 0.0)) throw ConfigParse("z_var must be positive");
  return ArmaProcess::white(v);
}

ConstraintMode mode_of(const Params& p) {
  const std::string m = trim(p.str("mode"));
  if (m == "relaxed") return ConstraintMode::kRelaxedTapBound;
  if (m == "exact") return ConstraintMode::kExactRelayPower;
  throw ConfigParse("mode must be 'relaxed' or 'exact'");
}

Normalization norm_of(const Params& p) {
  const std::string m = trim(p.str("normalization"));
  if (m == "message") return Normalization::kMessageOnly;
  if (m == "block_plus_flush") return Normalization::kBlockPlusFlush;
  throw ConfigParse("normalization must be 'message' or 'block_plus_flush'");
}

double positive(const Params& p, const std::string& k) {
  const double v = p.num(k);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigParse(k + " must be positive");
  return v;
}

std::string join_taps(const std::vector<double>& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) s += (i ? ";" : "") + num(t[i]);
  return s.empty() ? "0" : s;
}

// ---- commands --------------------------------------------------------------

struct SweepRow {
  double gamma, chi, h, rate;
  std::string mode;
};

std::string sweep_csv(const Context& c, const std::vector<SweepRow>& rows, double p2p_rate,
                      const std::vector<std::string>& h_text = {}) {
  std::vector<Row> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SweepRow& r = rows[i];
    out.push_back({num(r.gamma), num(r.chi), h_text.empty() ? num(r.h) : h_text[i], num(c.rate(r.rate)),
                   num(100.0 * (r.rate / p2p_rate - 1.0)), r.mode});
  }
  return csv({"gamma", "chi", "h_opt", c.rate_col("rate"), "rate_gain_pct", "constraint_mode"}, out);
}

void cmd_bound_ma1(Context& c) {
  const double rho = positive(c.p, "rho");
  const double chi = c.p.num("chi");
  const ArmaProcess w = relay_noise(c.p, chi), z = dest_noise(c.p);
  const double res = positive(c.p, "resolution");
  const double p2p = quartic_bound_ma1(w, z, rho, 0.0, res).rate_nats;
  std::vector<SweepRow> rows;
  for (double g : c.p.list("gamma")) {
    const BoundResult b = quartic_bound_ma1(w, z, rho, g, res);
    rows.push_back({g, chi, b.taps.taps.empty() ? 0.0 : b.taps.taps[0], b.rate_nats, "relaxed_tap_bound"});
  }
  c.write("bound_ma1.csv", sweep_csv(c, rows, p2p));
}

void cmd_bound_riccati(Context& c) {
  const double rho = positive(c.p, "rho");
  if (c.p.has("network")) {
    std::ifstream f(c.p.str("network"));
    if (!f) throw IoError("cannot read network file " + c.p.str("network"));
    std::stringstream ss;
    ss << f.rdbuf();
    const RelayNetwork net = parse_network(ss.str());
    std::vector<Row> prow;
    for (const NodePower& np : check_node_powers(net))
      prow.push_back({np.id, num(np.power), num(np.budget), np.ok ? "true" : "false"});
    c.write("node_power.csv", csv({"node", "power", "budget", "ok"}, prow));
    const EffectiveRelay eff = reduce_to_effective_filter(net);
    const ArmaProcess noise = compose_injected_noise(eff.injected_noise, net.dest_noise, eff.taps);
    const Signaling sig = best_signaling(padded_model(to_state_space(noise)), net.rho);
    const Signaling p2p = best_signaling(padded_model(to_state_space(net.dest_noise)), net.rho);
    const SweepRow r{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), 0.0,
                     sig.ric.rate, "per_node_open_loop"};
    c.write("bound_riccati.csv", sweep_csv(c, {r}, p2p.ric.rate, {join_taps(eff.taps.taps)}));
    return;
  }
  const double chi = c.p.num("chi");
  const ArmaProcess w = relay_noise(c.p, chi), z = dest_noise(c.p);
  const ConstraintMode mode = mode_of(c.p);
  const double p2p = best_rate_for_taps(FirFilter{{0.0}}, w, z, rho, 0.0, mode).rate_nats;
  std::vector<SweepRow> rows;
  std::vector<std::string> htext;
  const bool fixed = c.p.has("taps");
  for (double g : c.p.list("gamma")) {
    BoundResult b;
    if (fixed)
      b = best_rate_for_taps(FirFilter{c.p.list("taps")}, w, z, rho, g, mode);
    else
      b = search_single_tap(w, z, rho, g, mode, positive(c.p, "resolution"));
    rows.push_back({g, chi, 0.0, b.rate_nats, to_string(mode)});
    htext.push_back(join_taps(b.taps.taps));
  }
  c.write("bound_riccati.csv", sweep_csv(c, rows, p2p, htext));
}

std::vector<BranchSpec> branches(const Params& p) {
  const std::vector<double> s2 = p.list("sigma2"), g = p.list("gamma");
  if (s2.size() != g.size() || s2.empty()) throw ConfigParse("sigma2 and gamma need the same nonzero length");
  std::vector<BranchSpec> out;
  for (std::size_t i = 0; i < s2.size(); ++i) {
    if (!(s2[i] >= 0.0) || !(g[i] >= 0.0)) throw ConfigParse("sigma2 and gamma must be nonnegative");
    out.push_back({s2[i], g[i]});
  }
  return out;
}

void network_bound(Context& c, bool parallel) {
  const double rho = positive(c.p, "rho");
  const BoundResult b = parallel ? parallel_bound(branches(c.p), rho) : series_bound(branches(c.p), rho);
  const double p2p = 0.5 * std::log1p(rho);
  c.write(parallel ? "bound_parallel.csv" : "bound_series.csv",
          csv({"topology", c.rate_col("rate"), "gains", "pct_gain_vs_p2p"},
              {{parallel ? "parallel" : "series", num(c.rate(b.rate_nats)), join_taps(b.gains),
                num(100.0 * (b.rate_nats / p2p - 1.0))}}));
}

std::vector<double> two_taps(const Params& p, const std::string& k) {
  std::vector<double> t = p.list(k);
  if (t.empty() || t.size() > 2) throw ConfigParse(k + ": one or two taps expected");
  t.resize(2, 0.0);
  return t;
}

void cmd_block(Context& c) {
  const double rho = positive(c.p, "rho");
  const int N = c.p.integer("n");
  const std::vector<double> taps = two_taps(c.p, "taps");
  const double gamma = c.p.num("gamma");
  const ArmaProcess w = ArmaProcess::white(c.p.num("sigma_w2")), z = dest_noise(c.p);
  const Normalization nm = norm_of(c.p);
  const BlockSolution base = solve_block(make_block_program(FirFilter{{0.0}}, w, z, rho, 0.0, N, nm));
  const BlockSolution s = solve_block(make_block_program(FirFilter{taps}, w, z, rho, gamma, N, nm));
  c.write("block.csv", csv({"gamma", "h1", "h2", c.rate_col("rate"), "pct_gain_vs_p2p"},
                           {{num(gamma), num(taps[0]), num(taps[1]), num(c.rate(s.rate_nats)),
                             num(100.0 * (s.rate_nats / base.rate_nats - 1.0))}}));
}

void cmd_table1(Context& c) {
  const double rho = positive(c.p, "rho");
  const int N = c.p.integer("n");
  const double sw2 = c.p.num("sigma_w2");
  const int trials = c.p.integer("trials");
  const ArmaProcess w = ArmaProcess::white(sw2), z = ArmaProcess::white(1.0);
  const Normalization nm = norm_of(c.p);
  const BlockSolution base = solve_block(make_block_program(FirFilter{{0.0, 0.0}}, w, z, rho, 0.0, N, nm));
  std::vector<Row> rows;
  rows.push_back({num(0.0), num(0.0), num(0.0), num(c.rate(base.rate_nats)), "--"});
  const std::vector<double> ft = two_taps(c.p, "fixed_taps");
  const double fg = c.p.num("fixed_gamma");
  const BlockSolution fixed = solve_block(make_block_program(FirFilter{ft}, w, z, rho, fg, N, nm));
  rows.push_back({num(fg), num(ft[0]), num(ft[1]), num(c.rate(fixed.rate_nats)),
                  num(100.0 * (fixed.rate_nats / base.rate_nats - 1.0))});
  for (double g : c.p.list("search_gamma")) {
    const TwoTapResult r = random_two_tap_search(rho, g, sw2, N, trials, c.seed, c.threads, nm);
    rows.push_back({num(g), num(r.taps.h1), num(r.taps.h2), num(c.rate(r.solution.rate_nats)),
                    num(100.0 * (r.solution.rate_nats / base.rate_nats - 1.0))});
  }
  c.write("table1.csv", csv({"gamma", "h1", "h2", c.rate_col("rate"), "pct_gain_vs_p2p"}, rows));
}

NoisyFbProblem nf_problem(const Params& p, double sigma_w2, double sigma_n2) {
  NoisyFbProblem pr;
  pr.rho = positive(p, "rho");
  pr.sigma_w2 = sigma_w2;
  pr.sigma_n2 = sigma_n2;
  pr.gamma = p.num("gamma");
  if (!(pr.sigma_w2 >= 0.0) || !(pr.sigma_n2 >= 0.0) || !(pr.gamma >= 0.0) || !std::isfinite(pr.gamma))
    throw ConfigParse("sigma_w2, sigma_n2 and gamma must be nonnegative");
  return pr;
}

void cmd_noisyfb(Context& c) {
  const NoisyFbProblem pr = nf_problem(c.p, c.p.num("sigma_w2"), c.p.num("sigma_n2"));
  const NoisyFbSolution s = solve(pr);
  c.write("noisyfb.csv", csv({"g1", "g2", "f21", "h1", "snr", "mu2", "mu3", "relay_power_saturated", "method"},
                             {{num(s.x.g1), num(s.x.g2), num(s.x.f21), num(s.x.h1), num(s.snr), num(s.mu2),
                               num(s.mu3), s.relay_power_saturated ? "true" : "false", to_string(s.method)}}));
}

std::vector<double> h1_grid(const Params& p, const NoisyFbProblem& pr) {
  if (p.values.count("h1") && p.has("h1")) return p.list("h1");
  const double step = positive(p, "h1_step");
  const double hmax = pr.h_max();
  std::vector<double> g;
  const int n = static_cast<int>(std::floor(hmax / step + 1e-9));
  for (int i = 0; i <= n; ++i) g.push_back(i * step);
  if (hmax - n * step > 1e-12) g.push_back(hmax);
  return g;
}

std::vector<Row> sweep_rows(const NoisyFbProblem& pr, const std::vector<double>& grid, bool feedback,
                            const std::string& lead, Series* series) {
  std::vector<Row> rows;
  const double hmax = pr.h_max();
  for (const SweepPoint& pt : sweep_h1(pr, grid, feedback)) {
    const std::string branch = !feedback ? "no_feedback" : (pt.h1 >= hmax * (1.0 - 1e-12) ? "boundary" : "interior");
    Row r;
    if (!lead.empty()) r.push_back(lead);
    for (const std::string& v : {num(pt.h1), num(pt.snr), num(pt.g2), num(pt.f21)}) r.push_back(v);
    r.push_back(branch);
    rows.push_back(r);
    if (series) series->x.push_back(pt.h1), series->y.push_back(pt.snr);
  }
  return rows;
}

void cmd_noisyfb_sweep(Context& c) {
  const NoisyFbProblem pr = nf_problem(c.p, c.p.num("sigma_w2"), c.p.num("sigma_n2"));
  const std::vector<double> grid = h1_grid(c.p, pr);
  for (double h : grid)
    if (h < 0.0 || h > pr.h_max() * (1.0 + 1e-12)) throw ConfigParse("h1 grid must lie in [0, h_max]");
  c.write("noisyfb_sweep.csv",
          csv({"h1", "snr", "g2", "f21", "branch"}, sweep_rows(pr, grid, c.p.flag("feedback"), "", nullptr)));
}

std::string label_of(const std::string& name, double v) { return name + "=" + (std::isinf(v) ? "inf" : num(v)); }

void cmd_fig4(Context& c, bool vary_n) {
  const std::string key = vary_n ? "sigma_n2" : "sigma_w2";
  std::vector<Row> rows;
  std::vector<Series> plot;
  for (double v : c.p.list(key)) {
    const NoisyFbProblem pr = vary_n ? nf_problem(c.p, c.p.num("sigma_w2"), v) : nf_problem(c.p, v, c.p.num("sigma_n2"));
    Series s{label_of(vary_n ? "sn2" : "sw2", v), {}, {}};
    const std::vector<Row> part = sweep_rows(pr, h1_grid(c.p, pr), true, num(v), &s);
    rows.insert(rows.end(), part.begin(), part.end());
    plot.push_back(s);
  }
  const std::string stem = vary_n ? "fig4" : "fig5";
  c.write(stem + ".csv", csv({key, "h1", "snr", "g2", "f21", "branch"}, rows));
  c.write(stem + ".svg", svg_plot(vary_n ? "post-processed SNR, rho=1, sigma_w2=1" : "post-processed SNR, rho=1, sigma_n2=1",
                                  "h1", "SNR", plot));
}

void cmd_fig3(Context& c) {
  const double rho = positive(c.p, "rho");
  const ArmaProcess z = dest_noise(c.p);
  const std::string method = trim(c.p.str("method"));
  if (method != "quartic" && method != "riccati") throw ConfigParse("method must be 'quartic' or 'riccati'");
  const ConstraintMode mode = mode_of(c.p);
  const double res = positive(c.p, "resolution");
  std::vector<SweepRow> rows;
  std::vector<Series> plot;
  const double p2p = quartic_bound_ma1(ArmaProcess::white(c.p.num("sigma_w2")), z, rho, 0.0, res).rate_nats;
  for (double chi : c.p.list("chi")) {
    const ArmaProcess w = fig3_noise(c.p.num("sigma_w2"), chi);
    Series s{label_of("chi", chi), {}, {}};
    for (double g : c.p.list("gamma")) {
      const BoundResult b = method == "quartic" ? quartic_bound_ma1(w, z, rho, g, res)
                                                : search_single_tap(w, z, rho, g, mode, res);
      rows.push_back({g, chi, b.taps.taps.empty() ? 0.0 : b.taps.taps[0], b.rate_nats,
                      method == "quartic" ? "relaxed_tap_bound" : to_string(mode)});
      s.x.push_back(g);
      s.y.push_back(c.rate(b.rate_nats));
    }
    plot.push_back(s);
  }
  c.write("fig3.csv", sweep_csv(c, rows, p2p));

  // Peak gains under both constraint modes against the stated anchors.
  const std::map<double, double> stated = {{0.0, 19.0}, {0.5, 43.0}};
  std::vector<Row> arows;
  json anchors = json::array();
  for (double chi : c.p.list("chi")) {
    const SweepRow* best = nullptr;
    for (const SweepRow& r : rows)
      if (r.chi == chi && (!best || r.rate > best->rate)) best = &r;
    if (!best) continue;
    const ArmaProcess w = fig3_noise(c.p.num("sigma_w2"), chi);
    const BoundResult ex = search_single_tap(w, z, rho, best->gamma, ConstraintMode::kExactRelayPower, 1e-3);
    const auto it = stated.find(chi);
    for (const auto& [mode, rate] : std::vector<std::pair<std::string, double>>{
             {"relaxed_tap_bound", best->rate}, {"exact_relay_power", ex.rate_nats}}) {
      const double gain = 100.0 * (rate / p2p - 1.0);
      const bool has = it != stated.end();
      const bool match = has && std::abs(gain - it->second) <= 2.0;
      arows.push_back({num(chi), mode, num(best->gamma), num(c.rate(rate)), num(gain),
                       has ? num(it->second) : "", has ? (match ? "true" : "false") : ""});
      json a = {{"chi", chi}, {"constraint_mode", mode}, {"peak_gain_pct", std::stod(num(gain))}};
      if (has) a["stated_gain_pct"] = it->second, a["matches"] = match;
      anchors.push_back(a);
    }
  }
  c.write("fig3_anchors.csv", csv({"chi", "constraint_mode", "peak_gamma", c.rate_col("peak_rate"), "peak_gain_pct",
                                   "stated_gain_pct", "within_2pp"},
                                  arows));
  c.extra["anchors"] = anchors;
  c.write("fig3.svg", svg_plot("single-tap relay bound, rho=1, sigma_w2=1", "gamma", c.rate_col("rate"), plot));
}

void cmd_simulate(Context& c) {
  const double rho = positive(c.p, "rho");
  const double chi = c.p.num("chi");
  const ArmaProcess w = relay_noise(c.p, chi), z = dest_noise(c.p);
  const BoundResult b = best_rate_for_taps(FirFilter{c.p.list("taps")}, w, z, rho, c.p.num("gamma"), mode_of(c.p));
  const int trials = c.p.integer("trials");
  const Row header{"N", "M", "trials", "ser", c.rate_col("empirical_rate"), c.rate_col("bound_rate")};
  if (c.p.has("n_list")) {
    std::vector<int> ns;
    for (double v : c.p.list("n_list")) {
      if (v < 1 || v != std::floor(v)) throw ConfigParse("n_list: positive integers expected");
      ns.push_back(static_cast<int>(v));
    }
    const double frac = c.p.num("rate_fraction");
    const std::vector<CollapseRow> rows = error_collapse_study(b.model, b.s, rho, frac, ns, trials, c.seed, c.threads);
    std::vector<Row> out;
    for (const CollapseRow& r : rows)
      out.push_back({std::to_string(r.N), std::to_string(r.M), std::to_string(r.trials), num(r.ser),
                     num(c.rate(r.empirical_rate)), num(c.rate(r.bound_rate)), num(r.loglog)});
    Row h = header;
    h.push_back("loglog_ser");
    c.write("simulate.csv", csv(h, out));
    return;
  }
  ClosedLoopRun cfg;
  cfg.model = b.model;
  cfg.s = b.s;
  cfg.rho = rho;
  const double m = c.p.num("m");
  if (m < 0 || m != std::floor(m) || m > 1.8e19) throw ConfigParse("m: nonnegative integer expected");
  cfg.M = static_cast<std::uint64_t>(m);
  cfg.N = c.p.integer("n");
  cfg.trials = trials;
  cfg.seed = c.seed;
  cfg.threads = c.threads;
  const ClosedLoopResult r = run_closed_loop(cfg);
  c.write("simulate.csv", csv(header, {{std::to_string(cfg.N), std::to_string(cfg.M), std::to_string(trials),
                                        num(r.symbol_error_rate), num(c.rate(r.empirical_rate)),
                                        num(c.rate(r.bound_rate))}}));
  std::vector<Row> traj;
  for (int k = 0; k < cfg.N; ++k)
    traj.push_back({std::to_string(k + 1), num(r.empirical_snr[k]), num(r.analytic_snr[k]), num(r.expected_power[k])});
  c.write("simulate_snr.csv", csv({"k", "empirical_snr", "analytic_snr", "expected_power"}, traj));
}

struct CommandSpec {
  std::string name;
  std::string help;
  std::vector<KeySpec> keys;
  std::function<void(Context&)> run;
};

const std::vector<KeySpec> kNoiseKeys = {
    {"sigma_w2", "1", "relay noise variance"},
    {"chi", "1", "relay noise shape: w = sigma_w (chi e[k] + sqrt(1-chi^2) e[k-1])"},
    {"z_var", "1", "destination noise variance"},
    {"w", "", "relay noise ARMA law, overrides sigma_w2/chi"},
    {"z", "", "destination noise ARMA law, overrides z_var"}};

std::vector<KeySpec> with_noise(std::vector<KeySpec> k) {
  k.insert(k.end(), kNoiseKeys.begin(), kNoiseKeys.end());
  return k;
}

const std::vector<CommandSpec>& commands() {
  static const std::vector<CommandSpec> cmds = {
      {"bound-ma1", "closed-form single-tap bound for MA(1) noises over a gamma sweep",
       with_noise({{"rho", "1", "source power"}, {"gamma", "0:2:0.1", "relay power factors"},
                   {"resolution", "1e-4", "tap grid step"}}),
       cmd_bound_ma1},
      {"bound-riccati", "Riccati bound for given taps, a single-tap search, or a network file",
       with_noise({{"rho", "1", "source power"}, {"gamma", "0:2:0.1", "relay power factors"},
                   {"taps", "", "fixed relay taps; empty searches one tap"},
                   {"mode", "relaxed", "relaxed | exact"}, {"resolution", "1e-3", "tap grid step"},
                   {"network", "", "network description file"}}),
       cmd_bound_riccati},
      {"bound-parallel", "parallel single-tap relays",
       {{"rho", "1", "source power"}, {"sigma2", "1,1", "node noise variances"}, {"gamma", "1,1", "node power factors"}},
       [](Context& c) { network_bound(c, true); }},
      {"bound-series", "series chain of single-tap relays",
       {{"rho", "1", "source power"}, {"sigma2", "1,1", "node noise variances"}, {"gamma", "1,1", "node power factors"}},
       [](Context& c) { network_bound(c, false); }},
      {"block", "block log-det program for fixed taps",
       {{"n", "20", "block length"}, {"rho", "1", "source power"}, {"sigma_w2", "0.1", "relay noise variance"},
        {"z_var", "1", "destination noise variance"}, {"z", "", "destination noise ARMA law"},
        {"gamma", "1.1", "relay power factor"}, {"taps", "1,0", "one or two taps"},
        {"normalization", "message", "message | block_plus_flush"}},
       cmd_block},
      {"table1", "two-tap block bounds: baseline, fixed taps, random search",
       {{"n", "20", "block length"}, {"rho", "1", "source power"}, {"sigma_w2", "0.1", "relay noise variance"},
        {"trials", "1000", "random tap candidates per gamma"}, {"fixed_gamma", "1.1", "gamma of the fixed-tap row"},
        {"fixed_taps", "1,0", "taps of the fixed-tap row"}, {"search_gamma", "1.3,1.8,2.5,5", "gammas searched"},
        {"normalization", "message", "message | block_plus_flush"}},
       cmd_table1},
      {"noisyfb", "two-use code with noisy feedback",
       {{"rho", "1", "source power"}, {"sigma_w2", "1", "relay noise variance (inf allowed)"},
        {"sigma_n2", "0", "feedback noise variance (inf allowed)"}, {"gamma", "2", "relay power factor"}},
       cmd_noisyfb},
      {"noisyfb-sweep", "SNR versus relay gain",
       {{"rho", "1", "source power"}, {"sigma_w2", "1", "relay noise variance"}, {"sigma_n2", "0", "feedback noise variance"},
        {"gamma", "4", "relay power factor"}, {"h1", "", "explicit h1 grid"}, {"h1_step", "0.001", "grid step up to h_max"},
        {"feedback", "true", "false forces f21 = 0"}},
       cmd_noisyfb_sweep},
      {"simulate", "closed-loop Monte-Carlo of the linear feedback code",
       with_noise({{"rho", "1", "source power"}, {"taps", "0.7", "relay taps"}, {"gamma", "1", "relay power factor"},
                   {"mode", "relaxed", "relaxed | exact"}, {"n", "200", "block length"}, {"trials", "10000", "trials"},
                   {"m", "0", "PAM size for the error count; 0 skips it"},
                   {"n_list", "", "block lengths for the error-collapse study"},
                   {"rate_fraction", "0.8", "rate as a fraction of the bound in the study"}}),
       cmd_simulate},
      {"fig3", "single-tap bound versus gamma for several relay noise shapes",
       {{"rho", "1", "source power"}, {"sigma_w2", "1", "relay noise variance"}, {"chi", "0,0.25,0.5", "noise shapes"},
        {"gamma", "0:2:0.02", "relay power factors"}, {"z_var", "1", "destination noise variance"},
        {"z", "", "destination noise ARMA law"}, {"method", "quartic", "quartic | riccati"},
        {"mode", "relaxed", "relaxed | exact"}, {"resolution", "1e-4", "tap grid step"}},
       cmd_fig3},
      {"fig4", "SNR versus relay gain for several feedback noise levels",
       {{"rho", "1", "source power"}, {"sigma_w2", "1", "relay noise variance"},
        {"sigma_n2", "0,0.1,0.5,1,inf", "feedback noise variances"}, {"gamma", "4", "relay power factor"},
        {"h1", "", "explicit h1 grid"}, {"h1_step", "0.001", "grid step up to h_max"}},
       [](Context& c) { cmd_fig4(c, true); }},
      {"fig5", "SNR versus relay gain for several relay noise levels",
       {{"rho", "1", "source power"}, {"sigma_n2", "1", "feedback noise variance"},
        {"sigma_w2", "0.1,0.5,1,2,5,inf", "relay noise variances"}, {"gamma", "4", "relay power factor"},
        {"h1", "", "explicit h1 grid"}, {"h1_step", "0.001", "grid step up to h_max"}},
       [](Context& c) { cmd_fig4(c, false); }},
  };
  return cmds;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kSolver: return 3;
    case ErrorKind::kIo: return 4;
  }
  return 3;
}

int report(const fs::path& out, const std::string& name, const std::string& kind, const std::string& msg, int code) {
  const json rec = {{"error", name}, {"kind", kind}, {"message", msg}, {"exit_code", code}};
  std::cerr << rec.dump() << "\n";
  std::error_code ec;
  if (!out.empty() && fs::is_directory(out, ec)) {
    std::ofstream f(out / "error.json");
    if (f) f << rec.dump(2) << "\n";
  }
  return code;
}

std::map<std::string, std::string> load_config(const std::string& path, const std::string& command) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  if (trim(text).rfind('{', 0) == 0) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigParse(std::string("manifest: ") + e.what());
    }
    if (j.value("command", command) != command)
      throw ConfigParse("manifest was written by '" + j.value("command", "") + "'");
    std::map<std::string, std::string> m;
    for (const auto& [k, v] : j.at("params").items()) m[k] = v.get<std::string>();
    return m;
  }
  return parse_config_text(text);
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<double> parse_values(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) return {};
  if (t.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() != 3) throw ConfigParse("range must be start:stop:step");
    const double a = to_number(parts[0]), b = to_number(parts[1]), st = to_number(parts[2]);
    if (!(st > 0.0) || !(b >= a) || !std::isfinite(a) || !std::isfinite(b)) throw ConfigParse("bad range '" + t + "'");
    const double n = std::floor((b - a) / st + 1e-9);
    if (n > 1e7) throw ConfigParse("range too long");
    std::vector<double> out;
    for (int i = 0; i <= static_cast<int>(n); ++i) {
      // Round to 12 significant digits so 0.1 steps print cleanly.
      out.push_back(std::stod(format_number(a + i * st)));
    }
    return out;
  }
  std::vector<double> out;
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_number(item));
  return out;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(ss, raw)) {
    ++lineno;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigParse("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigParse("line " + std::to_string(lineno) + ": empty key");
    if (out.count(key)) throw ConfigParse("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

int run(const std::vector<std::string>& args) {
  CLI::App cli{"Filter-and-forward relay bounds, noisy-feedback design and coding simulation"};
  cli.require_subcommand(1);
  struct Slot {
    const CommandSpec* spec;
    CLI::App* sub;
    std::map<std::string, std::string> given;
    std::map<std::string, CLI::Option*> opts;
    std::string out = "out", config;
    std::string seed = "1", threads = "0";
    bool bits = false;
  };
  std::vector<std::unique_ptr<Slot>> slots;
  for (const CommandSpec& spec : commands()) {
    auto s = std::make_unique<Slot>();
    s->spec = &spec;
    s->sub = cli.add_subcommand(spec.name, spec.help);
    for (const KeySpec& k : spec.keys) {
      s->given[k.key] = k.def;
      s->opts[k.key] = s->sub->add_option("--" + k.key, s->given[k.key], k.help + " [" + k.def + "]");
    }
    s->opts["out"] = s->sub->add_option("--out", s->out, "output directory [out]");
    s->opts["seed"] = s->sub->add_option("--seed", s->seed, "random seed [1]");
    s->opts["threads"] = s->sub->add_option("--threads", s->threads, "worker threads, 0 = all cores [0]");
    s->sub->add_option("--config", s->config, "key = value file or a manifest.json to replay");
    s->opts["bits"] = s->sub->add_flag("--bits", s->bits, "report rates in bits");
    slots.push_back(std::move(s));
  }
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    cli.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    return report({}, "ConfigParse", "config", e.what(), 2);
  }

  Slot* s = nullptr;
  for (auto& sl : slots)
    if (sl->sub->parsed()) s = sl.get();
  Context ctx;
  ctx.out = s->out;
  try {
    ctx.command = s->spec->name;
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw IoError("cannot create " + ctx.out.string() + ": " + ec.message());
    std::map<std::string, std::string> resolved;
    for (const KeySpec& k : s->spec->keys) resolved[k.key] = k.def;
    resolved["seed"] = "1";
    resolved["threads"] = "0";
    resolved["bits"] = "false";
    if (!s->config.empty()) {
      for (const auto& [k, v] : load_config(s->config, ctx.command)) {
        if (!resolved.count(k)) throw ConfigParse("unknown key '" + k + "' for " + ctx.command);
        resolved[k] = v;
      }
    }
    for (const KeySpec& k : s->spec->keys)
      if (s->opts[k.key]->count() > 0) resolved[k.key] = s->given[k.key];
    if (s->opts["seed"]->count() > 0) resolved["seed"] = s->seed;
    if (s->opts["threads"]->count() > 0) resolved["threads"] = s->threads;
    if (s->bits) resolved["bits"] = "true";
    ctx.p.values = resolved;
    const double seed = ctx.p.num("seed");
    if (seed < 0 || seed != std::floor(seed) || seed > 9.0e15) throw ConfigParse("seed: nonnegative integer expected");
    ctx.seed = static_cast<std::uint64_t>(seed);
    ctx.threads = ctx.p.integer("threads");
    ctx.bits = ctx.p.flag("bits");
    s->spec->run(ctx);
    json man;
    man["artifact"] = "frelay";
    man["version"] = kVersion;
    man["command"] = ctx.command;
    man["params"] = json(resolved);
    man["outputs"] = ctx.outputs;
    for (const auto& [k, v] : ctx.extra.items()) man[k] = v;
    ctx.write("manifest.json", man.dump(2) + "\n");
    return 0;
  } catch (const Error& e) {
    const char* kind = e.kind() == ErrorKind::kConfig ? "config" : e.kind() == ErrorKind::kIo ? "io" : "solver";
    return report(ctx.out, e.name(), kind, e.what(), exit_code(e.kind()));
  } catch (const std::invalid_argument& e) {
    return report(ctx.out, "ConfigParse", "config", e.what(), 2);
  } catch (const std::exception& e) {
    return report(ctx.out, "ModuleError", "solver", e.what(), 3);
  }
}

}  // namespace frelay::app
