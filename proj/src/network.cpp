// SPDX-License-Identifier: Apache-2.0
#include "frelay/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "frelay/errors.hpp"

namespace frelay {

namespace {

constexpr const char* kSource = "S";
constexpr const char* kDest = "D";

struct Graph {
  std::vector<std::string> names;  // 0 = S, 1 = D, then nodes
  std::map<std::string, int> index;
  std::vector<std::vector<int>> out, in;
  std::vector<int> topo;
};

Graph build_graph(const RelayNetwork& net) {
  Graph g;
  g.names = {kSource, kDest};
  for (const auto& n : net.nodes) {
    if (n.id == kSource || n.id == kDest || n.id.empty())
      throw ConfigParse("invalid node id '" + n.id + "'");
    g.names.push_back(n.id);
  }
  for (std::size_t i = 0; i < g.names.size(); ++i) {
    if (!g.index.emplace(g.names[i], static_cast<int>(i)).second)
      throw ConfigParse("duplicate node id '" + g.names[i] + "'");
  }
  const std::size_t n = g.names.size();
  g.out.assign(n, {});
  g.in.assign(n, {});
  std::set<std::pair<int, int>> seen;
  for (const auto& [a, b] : net.edges) {
    auto ia = g.index.find(a), ib = g.index.find(b);
    if (ia == g.index.end() || ib == g.index.end())
      throw ConfigParse("edge references unknown node: " + a + "->" + b);
    if (ib->second == 0 || ia->second == 1) throw CyclicGraph("edge into S or out of D: " + a + "->" + b);
    if (!seen.insert({ia->second, ib->second}).second) continue;
    g.out[ia->second].push_back(ib->second);
    g.in[ib->second].push_back(ia->second);
  }
  std::vector<int> indeg(n, 0);
  for (std::size_t i = 0; i < n; ++i) indeg[i] = static_cast<int>(g.in[i].size());
  std::vector<int> stack;
  for (std::size_t i = n; i-- > 0;)
    if (indeg[i] == 0) stack.push_back(static_cast<int>(i));
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    g.topo.push_back(v);
    for (int u : g.out[v])
      if (--indeg[u] == 0) stack.push_back(u);
  }
  if (g.topo.size() != n) throw CyclicGraph("relay graph contains a cycle");
  return g;
}

Poly node_poly(const RelayNode& node) { return node.filter.H1(); }

double filtered_variance(const Poly& f, const ArmaProcess& proc) {
  if (f.empty()) return 0.0;
  const std::vector<double> g = autocovariance(proc, f.size());
  double v = 0.0;
  for (std::size_t a = 0; a < f.size(); ++a)
    for (std::size_t b = 0; b < f.size(); ++b) v += f[a] * f[b] * g[a > b ? a - b : b - a];
  return v;
}

}  // namespace

std::vector<Poly> node_to_destination(const RelayNetwork& net) {
  const Graph g = build_graph(net);
  std::vector<Poly> T(g.names.size(), Poly{0.0});
  T[1] = {1.0};
  for (auto it = g.topo.rbegin(); it != g.topo.rend(); ++it) {
    const int v = *it;
    if (v < 2) continue;
    Poly acc{0.0};
    for (int u : g.out[v]) acc = poly_add(acc, T[u]);
    T[v] = poly_mul(node_poly(net.nodes[v - 2]), acc);
  }
  return std::vector<Poly>(T.begin() + 2, T.end());
}

std::size_t network_memory(const RelayNetwork& net) {
  const Graph g = build_graph(net);
  // Longest S->D path measured in summed tap counts.
  std::vector<long> best(g.names.size(), -1);
  best[0] = 0;
  for (int v : g.topo) {
    if (best[v] < 0) continue;
    for (int u : g.out[v]) {
      const long add = u >= 2 ? static_cast<long>(net.nodes[u - 2].filter.L()) : 0;
      best[u] = std::max(best[u], best[v] + add);
    }
  }
  return best[1] < 0 ? 0 : static_cast<std::size_t>(best[1]);
}

EffectiveRelay reduce_to_effective_filter(const RelayNetwork& net) {
  const Graph g = build_graph(net);
  const auto& s_out = g.out[0];
  if (std::find(s_out.begin(), s_out.end(), 1) == s_out.end())
    throw DisconnectedSource("no direct S->D edge");
  {
    std::vector<bool> reached(g.names.size(), false);
    reached[0] = true;
    for (int v : g.topo)
      if (reached[v])
        for (int u : g.out[v]) reached[u] = true;
    for (std::size_t i = 2; i < g.names.size(); ++i)
      if (!reached[i]) throw DisconnectedSource("node " + g.names[i] + " is not reachable from S");
  }
  for (const auto& n : net.nodes)
    if (!is_stable(n.noise)) throw UnstableProcess("noise of node " + n.id + " is unstable");

  const std::vector<Poly> T = node_to_destination(net);
  Poly path{0.0};
  for (int u : s_out)
    if (u >= 2) path = poly_add(path, T[u - 2]);

  const std::size_t L = std::max<std::size_t>(network_memory(net), 1);
  EffectiveRelay out;
  out.taps.taps.assign(L, 0.0);
  for (std::size_t l = 1; l < path.size() && l <= L; ++l) out.taps.taps[l - 1] = path[l];

  std::vector<FilteredTerm> terms;
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    const Poly t = poly_trim(T[i]);
    if (t.size() == 1 && t[0] == 0.0) continue;
    terms.push_back({t, net.nodes[i].noise});
  }
  out.injected_noise = terms.empty() ? ArmaProcess::white(0.0) : combine_filtered({1.0}, terms);
  return out;
}

std::vector<NodePower> check_node_powers(const RelayNetwork& net) {
  const Graph g = build_graph(net);
  const std::size_t n = net.nodes.size();
  // Responses of each node's output to x and to every w_k.
  std::vector<Poly> ux(n, Poly{0.0});
  std::vector<std::vector<Poly>> uw(n, std::vector<Poly>(n, Poly{0.0}));
  for (int v : g.topo) {
    if (v < 2) continue;
    const std::size_t i = v - 2;
    Poly rx{0.0};
    std::vector<Poly> rw(n, Poly{0.0});
    rw[i] = {1.0};
    for (int u : g.in[v]) {
      if (u == 0) {
        rx = poly_add(rx, {1.0});
      } else if (u >= 2) {
        rx = poly_add(rx, ux[u - 2]);
        for (std::size_t k = 0; k < n; ++k) rw[k] = poly_add(rw[k], uw[u - 2][k]);
      }
    }
    const Poly f = node_poly(net.nodes[i]);
    ux[i] = poly_mul(f, rx);
    for (std::size_t k = 0; k < n; ++k) uw[i][k] = poly_mul(f, rw[k]);
  }
  std::vector<NodePower> out;
  for (std::size_t i = 0; i < n; ++i) {
    NodePower p;
    p.id = net.nodes[i].id;
    for (double c : ux[i]) p.power += net.rho * c * c;
    for (std::size_t k = 0; k < n; ++k) p.power += filtered_variance(uw[i][k], net.nodes[k].noise);
    p.budget = net.nodes[i].gamma * net.rho;
    p.ok = p.power <= p.budget * (1.0 + 1e-12);
    out.push_back(p);
  }
  return out;
}

namespace {

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::map<std::string, std::string> parse_kv(const std::string& body, const std::set<std::string>& allowed) {
  std::map<std::string, std::string> kv;
  int depth = 0;
  std::string cur;
  std::vector<std::string> parts;
  for (char c : body) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  for (const auto& part : parts) {
    const std::string p = strip(part);
    if (p.empty()) continue;
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw ConfigParse("expected key=value, got '" + p + "'");
    const std::string key = strip(p.substr(0, eq));
    if (!allowed.count(key)) throw ConfigParse("unknown key '" + key + "'");
    if (!kv.emplace(key, strip(p.substr(eq + 1))).second) throw ConfigParse("duplicate key '" + key + "'");
  }
  return kv;
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (strip(s.substr(used)).empty()) return v;
  } catch (const std::logic_error&) {
  }
  throw ConfigParse("bad number '" + s + "'");
}

std::vector<double> to_list(const std::string& s) {
  const std::string t = strip(s);
  if (t.size() < 2 || t.front() != '[' || t.back() != ']') throw ConfigParse("expected [list], got '" + s + "'");
  std::vector<double> out;
  std::stringstream ss(t.substr(1, t.size() - 2));
  std::string item;
  while (std::getline(ss, item, ','))
    if (!strip(item).empty()) out.push_back(to_double(item));
  return out;
}

ArmaProcess noise_from(const std::map<std::string, std::string>& kv) {
  const bool has_var = kv.count("sigma2") > 0;
  const bool has_arma = kv.count("beta") > 0 || kv.count("alpha") > 0;
  if (has_var && has_arma) throw ConfigParse("give either sigma2 or beta/alpha, not both");
  if (has_arma) {
    ArmaProcess p;
    p.beta = kv.count("beta") ? to_list(kv.at("beta")) : Poly{1.0};
    p.alpha = kv.count("alpha") ? to_list(kv.at("alpha")) : Poly{1.0};
    if (p.beta.empty() || p.beta[0] != 1.0) throw ConfigParse("beta[0] must be 1");
    if (p.alpha.empty()) throw ConfigParse("alpha must be non-empty");
    return p;
  }
  const double v = has_var ? to_double(kv.at("sigma2")) : 1.0;
  if (v < 0.0) throw ConfigParse("negative variance");
  return ArmaProcess::white(v);
}

}  // namespace

RelayNetwork parse_network(const std::string& text) {
  RelayNetwork net;
  net.edges.clear();
  std::stringstream ss(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(ss, raw)) {
    ++lineno;
    std::string line = strip(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    try {
      if (line.rfind("edge", 0) == 0) {
        const std::string e = strip(line.substr(4));
        const auto arrow = e.find("->");
        if (arrow == std::string::npos) throw ConfigParse("edge needs '->'");
        net.edges.emplace_back(strip(e.substr(0, arrow)), strip(e.substr(arrow + 2)));
        continue;
      }
      const auto colon = line.find(':');
      if (colon == std::string::npos) throw ConfigParse("expected 'section: key=value, ...'");
      const std::string head = strip(line.substr(0, colon));
      const std::string body = line.substr(colon + 1);
      if (head.rfind("node", 0) == 0) {
        RelayNode node;
        node.id = strip(head.substr(4));
        const auto kv = parse_kv(body, {"taps", "sigma2", "beta", "alpha", "gamma"});
        if (!kv.count("taps")) throw ConfigParse("node needs taps");
        node.filter.taps = to_list(kv.at("taps"));
        if (node.filter.taps.empty()) throw ConfigParse("node needs at least one tap");
        node.noise = noise_from(kv);
        if (kv.count("gamma")) node.gamma = to_double(kv.at("gamma"));
        if (node.gamma < 0.0) throw ConfigParse("gamma must be nonnegative");
        net.nodes.push_back(std::move(node));
      } else if (head == "source") {
        const auto kv = parse_kv(body, {"rho"});
        if (kv.count("rho")) net.rho = to_double(kv.at("rho"));
        if (!(net.rho > 0.0)) throw ConfigParse("rho must be positive");
      } else if (head == "destination") {
        net.dest_noise = noise_from(parse_kv(body, {"sigma2", "beta", "alpha"}));
      } else if (head == "feedback") {
        const auto kv = parse_kv(body, {"sigma_n2"});
        if (kv.count("sigma_n2")) net.sigma_n2 = to_double(kv.at("sigma_n2"));
      } else {
        throw ConfigParse("unknown section '" + head + "'");
      }
    } catch (const ConfigParse& e) {
      throw ConfigParse("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return net;
}

Eigen::MatrixXd toeplitz_covariance(const ArmaProcess& proc, int n) {
  const std::vector<double> g = autocovariance(proc, n > 0 ? n - 1 : 0);
  Eigen::MatrixXd K(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) K(i, j) = g[std::abs(i - j)];
  return K;
}

std::vector<double> banded_inverse_coeffs(const FirFilter& taps, int n) {
  std::vector<double> a(n, 0.0);
  if (n == 0) return a;
  a[0] = 1.0;
  for (int k = 1; k < n; ++k) {
    double s = 0.0;
    for (int i = 1; i <= std::min<int>(k, static_cast<int>(taps.L())); ++i) s -= taps.taps[i - 1] * a[k - i];
    a[k] = s;
  }
  return a;
}

Eigen::MatrixXd banded_toeplitz(const std::vector<double>& col, int n) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = std::max(0, i - static_cast<int>(col.size()) + 1); j <= i; ++j) M(i, j) = col[i - j];
  return M;
}

BlockChannel build_block_channel(const FirFilter& taps, const ArmaProcess& w, const ArmaProcess& z,
                                 int N) {
  if (N <= static_cast<int>(taps.L())) throw DimensionMismatch("block length must exceed the relay memory");
  BlockChannel ch;
  ch.N = N;
  ch.L = static_cast<int>(taps.L());
  std::vector<double> col{1.0};
  col.insert(col.end(), taps.taps.begin(), taps.taps.end());
  ch.H = banded_toeplitz(col, N);
  ch.Hinv = banded_toeplitz(banded_inverse_coeffs(taps, N), N);
  ch.Kw = toeplitz_covariance(w, N);
  ch.Kz = toeplitz_covariance(z, N);
  if (taps.is_zero()) {
    ch.Kz_eff = ch.Kz;
    return ch;
  }
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);
  const Eigen::MatrixXd A = I - ch.Hinv;
  ch.Kz_eff = A * ch.Kw * A.transpose() + ch.Hinv * ch.Kz * ch.Hinv.transpose();
  ch.Kz_eff = 0.5 * (ch.Kz_eff + ch.Kz_eff.transpose()).eval();
  return ch;
}

InputStatistics linear_feedback_statistics(const Eigen::MatrixXd& Ks, const Eigen::MatrixXd& B,
                                           const BlockChannel& ch, const ArmaProcess& w) {
  const int N = ch.N;
  if (Ks.rows() != N || Ks.cols() != N || B.rows() != N || B.cols() != N)
    throw DimensionMismatch("Ks and B must be N x N");
  InputStatistics in;
  in.Kx = Ks + B * ch.Kz_eff * B.transpose();
  const Eigen::MatrixXd Kw_full = toeplitz_covariance(w, N + ch.L);
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(N, N) - ch.Hinv;
  in.Kxw = B * A * Kw_full.topRows(N);
  return in;
}

InputStatistics open_loop_white(double rho, int N) {
  return {rho * Eigen::MatrixXd::Identity(N, N), Eigen::MatrixXd::Zero(N, N)};
}

double relay_power_exact(const FirFilter& taps, const ArmaProcess& w, const InputStatistics& in,
                         Normalization norm) {
  const int N = static_cast<int>(in.Kx.rows());
  if (in.Kx.cols() != N) throw DimensionMismatch("Kx must be square");
  if (in.Kxw.rows() != N || in.Kxw.cols() < N) throw DimensionMismatch("Kxw must be N x M with M >= N");
  if (taps.is_zero()) return 0.0;
  const int L = static_cast<int>(taps.L());
  const int M = norm == Normalization::kBlockPlusFlush ? N + L : N;
  Eigen::MatrixXd X = toeplitz_covariance(w, M);
  X.topLeftCorner(N, N) += in.Kx;
  const int c = std::min<int>(M, static_cast<int>(in.Kxw.cols()));
  X.topLeftCorner(N, c) += in.Kxw.leftCols(c);
  X.topLeftCorner(c, N) += in.Kxw.leftCols(c).transpose();
  std::vector<double> col{0.0};
  col.insert(col.end(), taps.taps.begin(), taps.taps.end());
  const Eigen::MatrixXd G = banded_toeplitz(col, M);
  return (G * X * G.transpose()).trace() / M;
}

double relay_power_stationary(const FirFilter& taps, const std::vector<double>& acov) {
  const std::size_t L = taps.L();
  if (acov.size() < L) throw DimensionMismatch("need autocovariance at lags 0..L-1");
  double p = 0.0;
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = 0; b < L; ++b) p += taps.taps[a] * taps.taps[b] * acov[a > b ? a - b : b - a];
  return p;
}

}  // namespace frelay
