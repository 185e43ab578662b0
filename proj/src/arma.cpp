// SPDX-License-Identifier: Apache-2.0
#include "frelay/arma.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "frelay/errors.hpp"

namespace frelay {

namespace {

constexpr double kUnitClusterTol = 1e-5;
constexpr double kCancelTol = 1e-7;

void check_beta0(const ArmaProcess& proc) {
  if (proc.beta.empty() || proc.beta[0] != 1.0)
    throw std::invalid_argument("ARMA: beta[0] must equal 1");
  if (proc.alpha.empty()) throw std::invalid_argument("ARMA: empty alpha");
}

// Picks one factor root per reciprocal pair, on-circle pairs clustered by angle.
Roots select_outer_roots(const Roots& all, std::size_t q) {
  Roots outer, near;
  for (const auto& r : all) {
    const double m = std::abs(r);
    if (std::abs(m - 1.0) <= kUnitClusterTol)
      near.push_back(r);
    else if (m > 1.0)
      outer.push_back(r);
  }
  std::sort(near.begin(), near.end(),
            [](auto a, auto b) { return std::arg(a) < std::arg(b); });
  std::vector<bool> used(near.size(), false);
  for (std::size_t i = 0; i < near.size(); ++i) {
    if (used[i]) continue;
    std::size_t best = near.size();
    double bd = 1e300;
    for (std::size_t j = i + 1; j < near.size(); ++j) {
      if (used[j]) continue;
      const double dist = std::abs(near[i] - near[j]);
      if (dist < bd) bd = dist, best = j;
    }
    if (best == near.size()) break;
    used[i] = used[best] = true;
    std::complex<double> mid = 0.5 * (near[i] + near[best]);
    outer.push_back(mid / std::abs(mid));
  }
  if (outer.size() == q) return outer;
  Roots sorted(all);
  std::sort(sorted.begin(), sorted.end(),
            [](auto a, auto b) { return std::abs(a) > std::abs(b); });
  sorted.resize(q);
  return sorted;
}

std::vector<double> add_autocov(std::vector<double> a, const std::vector<double>& b) {
  if (a.size() < b.size()) a.resize(b.size(), 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) a[i] += b[i];
  return a;
}

}  // namespace

ArmaProcess ArmaProcess::white(double variance) {
  if (!(variance >= 0.0)) throw std::invalid_argument("white: negative variance");
  return ArmaProcess{{1.0}, {std::sqrt(variance)}};
}

bool FirFilter::is_zero() const {
  return std::all_of(taps.begin(), taps.end(), [](double h) { return h == 0.0; });
}

Poly FirFilter::H() const {
  Poly h{1.0};
  h.insert(h.end(), taps.begin(), taps.end());
  return poly_trim(h);
}

Poly FirFilter::H1() const {
  Poly h{0.0};
  h.insert(h.end(), taps.begin(), taps.end());
  return poly_trim(h);
}

double min_root_modulus(const Poly& g) {
  const Roots roots = poly_roots(g);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : roots) m = std::min(m, std::abs(r));
  return m;
}

bool is_stable(const ArmaProcess& proc) {
  check_beta0(proc);
  return min_root_modulus(proc.beta) > 1.0 + kStabilityTol;
}

StateSpaceModel to_state_space(const ArmaProcess& proc) {
  check_beta0(proc);
  if (!is_stable(proc)) throw UnstableProcess("AR polynomial has a zero on or inside the unit circle");
  if (!(proc.alpha[0] > 0.0)) throw std::invalid_argument("to_state_space: alpha0 must be positive");
  StateSpaceModel m;
  m.d = static_cast<int>(std::max(proc.p(), proc.q()));
  m.alpha0 = proc.alpha[0];
  m.white = m.d == 0;
  m.P = Eigen::MatrixXd::Zero(m.d, m.d);
  m.q = Eigen::VectorXd::Zero(m.d);
  m.r = Eigen::VectorXd::Zero(m.d);
  if (m.d == 0) return m;
  m.q(0) = 1.0;
  for (int j = 1; j <= m.d; ++j) {
    const double b = j < static_cast<int>(proc.beta.size()) ? proc.beta[j] : 0.0;
    const double a = j < static_cast<int>(proc.alpha.size()) ? proc.alpha[j] : 0.0;
    m.P(0, j - 1) = -b;
    m.r(j - 1) = a / m.alpha0 - b;
  }
  for (int i = 1; i < m.d; ++i) m.P(i, i - 1) = 1.0;
  return m;
}

ArmaProcess reconstruct(const StateSpaceModel& model) {
  ArmaProcess out;
  out.beta.assign(model.d + 1, 0.0);
  out.alpha.assign(model.d + 1, 0.0);
  out.beta[0] = 1.0;
  out.alpha[0] = model.alpha0;
  for (int j = 1; j <= model.d; ++j) {
    out.beta[j] = -model.P(0, j - 1);
    out.alpha[j] = model.alpha0 * (model.r(j - 1) + out.beta[j]);
  }
  return out;
}

std::vector<double> spectral_factorize(std::vector<double> c) {
  if (c.empty()) throw std::invalid_argument("spectral_factorize: empty autocovariance");
  const double scale = std::max(std::abs(c[0]), 1e-300);
  while (c.size() > 1 && std::abs(c.back()) <= 1e-14 * scale) c.pop_back();

  constexpr int kGrid = 4096;
  for (int k = 0; k < kGrid; ++k) {
    const double w = 2.0 * std::numbers::pi * k / kGrid;
    double s = c[0];
    for (std::size_t j = 1; j < c.size(); ++j) s += 2.0 * c[j] * std::cos(w * j);
    if (s < -1e-9) throw NotPSDSpectrum("symbol negative at omega=" + std::to_string(w));
  }
  if (c[0] <= 0.0) {
    if (c[0] < -1e-9) throw NotPSDSpectrum("negative lag-0 autocovariance");
    return {0.0};
  }
  const std::size_t q = c.size() - 1;
  if (q == 0) return {std::sqrt(c[0])};

  Poly lsym(2 * q + 1);
  for (std::size_t k = 0; k <= 2 * q; ++k)
    lsym[k] = c[k > q ? k - q : q - k];
  const Roots sel = select_outer_roots(poly_roots(lsym), q);
  Poly f = poly_from_roots(sel);
  double e = 0.0;
  for (double v : f) e += v * v;
  return poly_scale(f, std::sqrt(c[0] / e));
}

ArmaProcess combine_filtered(const Poly& ar_extra, const std::vector<FilteredTerm>& terms) {
  if (ar_extra.empty() || ar_extra[0] != 1.0)
    throw std::invalid_argument("combine_filtered: ar_extra[0] must equal 1");
  Poly ar = ar_extra;
  for (const auto& t : terms) {
    check_beta0(t.proc);
    ar = poly_mul(ar, t.proc.beta);
  }
  ar = poly_trim(ar);
  if (ar.size() > 1 && min_root_modulus(ar) <= 1.0 + kStabilityTol)
    throw UnstableEffectiveNoise("composite AR polynomial has a zero on or inside the unit circle");

  std::vector<double> spec{0.0};
  for (std::size_t i = 0; i < terms.size(); ++i) {
    Poly num = poly_mul(terms[i].filter, terms[i].proc.alpha);
    for (std::size_t j = 0; j < terms.size(); ++j)
      if (j != i) num = poly_mul(num, terms[j].proc.beta);
    spec = add_autocov(std::move(spec), poly_autocov(num));
  }
  Poly ma = spectral_factorize(spec);

  ArmaProcess out{ar, ma};
  if (ar.size() <= 1 || ma.size() <= 1 || ma[0] == 0.0) return out;

  Roots ar_roots = poly_roots(ar);
  Roots ma_roots = poly_roots(ma);
  std::vector<bool> ar_keep(ar_roots.size(), true), ma_keep(ma_roots.size(), true);
  bool cancelled = false;
  for (std::size_t i = 0; i < ar_roots.size(); ++i) {
    for (std::size_t j = 0; j < ma_roots.size(); ++j) {
      if (!ma_keep[j]) continue;
      if (std::abs(ar_roots[i] - ma_roots[j]) < kCancelTol) {
        ar_keep[i] = ma_keep[j] = false;
        cancelled = true;
        break;
      }
    }
  }
  if (!cancelled) return out;
  Roots ar_left, ma_left;
  for (std::size_t i = 0; i < ar_roots.size(); ++i)
    if (ar_keep[i]) ar_left.push_back(ar_roots[i]);
  for (std::size_t j = 0; j < ma_roots.size(); ++j)
    if (ma_keep[j]) ma_left.push_back(ma_roots[j]);
  out.beta = poly_from_roots(ar_left);
  out.alpha = poly_scale(poly_from_roots(ma_left), ma[0]);
  return out;
}

ArmaProcess compose_effective_noise(const ArmaProcess& w, const ArmaProcess& z,
                                    const FirFilter& taps) {
  if (taps.L() == 0) throw std::invalid_argument("compose_effective_noise: empty filter");
  if (!is_stable(w) || !is_stable(z)) throw UnstableProcess("compose_effective_noise: input unstable");
  if (taps.is_zero()) return z;
  return combine_filtered(taps.H(), {{taps.H1(), w}, {{1.0}, z}});
}

ArmaProcess compose_injected_noise(const ArmaProcess& n, const ArmaProcess& z,
                                   const FirFilter& taps) {
  if (!is_stable(n) || !is_stable(z)) throw UnstableProcess("compose_injected_noise: input unstable");
  const Poly h = taps.L() == 0 ? Poly{1.0} : taps.H();
  return combine_filtered(h, {{{1.0}, n}, {{1.0}, z}});
}

std::vector<double> impulse_response(const ArmaProcess& proc, std::size_t n) {
  return series_div(proc.alpha, proc.beta, n);
}

std::vector<double> autocovariance(const ArmaProcess& proc, std::size_t max_lag) {
  check_beta0(proc);
  const std::size_t p = proc.p(), q = proc.q();
  const std::vector<double> psi = impulse_response(proc, q + 1);
  auto rhs = [&](std::size_t m) {
    double s = 0.0;
    for (std::size_t j = m; j <= q; ++j) s += proc.alpha[j] * psi[j - m];
    return s;
  };
  std::vector<double> g(std::max(max_lag, p) + 1, 0.0);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p + 1, p + 1);
  Eigen::VectorXd b(p + 1);
  for (std::size_t m = 0; m <= p; ++m) {
    for (std::size_t j = 0; j <= p; ++j) {
      const std::size_t lag = m > j ? m - j : j - m;
      A(m, lag) += proc.beta[j];
    }
    b(m) = rhs(m);
  }
  const Eigen::VectorXd head = A.fullPivLu().solve(b);
  for (std::size_t m = 0; m <= p; ++m) g[m] = head(m);
  for (std::size_t m = p + 1; m < g.size(); ++m) {
    double s = rhs(m);
    for (std::size_t j = 1; j <= p; ++j) s -= proc.beta[j] * g[m - j];
    g[m] = s;
  }
  g.resize(max_lag + 1);
  return g;
}

std::vector<double> sample_path(const ArmaProcess& proc, std::size_t n, std::uint64_t seed) {
  if (!is_stable(proc)) throw UnstableProcess("sample_path: process unstable");
  std::size_t burn = 100;
  if (proc.p() > 0) {
    const double radius = 1.0 / min_root_modulus(proc.beta);
    if (radius > 0.0) {
      const double need = std::log(1e-16) / std::log(radius);
      burn = static_cast<std::size_t>(std::clamp(std::ceil(need), 100.0, 1e6));
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t total = n + burn;
  const std::size_t p = proc.p(), q = proc.q();
  std::vector<double> eps(total), z(total, 0.0);
  for (auto& e : eps) e = nd(rng);
  for (std::size_t k = 0; k < total; ++k) {
    double v = 0.0;
    for (std::size_t j = 0; j <= std::min(k, q); ++j) v += proc.alpha[j] * eps[k - j];
    for (std::size_t j = 1; j <= std::min(k, p); ++j) v -= proc.beta[j] * z[k - j];
    z[k] = v;
  }
  return std::vector<double>(z.begin() + static_cast<std::ptrdiff_t>(burn), z.end());
}

namespace {

std::string fmt_list(const Poly& v) {
  std::ostringstream os;
  os.precision(17);
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ']';
  return os.str();
}

Poly parse_list(const std::string& s) {
  Poly out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    std::size_t used = 0;
    const std::string t = item.substr(b);
    double v = std::stod(t, &used);
    if (t.find_first_not_of(" \t", used) != std::string::npos)
      throw ConfigParse("bad number '" + t + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

std::string to_string(const ArmaProcess& proc) {
  return "arma: beta=" + fmt_list(proc.beta) + ", alpha=" + fmt_list(proc.alpha);
}

ArmaProcess parse_arma(const std::string& text) {
  static const std::regex re(
      R"(^\s*arma:\s*beta\s*=\s*\[([^\]]*)\]\s*,\s*alpha\s*=\s*\[([^\]]*)\]\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) throw ConfigParse("not an ARMA law: '" + text + "'");
  ArmaProcess out;
  try {
    out.beta = parse_list(m[1].str());
    out.alpha = parse_list(m[2].str());
  } catch (const std::logic_error&) {
    throw ConfigParse("bad coefficient in '" + text + "'");
  }
  if (out.beta.empty() || out.beta[0] != 1.0) throw ConfigParse("beta[0] must be 1");
  if (out.alpha.empty()) throw ConfigParse("alpha must be non-empty");
  return out;
}

}  // namespace frelay
