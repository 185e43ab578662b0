// SPDX-License-Identifier: Apache-2.0
#include "frelay/poly.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace frelay {

Poly poly_mul(const Poly& a, const Poly& b) {
  if (a.empty() || b.empty()) return {};
  Poly out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

Poly poly_add(const Poly& a, const Poly& b) {
  Poly out(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
  return out;
}

Poly poly_scale(const Poly& a, double c) {
  Poly out(a);
  for (double& v : out) v *= c;
  return out;
}

Poly poly_trim(Poly a, double tol) {
  while (a.size() > 1 && std::abs(a.back()) <= tol) a.pop_back();
  return a;
}

double poly_eval(const Poly& a, double x) {
  double acc = 0.0;
  for (auto it = a.rbegin(); it != a.rend(); ++it) acc = acc * x + *it;
  return acc;
}

std::complex<double> poly_eval(const Poly& a, std::complex<double> x) {
  std::complex<double> acc = 0.0;
  for (auto it = a.rbegin(); it != a.rend(); ++it) acc = acc * x + *it;
  return acc;
}

Roots poly_roots(const Poly& a_in) {
  Poly a = poly_trim(a_in);
  const int n = static_cast<int>(a.size()) - 1;
  if (n <= 0) return {};
  if (a.back() == 0.0) throw std::invalid_argument("poly_roots: zero polynomial");
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) comp(0, j) = -a[n - 1 - j] / a[n];
  for (int i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  Roots out(n);
  for (int i = 0; i < n; ++i) out[i] = es.eigenvalues()[i];
  return out;
}

Poly poly_from_roots(const Roots& roots) {
  std::vector<std::complex<double>> c{1.0};
  for (const auto& r : roots) {
    std::vector<std::complex<double>> next(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= c[i] / r;
    }
    c = std::move(next);
  }
  Poly out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

std::vector<double> poly_autocov(const Poly& a) {
  std::vector<double> c(a.size(), 0.0);
  for (std::size_t j = 0; j < a.size(); ++j)
    for (std::size_t i = 0; i + j < a.size(); ++i) c[j] += a[i] * a[i + j];
  return c;
}

std::vector<double> series_div(const Poly& num, const Poly& den, std::size_t n) {
  if (den.empty() || den[0] == 0.0) throw std::invalid_argument("series_div: den[0] == 0");
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double v = k < num.size() ? num[k] : 0.0;
    const std::size_t m = std::min(k, den.size() - 1);
    for (std::size_t j = 1; j <= m; ++j) v -= den[j] * out[k - j];
    out[k] = v / den[0];
  }
  return out;
}

std::vector<double> series_mul(const std::vector<double>& a, const std::vector<double>& b,
                               std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < std::min(n, a.size()); ++i) {
    if (a[i] == 0.0) continue;
    const std::size_t m = std::min(b.size(), n - i);
    for (std::size_t j = 0; j < m; ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

}  // namespace frelay
