// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "frelay/arma.hpp"
#include "frelay/errors.hpp"
#include "frelay/poly.hpp"
#include "oracles.hpp"

using namespace frelay;

namespace {

ArmaProcess random_stable(std::mt19937_64& rng, int p, int q) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<std::complex<double>> roots;
  for (int i = 0; i < p; ++i) roots.push_back((1.2 + 2.0 * std::abs(U(rng))) * (U(rng) < 0 ? -1.0 : 1.0));
  ArmaProcess a;
  a.beta = oracle::from_roots(roots);
  a.alpha.assign(q + 1, 0.0);
  a.alpha[0] = 0.5 + std::abs(U(rng));
  for (int j = 1; j <= q; ++j) a.alpha[j] = U(rng);
  return a;
}

}  // namespace

TEST_CASE("polynomial helpers") {
  CHECK(poly_mul({1, 2}, {1, -1}) == Poly{1, 1, -2});
  CHECK(poly_add({1}, {0, 3}) == Poly{1, 3});
  CHECK(poly_eval(Poly{1, 2, 3}, 2.0) == doctest::Approx(17.0));
  const Roots r = poly_roots({2, -3, 1});  // zeros 1 and 2
  REQUIRE(r.size() == 2);
  CHECK(std::min(std::abs(r[0]), std::abs(r[1])) == doctest::Approx(1.0));
  CHECK(std::max(std::abs(r[0]), std::abs(r[1])) == doctest::Approx(2.0));
  const Poly back = poly_from_roots(r);
  CHECK(back[1] == doctest::Approx(-1.5));
  CHECK(back[2] == doctest::Approx(0.5));
  const std::vector<double> s = series_div({1}, {1, -0.5}, 5);
  for (int k = 0; k < 5; ++k) CHECK(s[k] == doctest::Approx(std::pow(0.5, k)));
  CHECK(poly_autocov({1, 2}) == std::vector<double>{5, 2});
}

TEST_CASE("state-space realization of simple laws") {
  const StateSpaceModel w = to_state_space(ArmaProcess::white(1.0));
  CHECK(w.d == 0);
  CHECK(w.white);
  CHECK(w.alpha0 == doctest::Approx(1.0));

  const StateSpaceModel ar = to_state_space(ArmaProcess{{1.0, 0.5}, {0.8}});
  REQUIRE(ar.d == 1);
  CHECK(ar.P(0, 0) == doctest::Approx(-0.5));
  CHECK(ar.q(0) == doctest::Approx(1.0));
  CHECK(ar.r(0) == doctest::Approx(-0.5));
  CHECK(ar.alpha0 == doctest::Approx(0.8));

  CHECK_THROWS_AS(to_state_space(ArmaProcess{{1.0, -1.0}, {1.0}}), UnstableProcess);
  CHECK_THROWS_AS(to_state_space(ArmaProcess{{1.0, 2.0}, {1.0}}), UnstableProcess);
}

TEST_CASE("reconstruction round trip and impulse responses") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const int p = static_cast<int>(rng() % 4), q = static_cast<int>(rng() % 4);
    const ArmaProcess a = random_stable(rng, p, q);
    const StateSpaceModel m = to_state_space(a);
    const ArmaProcess b = reconstruct(m);
    for (std::size_t j = 0; j < b.beta.size(); ++j) {
      const double ref = j < a.beta.size() ? a.beta[j] : 0.0;
      CHECK(std::abs(b.beta[j] - ref) <= 1e-12);
    }
    for (std::size_t j = 0; j < b.alpha.size(); ++j) {
      const double ref = j < a.alpha.size() ? a.alpha[j] : 0.0;
      CHECK(std::abs(b.alpha[j] - ref) <= 1e-12);
    }
    // Impulse response of the realization: alpha0 (1, r'q, r'Pq, ...).
    const std::vector<double> h = oracle::impulse(a.beta, a.alpha, 50);
    if (m.d == 0) continue;
    Eigen::VectorXd x = m.q;
    CHECK(std::abs(h[0] - m.alpha0) <= 1e-12);
    for (int k = 1; k < 50; ++k) {
      CHECK(std::abs(h[k] - m.alpha0 * m.r.dot(x)) <= 1e-10 * (1.0 + std::abs(h[k])));
      x = m.P * x;
    }
  }
}

TEST_CASE("spectral factorization examples") {
  const std::vector<double> white = spectral_factorize({1.25, 0.0});
  CHECK(white[0] == doctest::Approx(std::sqrt(1.25)));

  const std::vector<double> a = spectral_factorize({1.49, 0.11861});
  REQUIRE(a.size() == 2);
  CHECK(a[0] > 0.0);
  CHECK(a[0] * a[0] + a[1] * a[1] == doctest::Approx(1.49).epsilon(1e-12));
  CHECK(a[0] * a[1] == doctest::Approx(0.11861).epsilon(1e-12));
  CHECK(std::abs(a[1] / a[0]) <= 1.0);

  CHECK_THROWS_AS(spectral_factorize({1.0, 0.8}), NotPSDSpectrum);
}

TEST_CASE("spectral factorization round trip on random MA(3)") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> alpha(4);
    for (auto& v : alpha) v = nd(rng);
    const std::vector<double> c = oracle::acov_from_impulse(alpha, 3);
    const std::vector<double> f = spectral_factorize(c);
    const std::vector<double> c2 = oracle::acov_from_impulse(f, 3);
    for (int l = 0; l <= 3; ++l) CHECK(std::abs(c2[l] - c[l]) <= 1e-9 * std::max(1.0, c[0]));
    CHECK(f[0] > 0.0);
    if (f.size() > 1) CHECK(min_root_modulus(f) >= 1.0 - 1e-6);
  }
}

TEST_CASE("autocovariance matches truncated impulse sums") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const ArmaProcess a = random_stable(rng, static_cast<int>(rng() % 3), static_cast<int>(rng() % 3));
    const std::vector<double> c = autocovariance(a, 10);
    const std::vector<double> ref = oracle::acov_from_impulse(oracle::impulse(a.beta, a.alpha, 4000), 10);
    for (int l = 0; l <= 10; ++l) CHECK(c[l] == doctest::Approx(ref[l]).epsilon(1e-9).scale(ref[0]));
  }
}

TEST_CASE("effective noise of a white single-tap relay") {
  const ArmaProcess e = compose_effective_noise(ArmaProcess::white(1.0), ArmaProcess::white(1.0), FirFilter{{0.5}});
  REQUIRE(e.beta.size() == 2);
  CHECK(e.beta[1] == doctest::Approx(0.5));
  REQUIRE(e.alpha.size() >= 1);
  CHECK(e.alpha[0] == doctest::Approx(std::sqrt(1.25)));
  for (std::size_t j = 1; j < e.alpha.size(); ++j) CHECK(std::abs(e.alpha[j]) <= 1e-9);

  const ArmaProcess z{{1.0, -0.3}, {1.0, 0.2}};
  const ArmaProcess off = compose_effective_noise(ArmaProcess::white(1.0), z, FirFilter{{0.0, 0.0}});
  CHECK(off.beta == z.beta);
  CHECK(off.alpha == z.alpha);

  CHECK_THROWS_AS(compose_effective_noise(ArmaProcess::white(1.0), ArmaProcess::white(1.0), FirFilter{{1.0}}),
                  UnstableEffectiveNoise);
}

TEST_CASE("white relay with L taps gives ARMA(L, L-1)") {
  const ArmaProcess w = ArmaProcess::white(0.7), z = ArmaProcess::white(1.0);
  const std::vector<std::vector<double>> cases = {{0.4}, {0.3, -0.2}, {0.5, 0.1, 0.05}};
  for (const auto& taps : cases) {
    const ArmaProcess e = compose_effective_noise(w, z, FirFilter{taps});
    CHECK(e.p() == taps.size());
    CHECK(e.q() <= taps.size() - 1);
  }
}

TEST_CASE("order bounds hold on random instances") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-0.45, 0.45);
  for (int t = 0; t < 1000; ++t) {
    const int p1 = static_cast<int>(rng() % 3), q1 = static_cast<int>(rng() % 3);
    const int p2 = static_cast<int>(rng() % 3), q2 = static_cast<int>(rng() % 3);
    const ArmaProcess w = random_stable(rng, p1, q1), z = random_stable(rng, p2, q2);
    const std::size_t L = 1 + rng() % 3;
    std::vector<double> taps(L);
    for (auto& h : taps) h = U(rng);  // sum |h| < 1.35 keeps H mostly stable
    if (min_root_modulus(FirFilter{taps}.H()) <= 1.01) continue;
    const ArmaProcess e = compose_effective_noise(w, z, FirFilter{taps});
    CHECK(e.p() <= L + p1 + p2);
    CHECK(e.q() <= std::max<std::size_t>(L + p2 + q1 - 1, p1 + q2));
  }
}

TEST_CASE("sample paths") {
  const std::vector<double> a = sample_path(ArmaProcess::white(1.5), 1000000, 4);
  const std::vector<double> c = oracle::sample_acov(a, 1);
  CHECK(c[0] == doctest::Approx(1.5).epsilon(0.01));

  const std::vector<double> b = sample_path(ArmaProcess{{1.0, 0.5}, {1.0}}, 1000000, 9);
  const std::vector<double> cb = oracle::sample_acov(b, 1);
  CHECK(cb[1] / cb[0] == doctest::Approx(-0.5).epsilon(0.01));

  CHECK(sample_path(ArmaProcess{{1.0, 0.2}, {1.0, 0.3}}, 100, 8) ==
        sample_path(ArmaProcess{{1.0, 0.2}, {1.0, 0.3}}, 100, 8));
}

TEST_CASE("text form round trip") {
  const ArmaProcess a{{1.0, -0.25}, {0.9, 0.125}};
  const ArmaProcess b = parse_arma(to_string(a));
  CHECK(a.beta == b.beta);
  CHECK(a.alpha == b.alpha);
  CHECK_THROWS_AS(parse_arma("arma: beta=[2], alpha=[1]"), ConfigParse);
  CHECK_THROWS_AS(parse_arma("beta=[1], alpha=[1]"), ConfigParse);
  CHECK_THROWS_AS(parse_arma("arma: beta=[1, x], alpha=[1]"), ConfigParse);
}
