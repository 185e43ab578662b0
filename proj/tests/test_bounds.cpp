// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "frelay/bounds.hpp"
#include "frelay/errors.hpp"
#include "oracles.hpp"

using namespace frelay;

namespace {

const double kP2P = 0.5 * std::log(2.0);

// For a reconstructible noise model the stabilizing solution yields
// rate = sum of log|lambda| over unstable eigenvalues of P - q c'.
double unstable_log_sum(const StateSpaceModel& m, const Eigen::VectorXd& s) {
  const Eigen::MatrixXd A = m.P - m.q * (s + m.r).transpose();
  const Eigen::VectorXcd ev = A.eigenvalues();
  double acc = 0.0;
  for (int i = 0; i < ev.size(); ++i)
    if (std::abs(ev(i)) > 1.0) acc += std::log(std::abs(ev(i)));
  return acc;
}

void check_self_consistent(const BoundResult& b, double rho) {
  if (b.model.d == 0 || b.Sigma.size() == 0) return;
  const Eigen::VectorXd c = b.s + b.model.r;
  CHECK(b.rate_nats == doctest::Approx(0.5 * std::log1p(c.dot(b.Sigma * c))).epsilon(1e-9));
  CHECK(b.s.dot(b.Sigma * b.s) <= rho / (b.model.alpha0 * b.model.alpha0) + 1e-9);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.Sigma);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);
}

}  // namespace

TEST_CASE("white noise Riccati baseline") {
  const Signaling s = best_signaling(to_state_space(ArmaProcess::white(1.0)), 1.0);
  CHECK(s.ric.rate == doctest::Approx(kP2P).epsilon(1e-10));
  const BoundResult off = best_rate_for_taps(FirFilter{{0.0}}, ArmaProcess::white(1.0), ArmaProcess::white(1.0), 1.0, 1.0);
  CHECK(off.rate_nats == doctest::Approx(kP2P).epsilon(1e-9));
}

TEST_CASE("zero signaling direction gives zero rate") {
  const StateSpaceModel m = to_state_space(ArmaProcess{{1.0, 0.6}, {1.0, 0.2}});
  const RiccatiSolution r = riccati_fixed_point(m, -m.r);
  CHECK(std::abs(r.rate) <= 1e-12);
}

TEST_CASE("Riccati fixed point against the unstable-eigenvalue oracle") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-0.9, 0.9);
  for (int t = 0; t < 100; ++t) {
    const ArmaProcess a{{1.0, U(rng), U(rng) * 0.5}, {1.0, U(rng), U(rng) * 0.3}};
    if (!is_stable(a) || min_root_modulus(a.alpha) <= 1.0) continue;
    const StateSpaceModel m = to_state_space(a);
    Eigen::VectorXd s(m.d);
    for (int i = 0; i < m.d; ++i) s(i) = 2.0 * U(rng);
    const Eigen::MatrixXd A = m.P - m.q * (s + m.r).transpose();
    const Eigen::VectorXcd ev = A.eigenvalues();
    bool near_circle = false;
    for (int i = 0; i < ev.size(); ++i) near_circle |= std::abs(std::abs(ev(i)) - 1.0) < 1e-3;
    if (near_circle) continue;
    const RiccatiSolution r = riccati_fixed_point(m, s);
    CHECK(r.rate == doctest::Approx(unstable_log_sum(m, s)).epsilon(1e-8).scale(1.0));
    CHECK(riccati_residual(m, s, r.Sigma) <= 1e-10);
  }
}

TEST_CASE("AWGN unit tap matches the cubic root") {
  const double xi = oracle::cubic_root_awgn();
  double a0, a1;
  ma1_effective_moments(ArmaProcess::white(1.0), ArmaProcess::white(1.0), 1.0, a0, a1);
  CHECK(quartic_rate_at(1.0, a0, a1, 1.0) == doctest::Approx(-std::log(xi)).epsilon(1e-10));
  const BoundResult r = best_rate_for_taps(FirFilter{{1.0 - 1e-7}}, ArmaProcess::white(1.0), ArmaProcess::white(1.0), 1.0, 2.0);
  CHECK(r.rate_nats == doctest::Approx(-std::log(xi)).epsilon(1e-6));
}

TEST_CASE("Riccati and quartic agree at h = 0.7") {
  const ArmaProcess w = ArmaProcess::white(1.0), z = ArmaProcess::white(1.0);
  const BoundResult r = best_rate_for_taps(FirFilter{{0.7}}, w, z, 1.0, 2.0);
  double a0, a1;
  ma1_effective_moments(w, z, 0.7, a0, a1);
  CHECK(std::abs(r.rate_nats - quartic_rate_at(0.7, a0, a1, 1.0)) <= 1e-6);
  check_self_consistent(r, 1.0);
}

TEST_CASE("quartic bound basics") {
  const ArmaProcess w = ArmaProcess::white(1.0), z = ArmaProcess::white(1.0);
  CHECK(quartic_bound_ma1(w, z, 1.0, 0.0).rate_nats == doctest::Approx(kP2P).epsilon(1e-12));
  // Relay-off is always feasible.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const double chi = U(rng), g = 3.0 * U(rng), rho = 0.2 + 3.0 * U(rng);
    const ArmaProcess wm{{1.0}, {chi, std::sqrt(1.0 - chi * chi)}};
    const BoundResult b = quartic_bound_ma1(wm, z, rho, g, 1e-3);
    CHECK(b.rate_nats >= 0.5 * std::log1p(rho) - 1e-9);
  }
  CHECK(max_single_tap(w, 1.0, 2.0) == doctest::Approx(1.0));
  CHECK(max_single_tap(w, 1.0, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("rate is nondecreasing in rho at fixed taps") {
  const ArmaProcess w{{1.0}, {0.5, 0.4}}, z = ArmaProcess::white(1.0);
  double prev = 0.0;
  for (double rho = 0.25; rho <= 4.0; rho += 0.25) {
    const double r = best_rate_for_taps(FirFilter{{0.3}}, w, z, rho, 100.0).rate_nats;
    CHECK(r >= prev - 1e-12);
    prev = r;
  }
}

TEST_CASE("single-tap search in both constraint modes") {
  const ArmaProcess z = ArmaProcess::white(1.0);
  const double chi = 0.25;
  const ArmaProcess w{{1.0}, {chi, std::sqrt(1 - chi * chi)}};
  const BoundResult relaxed = search_single_tap(w, z, 1.0, 2.0, ConstraintMode::kRelaxedTapBound);
  const BoundResult exact = search_single_tap(w, z, 1.0, 2.0, ConstraintMode::kExactRelayPower);
  const BoundResult quartic = quartic_bound_ma1(w, z, 1.0, 2.0);
  CHECK(relaxed.rate_nats == doctest::Approx(quartic.rate_nats).epsilon(1e-5));
  CHECK(exact.rate_nats == doctest::Approx(quartic.rate_nats).epsilon(1e-4));
  CHECK(relaxed.constraint_mode == ConstraintMode::kRelaxedTapBound);
  CHECK(exact.constraint_mode == ConstraintMode::kExactRelayPower);
  CHECK(exact.relay_power_used <= 2.0 * 1.0 + 1e-6);
  check_self_consistent(relaxed, 1.0);
  check_self_consistent(exact, 1.0);

  for (double g : {0.0, 0.5, 1.5})
    for (auto mode : {ConstraintMode::kRelaxedTapBound, ConstraintMode::kExactRelayPower}) {
      const BoundResult b = search_single_tap(w, z, 1.0, g, mode);
      CHECK(b.rate_nats >= kP2P - 1e-9);
      if (g == 0.0) CHECK(b.rate_nats == doctest::Approx(kP2P).epsilon(1e-9));
    }
}

TEST_CASE("taps outside the relaxed bound are rejected") {
  CHECK_THROWS_AS(best_rate_for_taps(FirFilter{{0.9}}, ArmaProcess::white(1.0), ArmaProcess::white(1.0), 1.0, 0.5),
                  InfeasibleTaps);
}

TEST_CASE("two-tap stationary bound is self consistent") {
  const BoundResult b = best_rate_for_taps(FirFilter{{0.6, 0.2}}, ArmaProcess::white(1.0), ArmaProcess::white(1.0), 1.0,
                                           5.0, ConstraintMode::kExactRelayPower);
  CHECK(b.model.d == 2);
  CHECK(b.rate_nats > kP2P);
  check_self_consistent(b, 1.0);
}

TEST_CASE("parallel bound") {
  const BoundResult single = parallel_bound({{1.0, 2.0}}, 1.0);
  const BoundResult q = quartic_bound_ma1(ArmaProcess::white(1.0), ArmaProcess::white(1.0), 1.0, 2.0);
  CHECK(single.rate_nats == doctest::Approx(q.rate_nats).epsilon(1e-6));

  CHECK(parallel_bound({{1.0, 0.0}, {1.0, 0.0}}, 1.0).rate_nats == doctest::Approx(kP2P).epsilon(1e-9));

  const BoundResult two = parallel_bound({{1.0, 1.0}, {1.0, 1.0}}, 1.0);
  REQUIRE(two.gains.size() == 2);
  const double h1 = two.gains[0], h2 = two.gains[1];
  const ArmaProcess wn = ArmaProcess::white(h1 * h1 + h2 * h2);
  // Reduced network: one tap h1+h2 carrying noise of variance h1^2+h2^2, fed as a unit-gain w.
  const ArmaProcess eff = compose_injected_noise(wn, ArmaProcess::white(1.0), FirFilter{{h1 + h2}});
  const Signaling s = best_signaling(to_state_space(eff), 1.0);
  CHECK(two.rate_nats == doctest::Approx(s.ric.rate).epsilon(1e-6));
  for (double h : two.gains) CHECK(h * h <= 1.0 * 1.0 / (1.0 + 1.0) + 1e-9);
  CHECK((h1 + h2) * (h1 + h2) <= 1.0 + 1e-9);
}

TEST_CASE("series bound") {
  const BoundResult one = series_bound({{1.0, 2.0}}, 1.0);
  const BoundResult q = quartic_bound_ma1(ArmaProcess::white(1.0), ArmaProcess::white(1.0), 1.0, 2.0);
  CHECK(one.rate_nats == doctest::Approx(q.rate_nats).epsilon(1e-6));

  CHECK(series_rate({{1.0, 1.0}, {1.0, 1.0}}, {0.0, 0.0}, 1.0).rate_nats == doctest::Approx(kP2P).epsilon(1e-9));

  // h1 = h2 = 0.5: AR at lag 2 with coefficient 0.25, innovation variance 1 + 0.25 * 0.25 + 0.25.
  const BoundResult fixed = series_rate({{1.0, 1.0}, {1.0, 1.0}}, {0.5, 0.5}, 1.0);
  const ArmaProcess ar2{{1.0, 0.0, 0.25}, {std::sqrt(1.0 + 0.0625 + 0.25)}};
  const Signaling s = best_signaling(to_state_space(ar2), 1.0);
  CHECK(fixed.rate_nats == doctest::Approx(s.ric.rate).epsilon(1e-8));

  const BoundResult best = series_bound({{1.0, 1.0}, {1.0, 1.0}}, 1.0);
  CHECK(best.rate_nats >= fixed.rate_nats - 1e-9);
  REQUIRE(best.gains.size() == 2);
  CHECK(best.gains[0] * best.gains[0] <= 1.0 / (1.0 + 1.0) + 1e-9);
  CHECK(best.gains[1] * best.gains[1] <= 1.0 / (1.0 + 1.0) + 1e-9);
  CHECK_THROWS_AS(series_rate({{1.0, 1.0}}, {1.0}, 1.0), UnstableEffectiveNoise);
}
