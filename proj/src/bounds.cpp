// SPDX-License-Identifier: Apache-2.0
#include "frelay/bounds.hpp"

#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <cmath>
#include <functional>
#include <limits>

#include "frelay/errors.hpp"
#include "frelay/network.hpp"

namespace frelay {

namespace {

constexpr double kUnitTol = 1e-8;
constexpr int kRiccatiCap = 100000;

double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Point on the ray s = t u: s' Sigma s and the rate.
struct RayEval {
  double power = 0.0;
  double rate = 0.0;
  bool solved = false;
  RiccatiSolution ric;
};

RayEval eval_ray(const StateSpaceModel& m, const Eigen::VectorXd& u, double t, bool full = false) {
  RayEval out;
  const Eigen::VectorXd s = t * u;
  const Eigen::MatrixXd A = m.P - m.q * (s + m.r).transpose();
  if (spectral_radius(A) < 1.0 - kUnitTol) return out;  // Sigma = 0
  if (m.d == 1 && !full) {
    // Scalar fixed point: Sigma = (A^2 - 1) / c^2.
    const double a = A(0, 0), c = s(0) + m.r(0);
    if (std::abs(a) <= 1.0 + kUnitTol) return out;
    out.power = s(0) * s(0) * (a * a - 1.0) / (c * c);
    out.rate = std::log(std::abs(a));
    out.solved = true;
    return out;
  }
  try {
    out.ric = riccati_fixed_point(m, s);
  } catch (const UnitCircleEigenvalue&) {
    return out;
  } catch (const NoConvergence&) {
    return out;
  }
  out.power = s.dot(out.ric.Sigma * s);
  out.rate = out.ric.rate;
  out.solved = true;
  return out;
}

// Best boundary point along direction u; rate < 0 when the ray never meets the boundary.
struct RayBest {
  double rate = -1.0;
  double t = 0.0;
  RiccatiSolution ric;
};

RayBest best_on_ray(const StateSpaceModel& m, const Eigen::VectorXd& u, double target) {
  RayBest best;
  constexpr int kScan = 40;
  double t_prev = 0.0, p_prev = 0.0;
  auto refine = [&](double lo, double hi) {
    auto f = [&](double t) { return eval_ray(m, u, t).power - target; };
    boost::uintmax_t iters = 100;
    const auto br = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(34), iters);
    const double t = br.first;
    RayEval e = eval_ray(m, u, t);
    if (e.power > target * (1.0 + 1e-9)) return;
    if (e.solved && e.rate > best.rate) {
      if (m.d == 1) e = eval_ray(m, u, t, true);
      if (!e.solved) return;
      best.rate = e.rate;
      best.t = t;
      best.ric = e.ric;
    }
  };
  for (int k = 0; k <= kScan + 40; ++k) {
    const double t = k <= kScan ? 1e-3 * std::pow(1e6, static_cast<double>(k) / kScan)
                                : 1e3 * std::pow(2.0, k - kScan);
    const double p = eval_ray(m, u, t).power;
    if (p_prev <= target && p > target) refine(t_prev, t);
    if (k >= kScan && best.rate >= 0.0) break;
    t_prev = t;
    p_prev = p;
  }
  return best;
}

struct NmContext {
  std::function<double(const Eigen::VectorXd&)> f;
  int n;
};

double nm_trampoline(const gsl_vector* v, void* params) {
  auto* ctx = static_cast<NmContext*>(params);
  Eigen::VectorXd x(ctx->n);
  for (int i = 0; i < ctx->n; ++i) x(i) = gsl_vector_get(v, i);
  return ctx->f(x);
}

Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x0, double step, int max_iter, double& fbest) {
  const int n = static_cast<int>(x0.size());
  NmContext ctx{f, n};
  gsl_multimin_function fn{&nm_trampoline, static_cast<std::size_t>(n), &ctx};
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* ss = gsl_vector_alloc(n);
  for (int i = 0; i < n; ++i) gsl_vector_set(x, i, x0(i));
  gsl_vector_set_all(ss, step);
  gsl_multimin_fminimizer* st = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(st, &fn, x, ss);
  for (int it = 0; it < max_iter; ++it) {
    if (gsl_multimin_fminimizer_iterate(st)) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(st), 1e-7) == GSL_SUCCESS) break;
  }
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) out(i) = gsl_vector_get(st->x, i);
  fbest = st->fval;
  gsl_multimin_fminimizer_free(st);
  gsl_vector_free(x);
  gsl_vector_free(ss);
  return out;
}

// y = (num / den) x for a causal sequence x.
std::vector<double> iir_filter(const Poly& num, const Poly& den, const std::vector<double>& x) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < num.size() && i <= n; ++i) acc += num[i] * x[n - i];
    for (std::size_t j = 1; j < den.size() && j <= n; ++j) acc -= den[j] * y[n - j];
    y[n] = acc / den[0];
  }
  return y;
}

void check_taps_stable(const FirFilter& taps) {
  const Poly h = taps.H();
  if (h.size() > 1 && min_root_modulus(h) <= 1.0 + kStabilityTol)
    throw InfeasibleTaps("relay filter makes the effective noise unstable");
}

}  // namespace

std::string to_string(ConstraintMode m) {
  return m == ConstraintMode::kRelaxedTapBound ? "relaxed_tap_bound" : "exact_relay_power";
}

StateSpaceModel padded_model(const StateSpaceModel& model) {
  if (model.d > 0) return model;
  StateSpaceModel m = model;
  m.d = 1;
  m.P = Eigen::MatrixXd::Zero(1, 1);
  m.q = Eigen::VectorXd::Ones(1);
  m.r = Eigen::VectorXd::Zero(1);
  m.white = true;
  return m;
}

double riccati_residual(const StateSpaceModel& model, const Eigen::VectorXd& s,
                        const Eigen::MatrixXd& S) {
  const StateSpaceModel m = padded_model(model);
  const Eigen::VectorXd c = s + m.r;
  const Eigen::VectorXd v = m.P * S * c + m.q;
  const Eigen::MatrixXd rhs =
      m.P * S * m.P.transpose() + m.q * m.q.transpose() - v * v.transpose() / (1.0 + c.dot(S * c));
  return (rhs - S).cwiseAbs().maxCoeff();
}

RiccatiSolution riccati_fixed_point(const StateSpaceModel& model, const Eigen::VectorXd& s) {
  const StateSpaceModel m = padded_model(model);
  if (s.size() != m.d) throw DimensionMismatch("signaling vector has wrong dimension");
  const Eigen::VectorXd c = s + m.r;
  const Eigen::MatrixXd A = m.P - m.q * c.transpose();
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (std::abs(std::abs(es.eigenvalues()[i]) - 1.0) <= kUnitTol)
      throw UnitCircleEigenvalue("closed-loop matrix has an eigenvalue on the unit circle");

  const Eigen::MatrixXd Q = m.q * m.q.transpose();
  // Positive definite start; q q' alone can stall on the zero solution for lagged AR models.
  Eigen::MatrixXd S = Q + Eigen::MatrixXd::Identity(m.d, m.d);
  RiccatiSolution out;
  bool done = false;
  for (int it = 1; it <= kRiccatiCap; ++it) {
    const Eigen::VectorXd v = m.P * S * c + m.q;
    Eigen::MatrixXd next = m.P * S * m.P.transpose() + Q - v * v.transpose() / (1.0 + c.dot(S * c));
    next = 0.5 * (next + next.transpose()).eval();
    const double diff = (next - S).cwiseAbs().maxCoeff();
    S = std::move(next);
    out.iterations = it;
    if (diff <= 1e-12 * std::max(1.0, S.cwiseAbs().maxCoeff())) {
      done = true;
      break;
    }
  }
  if (!done) throw NoConvergence("Riccati iteration hit the iteration cap");
  out.Sigma = S;
  out.rate = 0.5 * std::log1p(c.dot(S * c));
  out.residual = riccati_residual(m, s, S);
  return out;
}

Signaling best_signaling(const StateSpaceModel& model, double rho) {
  const StateSpaceModel m = padded_model(model);
  const double target = rho / (m.alpha0 * m.alpha0);
  Signaling out;
  if (m.d == 1) {
    double best = -1.0;
    for (double sign : {1.0, -1.0}) {
      const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, sign);
      const RayBest rb = best_on_ray(m, u, target);
      if (rb.rate > best) {
        best = rb.rate;
        out.s = rb.t * u;
        out.ric = rb.ric;
      }
    }
    if (best < 0.0) throw NoConvergence("no signaling vector meets the power constraint");
    return out;
  }
  auto objective = [&](const Eigen::VectorXd& x) {
    const double nrm = x.norm();
    if (nrm < 1e-12) return 0.0;
    const RayBest rb = best_on_ray(m, x / nrm, target);
    return rb.rate < 0.0 ? 0.0 : -rb.rate;
  };
  // Axis starts ranked by their ray value; the simplex runs from the best two.
  std::vector<std::pair<double, Eigen::VectorXd>> starts;
  for (int i = 0; i < m.d; ++i)
    for (double sign : {1.0, -1.0}) {
      Eigen::VectorXd x0 = Eigen::VectorXd::Zero(m.d);
      x0(i) = sign;
      starts.emplace_back(objective(x0), x0);
    }
  std::stable_sort(starts.begin(), starts.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  double best = 1.0;
  Eigen::VectorXd best_x;
  for (std::size_t k = 0; k < std::min<std::size_t>(2, starts.size()); ++k) {
    double fv = 0.0;
    const Eigen::VectorXd x = nelder_mead(objective, starts[k].second, 0.4, 400, fv);
    if (fv < best) {
      best = fv;
      best_x = x;
    }
  }
  if (best >= 0.0) throw NoConvergence("no signaling vector meets the power constraint");
  const Eigen::VectorXd u = best_x / best_x.norm();
  const RayBest rb = best_on_ray(m, u, target);
  out.s = rb.t * u;
  out.ric = rb.ric;
  return out;
}

double open_loop_relay_power(const FirFilter& taps, const ArmaProcess& w, double rho) {
  const std::size_t L = taps.L();
  const std::vector<double> g = autocovariance(w, L);
  std::vector<double> acov(L, 0.0);
  for (std::size_t j = 0; j < L; ++j) acov[j] = g[j] + (j == 0 ? rho : 0.0);
  return relay_power_stationary(taps, acov);
}

std::vector<double> closed_loop_input_autocov(const FirFilter& taps, const ArmaProcess& w,
                                              const ArmaProcess& z, const BoundResult& bound) {
  const StateSpaceModel m = padded_model(bound.model);
  const Eigen::VectorXd c = bound.s + m.r;
  const Eigen::MatrixXd& S = bound.Sigma;
  const Eigen::VectorXd K = (m.P * S * c + m.q) / (1.0 + c.dot(S * c));
  const Eigen::MatrixXd Acl = m.P - K * c.transpose();
  const ArmaProcess& eff = bound.effective_noise;

  double radius = spectral_radius(Acl);
  auto inv_root = [](const Poly& p) {
    const Poly t = poly_trim(p);
    return t.size() > 1 ? 1.0 / min_root_modulus(t) : 0.0;
  };
  radius = std::max({radius, inv_root(eff.alpha), inv_root(w.beta), inv_root(z.beta), inv_root(taps.H())});
  std::size_t T = 256;
  if (radius > 0.0 && radius < 1.0)
    T = static_cast<std::size_t>(std::clamp(std::log(1e-17) / std::log(radius) + 64.0, 256.0, 32768.0));
  else if (radius >= 1.0)
    T = 32768;

  // Response of x[k] to eps[k-n].
  std::vector<double> xr(T, 0.0);
  Eigen::VectorXd state = m.q - K;
  for (std::size_t n = 1; n < T; ++n) {
    xr[n] = m.alpha0 * bound.s.dot(state);
    state = Acl * state;
  }
  // eps = (beta_e / alpha_e) z~, H z~ = H1 w + z.
  const Poly den_w = poly_mul(poly_mul(taps.H(), w.beta), eff.alpha);
  const Poly den_z = poly_mul(poly_mul(taps.H(), z.beta), eff.alpha);
  std::vector<double> vw = iir_filter(poly_mul(poly_mul(taps.H1(), w.alpha), eff.beta), den_w, xr);
  const std::vector<double> vz = iir_filter(poly_mul(z.alpha, eff.beta), den_z, xr);
  const std::vector<double> wr = impulse_response(w, T);
  for (std::size_t n = 0; n < T; ++n) vw[n] += wr[n];

  std::vector<double> acov(taps.L(), 0.0);
  for (std::size_t j = 0; j < acov.size(); ++j)
    for (std::size_t n = 0; n + j < T; ++n) acov[j] += vw[n] * vw[n + j] + vz[n] * vz[n + j];
  return acov;
}

BoundResult best_rate_for_taps(const FirFilter& taps, const ArmaProcess& w, const ArmaProcess& z,
                               double rho, double gamma, ConstraintMode mode) {
  if (taps.L() == 0) throw std::invalid_argument("best_rate_for_taps: empty filter");
  if (!(rho > 0.0)) throw std::invalid_argument("best_rate_for_taps: rho must be positive");
  check_taps_stable(taps);
  BoundResult r;
  r.taps = taps;
  r.constraint_mode = mode;
  r.relay_power_relaxed = taps.is_zero() ? 0.0 : open_loop_relay_power(taps, w, rho);
  const double budget = gamma * rho;
  if (mode == ConstraintMode::kRelaxedTapBound && r.relay_power_relaxed > budget * (1.0 + 1e-12))
    throw InfeasibleTaps("relaxed relay power " + std::to_string(r.relay_power_relaxed) +
                         " exceeds gamma*rho = " + std::to_string(budget));
  try {
    r.effective_noise = compose_effective_noise(w, z, taps);
  } catch (const UnstableEffectiveNoise& e) {
    throw InfeasibleTaps(e.what());
  }
  r.model = to_state_space(r.effective_noise);
  const Signaling sig = best_signaling(r.model, rho);
  r.s = sig.s;
  r.Sigma = sig.ric.Sigma;
  r.rate_nats = sig.ric.rate;
  r.source_power_used = r.model.alpha0 * r.model.alpha0 * r.s.dot(r.Sigma * r.s);
  r.relay_power_used =
      taps.is_zero() ? 0.0 : relay_power_stationary(taps, closed_loop_input_autocov(taps, w, z, r));
  if (mode == ConstraintMode::kExactRelayPower && r.relay_power_used > budget * (1.0 + 1e-9))
    throw InfeasibleTaps("closed-loop relay power " + std::to_string(r.relay_power_used) +
                         " exceeds gamma*rho = " + std::to_string(budget));
  r.converged = sig.ric.residual <= 1e-10 * std::max(1.0, r.Sigma.cwiseAbs().maxCoeff());
  return r;
}

double max_single_tap(const ArmaProcess& w, double rho, double gamma) {
  const double var = autocovariance(w, 0)[0];
  return std::min(std::sqrt(std::max(0.0, gamma * rho / (rho + var))), 1.0);
}

BoundResult search_single_tap(const ArmaProcess& w, const ArmaProcess& z, double rho, double gamma,
                              ConstraintMode mode, double resolution) {
  const double hmax = max_single_tap(w, rho, gamma);
  const double hlim = std::min(hmax, 1.0 - 1e-9);
  BoundResult best = best_rate_for_taps(FirFilter{{0.0}}, w, z, rho, gamma, mode);
  auto eval = [&](double h) -> double {
    try {
      return best_rate_for_taps(FirFilter{{h}}, w, z, rho, gamma, mode).rate_nats;
    } catch (const Error&) {
      return -1.0;
    }
  };
  double hbest = 0.0, rbest = best.rate_nats;
  const int n = static_cast<int>(std::ceil(2.0 * hlim / resolution));
  for (int k = 0; k <= n && hlim > 0.0; ++k) {
    const double h = -hlim + 2.0 * hlim * k / std::max(n, 1);
    const double r = eval(h);
    if (r > rbest) rbest = r, hbest = h;
  }
  if (hlim > 0.0) {
    const double lo = std::max(-hlim, hbest - resolution), hi = std::min(hlim, hbest + resolution);
    const auto m = boost::math::tools::brent_find_minima([&](double h) { return -eval(h); }, lo, hi, 40);
    if (-m.second > rbest) rbest = -m.second, hbest = m.first;
  }
  if (hbest != 0.0) best = best_rate_for_taps(FirFilter{{hbest}}, w, z, rho, gamma, mode);
  return best;
}

void ma1_effective_moments(const ArmaProcess& w, const ArmaProcess& z, double h, double& a0,
                           double& a1) {
  auto coef = [](const ArmaProcess& p, std::size_t i) { return i < p.alpha.size() ? p.alpha[i] : 0.0; };
  const double sw2 = coef(w, 0) * coef(w, 0) + coef(w, 1) * coef(w, 1);
  const double S = coef(z, 0) * coef(z, 0) + coef(z, 1) * coef(z, 1) + h * h * sw2;
  const double Pm = coef(z, 0) * coef(z, 1) + h * h * coef(w, 0) * coef(w, 1);
  const double disc = std::max(0.0, S * S - 4.0 * Pm * Pm);
  a0 = std::sqrt(0.5 * (S + std::sqrt(disc)));
  a1 = a0 > 0.0 ? Pm / a0 : 0.0;
}

double quartic_root(double h, double a0, double a1, double rho) {
  const double ratio = a1 / a0;
  const double d = h - ratio;
  const double psi = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  const double snr = rho / (a0 * a0);
  auto phi = [&](double x) {
    const double num = 1.0 + psi * ratio * x, den = 1.0 + psi * h * x;
    return snr * x * x * den * den - (1.0 - x * x) * num * num;
  };
  double lo = 0.0, hi = 1.0;
  if (!(phi(lo) < 0.0 && phi(hi) > 0.0))
    throw NoRootInUnitInterval("quartic has no sign change on (0,1)");
  while (hi - lo > 1e-15) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (phi(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

double quartic_rate_at(double h, double a0, double a1, double rho) {
  return -std::log(quartic_root(h, a0, a1, rho));
}

BoundResult quartic_bound_ma1(const ArmaProcess& w, const ArmaProcess& z, double rho, double gamma,
                              double resolution) {
  for (const ArmaProcess* p : {&w, &z})
    if (poly_trim(p->beta).size() != 1 || p->alpha.size() > 2)
      throw std::invalid_argument("quartic_bound_ma1: noises must be MA(1) or white");
  const double hmax = max_single_tap(w, rho, gamma);
  const int n = static_cast<int>(std::ceil(2.0 * hmax / resolution));
  double hbest = 0.0, rbest = -1.0;
  auto consider = [&](double h) {
    if (std::abs(h) >= 1.0) return;
    double a0 = 0.0, a1 = 0.0;
    ma1_effective_moments(w, z, h, a0, a1);
    const double r = quartic_rate_at(h, a0, a1, rho);
    if (r > rbest) rbest = r, hbest = h;
  };
  consider(0.0);
  for (int k = 0; k <= n && hmax > 0.0; ++k) consider(-hmax + 2.0 * hmax * k / std::max(n, 1));

  BoundResult r;
  r.taps = FirFilter{{hbest}};
  r.rate_nats = rbest;
  r.constraint_mode = ConstraintMode::kRelaxedTapBound;
  double a0 = 0.0, a1 = 0.0;
  ma1_effective_moments(w, z, hbest, a0, a1);
  r.effective_noise = ArmaProcess{{1.0, hbest}, {a0, a1}};
  r.model = to_state_space(r.effective_noise);
  const Signaling sig = best_signaling(r.model, rho);
  r.s = sig.s;
  r.Sigma = sig.ric.Sigma;
  r.source_power_used = a0 * a0 * r.s.dot(r.Sigma * r.s);
  r.relay_power_relaxed = open_loop_relay_power(r.taps, w, rho);
  r.relay_power_used = r.relay_power_relaxed;
  r.converged = true;
  return r;
}

namespace {

constexpr double kEdge = 1e-7;

// Rate of an AR(1)-at-some-lag AWGN effective noise with tap product a and innovation variance var.
double awgn_rate(double a, double var, double rho) { return quartic_rate_at(a, std::sqrt(var), 0.0, rho); }

// Gains with sum S minimizing sum sigma_i^2 g_i^2 inside the box |g_i| <= b_i.
std::vector<double> min_noise_gains(const std::vector<BranchSpec>& nodes, const std::vector<double>& b,
                                    double S) {
  const std::size_t n = nodes.size();
  std::vector<double> g(n, 0.0);
  double free_cap = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (nodes[i].sigma2 == 0.0) free_cap += b[i];
  const double sign = S < 0.0 ? -1.0 : 1.0;
  if (std::abs(S) <= free_cap) {
    for (std::size_t i = 0; i < n; ++i)
      if (nodes[i].sigma2 == 0.0) g[i] = S * b[i] / free_cap;
    return g;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (nodes[i].sigma2 == 0.0) g[i] = sign * b[i];
  const double R = S - sign * free_cap;
  auto fill = [&](double lam) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (nodes[i].sigma2 > 0.0) {
        g[i] = std::clamp(lam / nodes[i].sigma2, -b[i], b[i]);
        sum += g[i];
      }
    return sum;
  };
  double lo = 0.0, hi = 1.0;
  while (std::abs(fill(sign * hi)) < std::abs(R) && hi < 1e300) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (std::abs(fill(sign * mid)) < std::abs(R) ? lo : hi) = mid;
  }
  fill(sign * hi);
  return g;
}

double noise_var(const std::vector<BranchSpec>& nodes, const std::vector<double>& g) {
  double v = 1.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) v += g[i] * g[i] * nodes[i].sigma2;
  return v;
}

// Maximizes f on [lo, hi] by a uniform scan and a Brent refinement around the best point.
std::pair<double, double> scan_max(const std::function<double(double)>& f, double lo, double hi, int points) {
  double arg = lo, val = f(lo);
  if (!(hi > lo)) return {arg, val};
  for (int k = 1; k <= points; ++k) {
    const double x = lo + (hi - lo) * k / points;
    const double fx = f(x);
    if (fx > val) val = fx, arg = x;
  }
  const double step = (hi - lo) / points;
  const auto m = boost::math::tools::brent_find_minima([&](double x) { return -f(x); },
                                                       std::max(lo, arg - step), std::min(hi, arg + step), 50);
  if (-m.second > val) val = -m.second, arg = m.first;
  return {arg, val};
}

}  // namespace

BoundResult parallel_bound(const std::vector<BranchSpec>& nodes, double rho) {
  if (nodes.empty()) throw InfeasibleGains("parallel network needs at least one node");
  if (!(rho > 0.0)) throw InfeasibleGains("rho must be positive");
  std::vector<double> b(nodes.size());
  double cap = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].gamma < 0.0 || nodes[i].sigma2 < 0.0) throw InfeasibleGains("negative power factor or variance");
    b[i] = std::sqrt(nodes[i].gamma * rho / (rho + nodes[i].sigma2));
    cap += b[i];
  }
  // Rate depends on the gains through their sum and the injected variance only.
  const double smax = std::min(cap, 1.0 - kEdge);
  auto rate_of_sum = [&](double S) { return awgn_rate(S, noise_var(nodes, min_noise_gains(nodes, b, S)), rho); };
  const auto [S, best] = scan_max(rate_of_sum, -smax, smax, 2000);

  BoundResult r;
  r.gains = min_noise_gains(nodes, b, S);
  const double var = noise_var(nodes, r.gains);
  r.taps = FirFilter{{S}};
  r.rate_nats = best;
  r.effective_noise = ArmaProcess{{1.0, S}, {std::sqrt(var)}};
  r.model = to_state_space(r.effective_noise);
  const Signaling sig = best_signaling(r.model, rho);
  r.s = sig.s;
  r.Sigma = sig.ric.Sigma;
  r.source_power_used = var * r.s.dot(r.Sigma * r.s);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    r.relay_power_relaxed += r.gains[i] * r.gains[i] * (rho + nodes[i].sigma2);
  r.relay_power_used = r.relay_power_relaxed;
  r.converged = true;
  return r;
}

namespace {

double series_var(const std::vector<BranchSpec>& chain, const std::vector<double>& g) {
  double var = 1.0;
  for (std::size_t j = 0; j < chain.size(); ++j) {
    double prod = 1.0;
    for (std::size_t i = j; i < chain.size(); ++i) prod *= g[i] * g[i];
    var += prod * chain[j].sigma2;
  }
  return var;
}

}  // namespace

BoundResult series_rate(const std::vector<BranchSpec>& chain, const std::vector<double>& g, double rho) {
  const std::size_t n = chain.size();
  if (n == 0 || g.size() != n) throw InfeasibleGains("series chain and gains must have equal nonzero length");
  double a = 1.0;
  for (double v : g) a *= v;
  if (std::abs(a) >= 1.0) throw UnstableEffectiveNoise("product of series gains must be below one in magnitude");
  const double var = series_var(chain, g);
  BoundResult r;
  r.gains = g;
  r.taps.taps.assign(n, 0.0);
  r.taps.taps[n - 1] = a;
  Poly beta(n + 1, 0.0);
  beta[0] = 1.0;
  beta[n] = a;
  r.effective_noise = ArmaProcess{beta, {std::sqrt(var)}};
  r.model = to_state_space(r.effective_noise);
  const Signaling sig = best_signaling(r.model, rho);
  r.s = sig.s;
  r.Sigma = sig.ric.Sigma;
  r.rate_nats = sig.ric.rate;
  r.source_power_used = var * r.s.dot(r.Sigma * r.s);
  r.converged = true;
  return r;
}

BoundResult series_bound(const std::vector<BranchSpec>& chain, double rho) {
  if (chain.empty()) throw InfeasibleGains("series network needs at least one node");
  if (!(rho > 0.0)) throw InfeasibleGains("rho must be positive");
  const std::size_t n = chain.size();
  std::vector<double> b(n);
  double prev_gamma = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (chain[i].gamma < 0.0 || chain[i].sigma2 < 0.0) throw InfeasibleGains("negative power factor or variance");
    b[i] = std::sqrt(chain[i].gamma * rho / (prev_gamma * rho + chain[i].sigma2));
    prev_gamma = chain[i].gamma;
  }
  // The lag-n AR splits into n interleaved AR(1) channels with the same law,
  // so the search runs on the scalar quartic and only the result goes through Riccati.
  auto rate = [&](const std::vector<double>& g) {
    double a = 1.0;
    for (double v : g) a *= v;
    return awgn_rate(a, series_var(chain, g), rho);
  };
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = 0.5 * b[i];
  double best = rate(g);
  for (int sweep = 0; sweep < 200; ++sweep) {
    const double before = best;
    for (std::size_t i = 0; i < n; ++i) {
      double rest = 1.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) rest *= g[j];
      const double hi = rest > 0.0 ? std::min(b[i], (1.0 - kEdge) / rest) : b[i];
      auto f = [&](double v) {
        std::vector<double> t = g;
        t[i] = v;
        return rate(t);
      };
      const auto [arg, val] = scan_max(f, 0.0, hi, 200);
      if (val > best) best = val, g[i] = arg;
    }
    if (best - before <= 1e-14) break;
  }
  const std::vector<double> zero(n, 0.0);
  if (rate(zero) >= best) g = zero;
  return series_rate(chain, g, rho);
}

}  // namespace frelay
