// SPDX-License-Identifier: Apache-2.0
#include "frelay/block.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "frelay/errors.hpp"

namespace frelay {

namespace {

double budget_uses(const BlockProgram& p) {
  return p.normalization == Normalization::kBlockPlusFlush ? p.N + p.L : p.N;
}

bool logdet_pd(const Eigen::MatrixXd& A, double& logdet) {
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::VectorXd d = llt.matrixL().toDenseMatrix().diagonal();
  logdet = 0.0;
  for (int i = 0; i < d.size(); ++i) {
    if (!(d(i) > 0.0)) return false;
    logdet += 2.0 * std::log(d(i));
  }
  return true;
}

// One scalar coordinate: a symmetric entry of Ky or a strictly-lower entry of B.
struct Param {
  bool is_b;
  int i, j;
  double kappa;  // dS = kappa (u v' + v u')
};

struct Layout {
  std::vector<Param> params;
  int n_ky = 0;
};

Layout make_layout(int N) {
  Layout lay;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j <= i; ++j) lay.params.push_back({false, i, j, i == j ? 0.5 : 1.0});
  lay.n_ky = static_cast<int>(lay.params.size());
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < i; ++j) lay.params.push_back({true, i, j, -1.0});
  return lay;
}

// The program is solved in coordinates whitened by K = L L': Ky = L Y L', B = L Bt L^{-1}.
// The Schur block becomes Y - (I+Bt)(I+Bt)' and both budgets stay linear.
struct Fixed {
  Eigen::MatrixXd L, Linv;
  Eigen::MatrixXd M;       // L' L
  Eigen::MatrixXd Qt;      // L' Q L with Q = G'G
  Eigen::MatrixXd A2;      // Qt - L^{-1} W Q L, W = (I - H^{-1}) Kw
  double c1 = 0.0, c2 = 0.0;
  double logdetK = 0.0;
  bool relay = true;
};

struct State {
  Eigen::MatrixXd Y, Bt;
};

struct Eval {
  bool feasible = false;
  double phi = 0.0, logdetY = 0.0, s1 = 0.0, s2 = 0.0;
  Eigen::MatrixXd S;
};

// tr(A X) for square A, X.
double trace_prod(const Eigen::MatrixXd& A, const Eigen::MatrixXd& X) {
  return (A.transpose().cwiseProduct(X)).sum();
}

Eval evaluate(const Fixed& f, const State& x, double t) {
  Eval e;
  const int N = static_cast<int>(x.Y.rows());
  const Eigen::MatrixXd C = Eigen::MatrixXd::Identity(N, N) + x.Bt;
  e.S = x.Y - C * C.transpose();
  e.S = 0.5 * (e.S + e.S.transpose()).eval();
  double ldS = 0.0;
  if (!logdet_pd(e.S, ldS) || !logdet_pd(x.Y, e.logdetY)) return e;
  e.s1 = f.c1 - trace_prod(f.M, x.Y) + 2.0 * trace_prod(f.M, x.Bt);
  if (!(e.s1 > 0.0)) return e;
  e.phi = t * e.logdetY + ldS + std::log(e.s1);
  if (f.relay) {
    e.s2 = f.c2 - trace_prod(f.Qt, x.Y) + 2.0 * trace_prod(f.A2, x.Bt);
    if (!(e.s2 > 0.0)) return e;
    e.phi += std::log(e.s2);
  }
  e.feasible = true;
  return e;
}

State step(const Layout& lay, const State& x, const Eigen::VectorXd& d, double a) {
  State y = x;
  for (std::size_t k = 0; k < lay.params.size(); ++k) {
    const Param& p = lay.params[k];
    const double v = a * d(static_cast<Eigen::Index>(k));
    if (p.is_b) {
      y.Bt(p.i, p.j) += v;
    } else {
      y.Y(p.i, p.j) += v;
      if (p.i != p.j) y.Y(p.j, p.i) += v;
    }
  }
  return y;
}

// Gradient and Hessian of phi = t logdet Y + logdet S + log s1 + log s2.
void derivatives(const Layout& lay, const Fixed& f, const State& x, const Eval& e, double t,
                 Eigen::VectorXd& g, Eigen::MatrixXd& Hs) {
  const int N = static_cast<int>(x.Y.rows());
  const int n = static_cast<int>(lay.params.size());
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);
  const Eigen::MatrixXd P = e.S.llt().solve(I);
  const Eigen::MatrixXd Yi = x.Y.llt().solve(I);
  const Eigen::MatrixXd Mc = I + x.Bt;  // columns m_j
  const Eigen::MatrixXd PM = P * Mc;
  const Eigen::MatrixXd MPM = Mc.transpose() * PM;

  // e_a' P v_p with v_p = e_j or m_j, and v_p' P v_q.
  auto pv = [&](const Param& p, int a) { return p.is_b ? PM(a, p.j) : P(a, p.j); };
  auto vv = [&](const Param& p, const Param& q) {
    if (p.is_b && q.is_b) return MPM(p.j, q.j);
    if (p.is_b) return PM(q.j, p.j);
    if (q.is_b) return PM(p.j, q.j);
    return P(p.j, q.j);
  };

  g.setZero(n);
  Hs.setZero(n, n);
  Eigen::VectorXd g1 = Eigen::VectorXd::Zero(n), g2 = Eigen::VectorXd::Zero(n);
  for (int a = 0; a < n; ++a) {
    const Param& p = lay.params[a];
    g(a) = 2.0 * p.kappa * pv(p, p.i);
    if (!p.is_b) {
      const double mult = p.i == p.j ? 1.0 : 2.0;
      g(a) += 2.0 * t * p.kappa * Yi(p.i, p.j);
      g1(a) = -f.M(p.i, p.j) * mult;
      g2(a) = -f.Qt(p.i, p.j) * mult;
    } else {
      g1(a) = 2.0 * f.M(p.j, p.i);
      g2(a) = 2.0 * f.A2(p.j, p.i);
    }
  }
  for (int a = 0; a < n; ++a) {
    const Param& p = lay.params[a];
    for (int b = a; b < n; ++b) {
      const Param& q = lay.params[b];
      const double al = P(p.i, q.i), be = pv(q, p.i), ga = pv(p, q.i), de = vv(p, q);
      double h = -2.0 * p.kappa * q.kappa * (al * de + be * ga);
      if (p.is_b && q.is_b && p.j == q.j) h -= 2.0 * P(p.i, q.i);
      if (!p.is_b && !q.is_b) {
        const double yal = Yi(p.i, q.i), yde = Yi(p.j, q.j), ybe = Yi(p.i, q.j), yga = Yi(p.j, q.i);
        h -= 2.0 * t * p.kappa * q.kappa * (yal * yde + ybe * yga);
      }
      Hs(a, b) = h;
    }
  }
  Hs = Hs.selfadjointView<Eigen::Upper>();
  g += g1 / e.s1;
  Hs.noalias() -= g1 * g1.transpose() / (e.s1 * e.s1);
  if (f.relay) {
    g += g2 / e.s2;
    Hs.noalias() -= g2 * g2.transpose() / (e.s2 * e.s2);
  }
}

Fixed make_fixed(const BlockProgram& prog) {
  Fixed f;
  const int N = prog.N;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);
  const Eigen::MatrixXd K = 0.5 * (prog.Kz_eff + prog.Kz_eff.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success || !logdet_pd(K, f.logdetK))
    throw Infeasible("effective noise covariance is not positive definite");
  f.L = llt.matrixL();
  f.Linv = f.L.triangularView<Eigen::Lower>().solve(I);
  const Eigen::MatrixXd G = prog.H - I;
  const Eigen::MatrixXd Q = G.transpose() * G;
  const Eigen::MatrixXd W = (I - prog.Hinv) * prog.Kw;
  f.M = f.L.transpose() * f.L;
  f.Qt = f.L.transpose() * Q * f.L;
  f.A2 = f.Qt - f.Linv * W * Q * f.L;
  const double uses = budget_uses(prog);
  f.c1 = uses * prog.rho + f.M.trace();
  f.c2 = prog.gamma * uses * prog.rho + f.Qt.trace() - trace_prod(Q, prog.Kw);
  f.relay = !prog.relay_off;
  return f;
}

}  // namespace

BlockProgram make_block_program(const FirFilter& taps, const ArmaProcess& w, const ArmaProcess& z,
                                double rho, double gamma, int N, Normalization norm) {
  const BlockChannel ch = build_block_channel(taps, w, z, N);
  BlockProgram p;
  p.Kz_eff = ch.Kz_eff;
  p.H = ch.H;
  p.Hinv = ch.Hinv;
  p.Kw = ch.Kw;
  p.rho = rho;
  p.gamma = gamma;
  p.N = N;
  p.L = ch.L;
  p.relay_off = taps.is_zero();
  p.normalization = norm;
  return p;
}

BlockCertificate certify_block(const BlockProgram& prog, const Eigen::MatrixXd& Ky, const Eigen::MatrixXd& B) {
  const int N = prog.N;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);
  const Eigen::MatrixXd C = I + B;
  const Eigen::MatrixXd& K = prog.Kz_eff;
  BlockCertificate c;
  const Eigen::MatrixXd Ks = Ky - C * K * C.transpose();
  c.schur_min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (Ks + Ks.transpose())).eigenvalues()(0);
  const Eigen::MatrixXd Kx = Ks + B * K * B.transpose();
  const Eigen::MatrixXd Kxw = B * (I - prog.Hinv) * prog.Kw;
  const Eigen::MatrixXd X = Kx + Kxw + Kxw.transpose() + prog.Kw;
  const Eigen::MatrixXd G = prog.H - I;
  const double M = budget_uses(prog);
  c.source_slack = M * prog.rho - Kx.trace();
  c.relay_slack = prog.relay_off ? std::numeric_limits<double>::infinity()
                                 : prog.gamma * M * prog.rho - (G * X * G.transpose()).trace();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ey(Ky, Eigen::EigenvaluesOnly), ek(K, Eigen::EigenvaluesOnly);
  c.rate_nats = (ey.eigenvalues().array().log().sum() - ek.eigenvalues().array().log().sum()) / (2.0 * M);
  return c;
}

DerivativeCheck check_barrier_derivatives(const BlockProgram& prog, double t, std::uint64_t seed) {
  const int N = prog.N;
  const Fixed f = make_fixed(prog);
  const Layout lay = make_layout(N);
  const int n = static_cast<int>(lay.params.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  // Small random perturbation of the central start keeps the point feasible.
  State x{1.05 * Eigen::MatrixXd::Identity(N, N), Eigen::MatrixXd::Zero(N, N)};
  Eigen::VectorXd d0(n);
  for (int k = 0; k < n; ++k) d0(k) = nd(rng);
  State y = step(lay, x, d0, 1e-3);
  for (double a = 1e-3; !evaluate(f, y, t).feasible && a > 1e-12; a *= 0.1) y = step(lay, x, d0, a);
  x = y;
  const Eval e = evaluate(f, x, t);
  if (!e.feasible) throw Infeasible("derivative check could not find a feasible point");
  Eigen::VectorXd g;
  Eigen::MatrixXd Hs;
  derivatives(lay, f, x, e, t, g, Hs);
  const double h = 1e-6;
  DerivativeCheck out;
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd ek = Eigen::VectorXd::Zero(n);
    ek(k) = 1.0;
    const State xp = step(lay, x, ek, h), xm = step(lay, x, ek, -h);
    const Eval ep = evaluate(f, xp, t), em = evaluate(f, xm, t);
    const double fd = (ep.phi - em.phi) / (2.0 * h);
    out.grad_rel_err = std::max(out.grad_rel_err, std::abs(fd - g(k)) / std::max(1.0, std::abs(g(k))));
    Eigen::VectorXd gp, gm;
    Eigen::MatrixXd Hp, Hm;
    derivatives(lay, f, xp, ep, t, gp, Hp);
    derivatives(lay, f, xm, em, t, gm, Hm);
    const Eigen::VectorXd col = (gp - gm) / (2.0 * h);
    out.hess_rel_err =
        std::max(out.hess_rel_err, (col - Hs.col(k)).cwiseAbs().maxCoeff() / std::max(1.0, Hs.col(k).cwiseAbs().maxCoeff()));
  }
  return out;
}

BlockSolution solve_block(const BlockProgram& prog, const BlockOptions& opt) {
  const int N = prog.N;
  if (N < 1) throw DimensionMismatch("block length must be positive");
  if (N > 64) throw DimensionMismatch("dense block solver supports N <= 64");
  if (prog.Kz_eff.rows() != N || prog.H.rows() != N || prog.Kw.rows() != N || prog.Hinv.rows() != N)
    throw DimensionMismatch("program matrices must be N x N");
  const Fixed f = make_fixed(prog);
  const Layout lay = make_layout(N);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);
  // Start: B = 0, Ky = (1 + delta) K with 10% slack on both budgets.
  const double uses = budget_uses(prog);
  const double trK = f.M.trace();
  double delta = 0.9 * uses * prog.rho / trK;
  if (f.relay) {
    const double trQt = f.Qt.trace();
    const double relay_noise = prog.gamma * uses * prog.rho - (f.c2 - trQt);  // tr(Q Kw)
    if (trQt > 0.0) {
      double d2 = (0.9 * prog.gamma * uses * prog.rho - relay_noise) / trQt;
      if (!(d2 > 0.0)) d2 = 0.5 * (prog.gamma * uses * prog.rho - relay_noise) / trQt;
      delta = std::min(delta, d2);
    }
  }
  if (!(delta > 0.0)) throw Infeasible("no strictly feasible start: relay budget is exhausted by relay noise");
  State x{(1.0 + delta) * I, Eigen::MatrixXd::Zero(N, N)};

  const double m = N + 1.0 + (f.relay ? 1.0 : 0.0);
  double t = 1.0;
  BlockSolution sol;
  Eigen::VectorXd g;
  Eigen::MatrixXd Hs;
  for (;;) {
    Eval e = evaluate(f, x, t);
    if (!e.feasible) throw Infeasible("iterate left the feasible set");
    for (int it = 0; it < opt.max_newton; ++it) {
      derivatives(lay, f, x, e, t, g, Hs);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(-Hs);
      const Eigen::VectorXd d = ldlt.solve(g);
      const double lambda2 = g.dot(d);
      ++sol.newton_steps;
      if (!std::isfinite(lambda2)) throw SolverStall("Newton system is singular");
      // Decrement floor scales with |phi|: below it the line search only sees round-off.
      if (lambda2 * 0.5 <= 1e-10 + 1e-13 * std::abs(e.phi)) break;
      double a = 1.0;
      bool moved = false;
      for (;;) {
        const State y = step(lay, x, d, a);
        Eval ey = evaluate(f, y, t);
        if (ey.feasible && ey.phi >= e.phi + 0.25 * a * lambda2) {
          x = y;
          e = std::move(ey);
          moved = true;
          break;
        }
        a *= 0.5;
        if (a < 1e-14) break;
      }
      if (!moved) {
        if (lambda2 * 0.5 <= 1e-6 + 1e-11 * std::abs(e.phi)) break;
        throw SolverStall("line search underflow at t = " + std::to_string(t));
      }
    }
    if (m / t <= opt.gap_tol) break;
    t *= 10.0;
  }

  const Eval e = evaluate(f, x, t);
  sol.Ky = f.L * x.Y * f.L.transpose();
  sol.B = f.L * x.Bt * f.Linv;
  sol.B.triangularView<Eigen::Upper>().setZero();
  const Eigen::MatrixXd C = I + sol.B;
  Eigen::MatrixXd Ks = sol.Ky - C * prog.Kz_eff * C.transpose();
  Ks = 0.5 * (Ks + Ks.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ks);
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i)
    if (ev(i) < 1e-10) ev(i) = 0.0;
  sol.Ks = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  sol.rate_nats = e.logdetY / (2.0 * uses);
  sol.kkt_residual = m / t;
  sol.constraint_slacks = {e.s1, f.relay ? e.s2 : std::numeric_limits<double>::infinity(), es.eigenvalues()(0)};
  return sol;
}

std::vector<TwoTapCandidate> sample_two_taps(double rho, double gamma, double sigma_w2, int trials,
                                             std::uint64_t seed) {
  std::vector<TwoTapCandidate> out(static_cast<std::size_t>(std::max(trials, 0)));
  const double R2 = sigma_w2 > 0.0 ? gamma * rho / sigma_w2 : std::numeric_limits<double>::infinity();
  if (!(R2 > 0.0)) return out;  // only the relay-off point
  const double R = std::sqrt(R2);
  const double b1 = std::min(2.0, R), b2 = std::min(1.0, R);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    std::mt19937_64 rng(ss);
    std::uniform_real_distribution<double> u1(-b1, b1), u2(-b2, b2);
    for (;;) {
      const double h1 = u1(rng), h2 = u2(rng);
      if (std::abs(h2) < 1.0 && std::abs(h1) < 1.0 + h2 && h1 * h1 + h2 * h2 <= R2) {
        out[k] = {h1, h2};
        break;
      }
    }
  }
  return out;
}

TwoTapResult random_two_tap_search(double rho, double gamma, double sigma_w2, int N, int trials,
                                   std::uint64_t seed, int threads, Normalization norm) {
  if (trials < 1) throw std::invalid_argument("random_two_tap_search: trials must be >= 1");
  const std::vector<TwoTapCandidate> cand = sample_two_taps(rho, gamma, sigma_w2, trials, seed);
  const ArmaProcess w = ArmaProcess::white(sigma_w2), z = ArmaProcess::white(1.0);
  std::vector<double> rate(cand.size(), -std::numeric_limits<double>::infinity());

  BlockOptions coarse;
  coarse.gap_tol = 1e-4;
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t k = begin; k < cand.size(); k += stride) {
      try {
        const BlockProgram p =
            make_block_program(FirFilter{{cand[k].h1, cand[k].h2}}, w, z, rho, gamma, N, norm);
        rate[k] = solve_block(p, coarse).rate_nats;
      } catch (const Error&) {
      }
    }
  };
  unsigned nt = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  nt = std::min<unsigned>(nt, static_cast<unsigned>(cand.size()));
  if (nt <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < nt; ++i) pool.emplace_back(work, i, nt);
    for (auto& th : pool) th.join();
  }

  std::vector<std::size_t> order(cand.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  auto better = [&](std::size_t a, std::size_t b) {
    if (rate[a] != rate[b]) return rate[a] > rate[b];
    if (cand[a].h1 != cand[b].h1) return cand[a].h1 < cand[b].h1;
    return cand[a].h2 < cand[b].h2;
  };
  std::sort(order.begin(), order.end(), better);

  TwoTapResult res;
  for (double r : rate) res.feasible += std::isfinite(r) ? 1 : 0;
  if (res.feasible == 0) throw Infeasible("no candidate taps admitted a feasible block program");
  // Re-solve the leading candidates at full accuracy.
  bool have = false;
  for (std::size_t k = 0; k < std::min<std::size_t>(3, order.size()); ++k) {
    const std::size_t idx = order[k];
    if (!std::isfinite(rate[idx])) break;
    const BlockProgram p = make_block_program(FirFilter{{cand[idx].h1, cand[idx].h2}}, w, z, rho, gamma, N, norm);
    BlockSolution s = solve_block(p);
    if (!have || s.rate_nats > res.solution.rate_nats) {
      res.solution = std::move(s);
      res.taps = cand[idx];
      have = true;
    }
  }
  return res;
}

}  // namespace frelay
