// SPDX-License-Identifier: Apache-2.0
#include "frelay/coding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "frelay/bounds.hpp"
#include "frelay/errors.hpp"

namespace frelay {

namespace {

constexpr double kSerTarget = 1e-3;
constexpr int kMaxLag = 10;
constexpr int kBlock = 256;  // trials per reduction block, fixed so results ignore the thread count

using Real = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<200>,
                                           boost::multiprecision::et_off>;
using RVec = std::vector<Real>;
using RMat = std::vector<RVec>;  // row major

// Data-independent part of the augmented filter on [beta; theta]. The theta error shrinks like
// exp(-rate k), far below double resolution, so the covariance pass runs in 200-digit arithmetic.
struct FilterPlan {
  int n = 0;  // d + 1
  Eigen::MatrixXd F;
  Eigen::VectorXd S;
  std::vector<Eigen::VectorXd> h;
  std::vector<Eigen::VectorXd> K;
  std::vector<double> inn_var;
  std::vector<double> power;
  std::vector<Real> mmse;  // theta error variance after k uses
  std::vector<RVec> hr, Kr;
  Eigen::VectorXd u;  // initial error per unit theta
};

RMat to_real(const Eigen::MatrixXd& m) {
  RMat out(m.rows(), RVec(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

FilterPlan make_plan(const StateSpaceModel& m, const Eigen::VectorXd& s, const Eigen::VectorXd& g, int N) {
  const int d = m.d, n = d + 1;
  FilterPlan p;
  p.n = n;
  p.F = Eigen::MatrixXd::Identity(n, n);
  p.F.topLeftCorner(d, d) = m.P;
  p.S = Eigen::VectorXd::Zero(n);
  p.S.head(d) = m.q;
  p.u = Eigen::VectorXd::Ones(n);
  p.u.head(d) = g;
  const RMat F = to_real(p.F);
  RVec S(n), u(n), c(d), sv(d), r(d);
  for (int i = 0; i < n; ++i) S[i] = p.S(i), u[i] = p.u(i);
  for (int i = 0; i < d; ++i) c[i] = s(i) + m.r(i), sv[i] = s(i), r[i] = m.r(i);
  const RMat P = to_real(m.P);
  RMat Pi(n, RVec(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) Pi[i][j] = u[i] * u[j];
  RVec rP = r;  // r' P^(k-1)
  RVec g_r(d);
  for (int i = 0; i < d; ++i) g_r[i] = g(i);
  const Real a2 = Real(m.alpha0) * Real(m.alpha0);
  RMat FP(n, RVec(n)), next(n, RVec(n));
  for (int k = 0; k < N; ++k) {
    RVec h(n);
    for (int i = 0; i < d; ++i) h[i] = c[i];
    Real ht = 0;
    for (int i = 0; i < d; ++i) ht += rP[i] * g_r[i];
    h[d] = -ht;
    RVec Ph(n, Real(0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) Ph[i] += Pi[i][j] * h[j];
    Real iv = 1;
    for (int i = 0; i < n; ++i) iv += h[i] * Ph[i];
    RVec K(n, Real(0));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) K[i] += F[i][j] * Ph[j];
      K[i] = (K[i] + S[i]) / iv;
    }
    Real pw = 0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) pw += sv[i] * Pi[i][j] * sv[j];
    p.power.push_back(static_cast<double>(a2 * pw));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        FP[i][j] = 0;
        for (int l = 0; l < n; ++l) FP[i][j] += F[i][l] * Pi[l][j];
      }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        Real v = S[i] * S[j] - iv * K[i] * K[j];
        for (int l = 0; l < n; ++l) v += FP[i][l] * F[j][l];
        next[i][j] = v;
      }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) Pi[i][j] = (next[i][j] + next[j][i]) / 2;
    Eigen::VectorXd hd(n), Kd(n);
    for (int i = 0; i < n; ++i) hd(i) = static_cast<double>(h[i]), Kd(i) = static_cast<double>(K[i]);
    p.h.push_back(hd);
    p.K.push_back(Kd);
    p.hr.push_back(h);
    p.Kr.push_back(K);
    p.inn_var.push_back(static_cast<double>(iv));
    p.mmse.push_back(Pi[d][d]);
    RVec nr(d, Real(0));
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) nr[j] += rP[i] * P[i][j];
    rP = nr;
  }
  return p;
}

// W(k, j): weight of eps_j in the unbiased decoding error after k+1 uses.
// theta drops out exactly since E[theta^ | theta] = (1 - mmse) theta.
Eigen::MatrixXd decoding_weights(const FilterPlan& p) {
  const int N = static_cast<int>(p.h.size()), n = p.n;
  const RMat F = to_real(p.F);
  RVec S(n);
  for (int i = 0; i < n; ++i) S[i] = p.S(i);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(N, N);
  RVec lam(n), nl(n);
  for (int k = 0; k < N; ++k) {
    std::fill(lam.begin(), lam.end(), Real(0));
    lam[n - 1] = 1;  // selects the theta error after step k
    const Real scale = Real(1) - p.mmse[k];
    for (int j = k; j >= 0; --j) {
      const RVec& K = p.Kr[j];
      const RVec& h = p.hr[j];
      Real lk = 0, lS = 0;
      for (int i = 0; i < n; ++i) lk += lam[i] * K[i], lS += lam[i] * S[i];
      W(k, j) = static_cast<double>(-(lS - lk) / scale);
      // lam <- (F - K h')' lam
      for (int i = 0; i < n; ++i) {
        Real v = -h[i] * lk;
        for (int l = 0; l < n; ++l) v += F[l][i] * lam[l];
        nl[i] = v;
      }
      lam.swap(nl);
    }
  }
  return W;
}

// Scale of the offset so the average expected power over the block is rho.
FilterPlan plan_for_power(const StateSpaceModel& m, const Eigen::VectorXd& s, double rho, int N,
                          double& scale) {
  const RiccatiSolution ric = riccati_fixed_point(m, s);
  const double sSs = s.dot(ric.Sigma * s);
  if (!(sSs > 0.0)) throw InfeasibleGains("signaling vector carries no power");
  const Eigen::VectorXd g0 = ric.Sigma * s / std::sqrt(sSs);
  // The power profile only needs double precision.
  auto avg = [&](double t) {
    const int d = m.d, n = d + 1;
    Eigen::MatrixXd F = Eigen::MatrixXd::Identity(n, n);
    F.topLeftCorner(d, d) = m.P;
    Eigen::VectorXd S = Eigen::VectorXd::Zero(n), u = Eigen::VectorXd::Ones(n);
    S.head(d) = m.q;
    u.head(d) = t * g0;
    const Eigen::VectorXd c = s + m.r;
    Eigen::MatrixXd Pi = u * u.transpose();
    Eigen::RowVectorXd rP = m.r.transpose();
    double total = 0.0;
    for (int k = 0; k < N; ++k) {
      Eigen::VectorXd h(n);
      h.head(d) = c;
      h(d) = -rP.dot(t * g0);
      const double iv = h.dot(Pi * h) + 1.0;
      const Eigen::VectorXd K = (F * Pi * h + S) / iv;
      total += m.alpha0 * m.alpha0 * s.dot(Pi.topLeftCorner(d, d) * s);
      Pi = F * Pi * F.transpose() + S * S.transpose() - iv * K * K.transpose();
      Pi = 0.5 * (Pi + Pi.transpose()).eval();
      rP = rP * m.P;
    }
    return total / N;
  };
  double lo = std::log(1e-6), hi = std::log(1e6);
  if (avg(std::exp(lo)) > rho) {
    scale = std::exp(lo);
  } else if (avg(std::exp(hi)) < rho) {
    scale = std::exp(hi);
  } else {
    for (int it = 0; it < 100 && hi - lo > 1e-13; ++it) {
      const double mid = 0.5 * (lo + hi);
      (avg(std::exp(mid)) > rho ? hi : lo) = mid;
    }
    scale = std::exp(0.5 * (lo + hi));
  }
  return make_plan(m, s, scale * g0, N);
}

struct BlockAcc {
  std::vector<double> d2;  // per use
  std::vector<double> lag;  // sum nu_k nu_{k+l}
  std::vector<double> lag_n;
  double power = 0.0;
  double steady = 0.0;
  double steady_n = 0.0;
  double direct_gap = 0.0;
  std::uint64_t errors = 0;
};

void run_block(const FilterPlan& p, const Eigen::MatrixXd& W, const StateSpaceModel& m,
               const ClosedLoopRun& cfg, int t0, int t1, BlockAcc& acc, std::vector<double>& final_err) {
  const int N = cfg.N, d = m.d;
  acc.d2.assign(N, 0.0);
  acc.lag.assign(kMaxLag, 0.0);
  acc.lag_n.assign(kMaxLag, 0.0);
  const std::uint64_t M = cfg.M;
  const double spacing = M >= 2 ? std::sqrt(12.0) / std::sqrt((static_cast<double>(M) - 1.0) * (static_cast<double>(M) + 1.0)) : 0.0;
  std::vector<double> nu(N);
  Eigen::VectorXd e(p.n), eps_seq(N);
  for (int t = t0; t < t1; ++t) {
    std::seed_seq sq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                     static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(sq);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uint64_t idx = 0;
    double theta = 0.0;
    if (M >= 2) {
      idx = std::uniform_int_distribution<std::uint64_t>(0, M - 1)(rng);
      theta = spacing * (static_cast<double>(idx) - 0.5 * static_cast<double>(M - 1));
    } else {
      theta = gauss(rng);
    }
    e = theta * p.u;
    double dN = 0.0;
    for (int k = 0; k < N; ++k) {
      const double x = m.alpha0 * cfg.s.dot(e.head(d));
      acc.power += x * x;
      const double eps = gauss(rng);
      eps_seq(k) = eps;
      const double v = p.h[k].dot(e) + eps;
      nu[k] = v / std::sqrt(p.inn_var[k]);
      e = p.F * e + p.S * eps - p.K[k] * v;
      const double dk = W.row(k).head(k + 1).dot(eps_seq.head(k + 1));
      // The plain double recursion agrees while the error is well above rounding.
      const double mm = static_cast<double>(p.mmse[k]);
      if (mm > 1e-8) {
        const double direct = (theta * mm - e(d)) / (1.0 - mm);
        acc.direct_gap = std::max(acc.direct_gap, std::abs(direct - dk) / std::sqrt(mm / (1.0 - mm)));
      }
      acc.d2[k] += dk * dk;
      dN = dk;
      if (2 * k >= N) {
        acc.steady += v * v;
        acc.steady_n += 1.0;
      }
    }
    for (int l = 1; l <= kMaxLag; ++l)
      for (int k = 0; k + l < N; ++k) {
        acc.lag[l - 1] += nu[k] * nu[k + l];
        acc.lag_n[l - 1] += 1.0;
      }
    final_err[t] = dN;
    if (M >= 2) {
      const double half = 0.5 * spacing;
      bool err;
      if (idx == 0)
        err = dN > half;
      else if (idx == M - 1)
        err = dN < -half;
      else
        err = std::abs(dN) > half;
      acc.errors += err ? 1 : 0;
    }
  }
}

}  // namespace

ClosedLoopResult run_closed_loop(const ClosedLoopRun& cfg) {
  if (cfg.N < 1 || cfg.trials < 1) throw std::invalid_argument("run_closed_loop: N and trials must be positive");
  if (!(cfg.rho > 0.0)) throw std::invalid_argument("run_closed_loop: rho must be positive");
  const StateSpaceModel m = padded_model(cfg.model);
  if (cfg.s.size() != m.d) throw DimensionMismatch("signaling vector has wrong dimension");

  ClosedLoopResult out;
  const RiccatiSolution ric = riccati_fixed_point(m, cfg.s);
  out.bound_rate = ric.rate;
  const Eigen::VectorXd c = cfg.s + m.r;
  out.riccati_innovation_var = 1.0 + c.dot(ric.Sigma * c);

  ClosedLoopRun run = cfg;
  run.model = m;
  const FilterPlan plan = plan_for_power(m, cfg.s, cfg.rho, cfg.N, out.message_scale);
  out.expected_power = plan.power;
  for (const Real& mm : plan.mmse) out.analytic_snr.push_back(static_cast<double>(1 / mm - 1));
  const Eigen::MatrixXd W = decoding_weights(plan);

  const int nblocks = (cfg.trials + kBlock - 1) / kBlock;
  std::vector<BlockAcc> acc(nblocks);
  out.final_errors.assign(cfg.trials, 0.0);
  int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, nblocks);
  auto worker = [&](int w) {
    for (int b = w; b < nblocks; b += threads)
      run_block(plan, W, m, run, b * kBlock, std::min(cfg.trials, (b + 1) * kBlock), acc[b], out.final_errors);
  };
  if (threads <= 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();
  }

  std::vector<double> d2(cfg.N, 0.0), lag(kMaxLag, 0.0), lag_n(kMaxLag, 0.0);
  double power = 0.0, steady = 0.0, steady_n = 0.0;
  for (const BlockAcc& a : acc) {
    for (int k = 0; k < cfg.N; ++k) d2[k] += a.d2[k];
    for (int l = 0; l < kMaxLag; ++l) lag[l] += a.lag[l], lag_n[l] += a.lag_n[l];
    power += a.power;
    steady += a.steady;
    steady_n += a.steady_n;
    out.symbol_errors += a.errors;
    out.direct_gap = std::max(out.direct_gap, a.direct_gap);
  }
  const double T = cfg.trials;
  for (int k = 0; k < cfg.N; ++k) out.empirical_snr.push_back(T / d2[k]);
  for (int l = 0; l < kMaxLag; ++l) out.innovation_autocorr.push_back(lag_n[l] > 0.0 ? lag[l] / lag_n[l] : 0.0);
  out.mean_power = power / (T * cfg.N);
  out.steady_innovation_var = steady_n > 0.0 ? steady / steady_n : 0.0;
  out.symbol_error_rate = cfg.M >= 2 ? static_cast<double>(out.symbol_errors) / T : 0.0;

  if (out.mean_power > cfg.rho * (1.0 + 3.0 / std::sqrt(T)))
    throw PowerViolation("measured source power " + std::to_string(out.mean_power) + " exceeds " +
                         std::to_string(cfg.rho));

  // SER(M) ~ P(|d| > spacing/2) and spacing/2 = sqrt(3 / (M^2 - 1)).
  std::vector<double> mag(cfg.trials);
  for (int t = 0; t < cfg.trials; ++t) mag[t] = std::abs(out.final_errors[t]);
  const int allowed = static_cast<int>(std::floor(kSerTarget * T));
  if (allowed < cfg.trials) {
    std::nth_element(mag.begin(), mag.begin() + allowed, mag.end(), std::greater<double>());
    const double thr = mag[allowed];
    double logM = thr > 0.0 ? 0.5 * std::log1p(3.0 / (thr * thr)) : std::numeric_limits<double>::infinity();
    if (logM < std::log(9.0e15)) logM = std::log(std::floor(std::exp(logM) + 1e-9));
    out.empirical_rate = logM / cfg.N;
  }
  return out;
}

std::vector<CollapseRow> error_collapse_study(const StateSpaceModel& model, const Eigen::VectorXd& s,
                                              double rho, double rate_fraction,
                                              const std::vector<int>& N_list, int trials,
                                              std::uint64_t seed, int threads) {
  if (!(rate_fraction >= 0.0 && rate_fraction < 1.0))
    throw std::invalid_argument("error_collapse_study: rate_fraction must lie in [0, 1)");
  const double bound = riccati_fixed_point(padded_model(model), s).rate;
  std::vector<CollapseRow> rows;
  for (std::size_t i = 0; i < N_list.size(); ++i) {
    const int N = N_list[i];
    const double logM = rate_fraction * bound * N;
    if (logM >= std::log(1.8e19)) throw std::invalid_argument("error_collapse_study: constellation too large");
    ClosedLoopRun cfg;
    cfg.model = model;
    cfg.s = s;
    cfg.rho = rho;
    cfg.M = static_cast<std::uint64_t>(std::floor(std::exp(logM) + 1e-9));
    cfg.N = N;
    cfg.trials = trials;
    cfg.seed = seed + 0x9E3779B97F4A7C15ULL * (i + 1);
    cfg.threads = threads;
    CollapseRow row;
    row.N = N;
    row.M = cfg.M;
    row.trials = trials;
    row.bound_rate = bound;
    if (cfg.M <= 1) {
      cfg.M = 0;
      const ClosedLoopResult r = run_closed_loop(cfg);
      row.M = 1;
      row.ser = 0.0;
      row.empirical_rate = r.empirical_rate;
    } else {
      const ClosedLoopResult r = run_closed_loop(cfg);
      row.ser = r.symbol_error_rate;
      row.empirical_rate = r.empirical_rate;
    }
    row.loglog = row.ser > 0.0 && row.ser < 1.0 ? std::log(-std::log(row.ser)) : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace frelay
