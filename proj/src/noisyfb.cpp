// SPDX-License-Identifier: Apache-2.0
#include "frelay/noisyfb.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "frelay/errors.hpp"

namespace frelay {

namespace {

bool is_inf(double v) { return std::isinf(v); }

// sigma^2 * v^2 with the convention inf * 0 = 0 (the gain is forced to zero in that limit).
double noise_term(double sigma2, double v) {
  if (v == 0.0) return 0.0;
  return sigma2 * v * v;
}

void validate(const NoisyFbProblem& p) {
  if (!(p.rho > 0.0) || !std::isfinite(p.rho)) throw std::invalid_argument("noisyfb: rho must be positive");
  if (!(p.sigma_w2 >= 0.0) || !(p.sigma_n2 >= 0.0) || !(p.gamma >= 0.0) || !std::isfinite(p.gamma))
    throw std::invalid_argument("noisyfb: variances and gamma must be nonnegative");
}

double denom(const NoisyFbParams& x, const NoisyFbProblem& p) {
  return 1.0 + noise_term(p.sigma_n2, x.f21) + noise_term(p.sigma_w2, x.h1);
}

NoisyFbSolution finish(NoisyFbParams x, const NoisyFbProblem& p, NoisyFbMethod m) {
  NoisyFbSolution s;
  s.x = x;
  s.snr = post_snr_simplified(x, p);
  const KktResiduals k = kkt_residuals(x, p);
  s.mu2 = k.mu2;
  s.mu3 = k.mu3;
  s.relay_power_saturated = x.h1 >= p.h_max() * (1.0 - 1e-12) && p.h_max() > 0.0;
  s.method = m;
  return s;
}

// Params on the envelope at a given h1.
NoisyFbParams envelope(double h1, const NoisyFbProblem& p) {
  NoisyFbParams x;
  x.g1 = std::sqrt(p.rho);
  x.h1 = h1;
  x.f21 = solve_f21(h1, p);
  x.g2 = g2_from(x.f21, h1, p);
  return x;
}

}  // namespace

double NoisyFbProblem::h_max() const {
  if (is_inf(sigma_w2)) return 0.0;
  return std::sqrt(gamma * rho / (rho + sigma_w2));
}

double NoisyFbProblem::f_max() const {
  if (is_inf(sigma_n2)) return 0.0;
  return std::sqrt(rho / (1.0 + sigma_n2));
}

std::string to_string(NoisyFbMethod m) {
  switch (m) {
    case NoisyFbMethod::kKktIteration: return "kkt_iteration";
    case NoisyFbMethod::kBoundaryCase: return "boundary_case";
    case NoisyFbMethod::kClosedForm: return "closed_form";
    case NoisyFbMethod::kGridOracle: return "grid_oracle";
  }
  return "unknown";
}

double post_snr(const NoisyFbParams& x, const NoisyFbProblem& p) {
  Eigen::Vector2d g(x.g1, x.g2 + x.h1 * x.g1);
  Eigen::Matrix2d F = Eigen::Matrix2d::Zero(), B = Eigen::Matrix2d::Zero();
  F(1, 0) = x.f21;
  B(1, 0) = x.h1;
  const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d C = (I + F) * (I + F).transpose();
  if (x.f21 != 0.0) C += p.sigma_n2 * F * F.transpose();
  if (x.h1 != 0.0) C += p.sigma_w2 * B * B.transpose();
  return g.dot(C.ldlt().solve(g));
}

double post_snr_simplified(const NoisyFbParams& x, const NoisyFbProblem& p) {
  const double T = x.g1 * (x.h1 - x.f21) + x.g2;
  return x.g1 * x.g1 + T * T / denom(x, p);
}

double g2_from(double f21, double h1, const NoisyFbProblem& p) {
  if (is_inf(p.sigma_n2)) return std::sqrt(p.rho);
  const double a = 1.0 + noise_term(p.sigma_w2, h1);
  const double num = p.sigma_n2 * p.rho + (1.0 + p.sigma_n2) * a;
  const double den = a + p.sigma_n2 * f21 * h1;
  return -num / den * f21 / std::sqrt(p.rho);
}

double solve_f21(double h1, const NoisyFbProblem& p) {
  if (is_inf(p.sigma_n2)) return 0.0;
  const double a = 1.0 + noise_term(p.sigma_w2, h1);
  const double num = p.sigma_n2 * p.rho + (1.0 + p.sigma_n2) * a;
  auto lhs = [&](double f) {
    const double den = a + p.sigma_n2 * f * h1;
    const double A = num / den;
    return A * A * f * f / p.rho + (1.0 + p.sigma_n2) * f * f - p.rho;
  };
  double lo = -p.f_max();
  if (p.sigma_n2 > 0.0 && h1 > 0.0) lo = std::max(lo, -a / (p.sigma_n2 * h1));
  double hi = 0.0;
  // lhs(0) = -rho < 0 and lhs grows as f decreases toward lo.
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double den = a + p.sigma_n2 * mid * h1;
    if (den <= 0.0 || lhs(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

KktResiduals kkt_residuals(const NoisyFbParams& x, const NoisyFbProblem& p) {
  KktResiduals k;
  const double sr = std::sqrt(p.rho);
  const double D = denom(x, p);
  const double T = sr * (x.h1 - x.f21) + x.g2;
  k.mu2 = x.g2 != 0.0 ? T / (D * x.g2) : 0.0;
  const double stat3 = (sr * T * D - T * T * noise_term(p.sigma_w2, x.h1) / std::max(x.h1, 1e-300)) / (D * D);
  const bool saturated = x.h1 >= p.h_max() * (1.0 - 1e-12) && p.h_max() > 0.0;
  k.mu3 = saturated ? stat3 : 0.0;
  k.r1 = -T / D + k.mu2 * x.g2;
  if (is_inf(p.sigma_n2)) {
    k.r2 = 0.0;  // f21 is not a free variable in this limit
  } else {
    k.r2 = (D * sr * T + T * T * p.sigma_n2 * x.f21) / (D * D) + k.mu2 * (1.0 + p.sigma_n2) * x.f21;
  }
  k.r3 = is_inf(p.sigma_w2) ? 0.0 : -stat3 + k.mu3;
  return k;
}

std::optional<NoisyFbSolution> solve_interior(const NoisyFbProblem& p) {
  validate(p);
  const double hmax = p.h_max();
  if (!(hmax > 0.0) || p.sigma_w2 == 0.0 || is_inf(p.sigma_w2)) return std::nullopt;
  const double sr = std::sqrt(p.rho);
  // Start from the boundary branch's f21.
  double h = hmax;
  double f = solve_f21(h, p);
  double g2 = g2_from(f, h, p);
  int it = 0;
  bool converged = false;
  for (; it < 10000; ++it) {
    const double h_new = sr * (1.0 + noise_term(p.sigma_n2, f)) / (p.sigma_w2 * (g2 - sr * f));
    if (!std::isfinite(h_new) || h_new <= 0.0) break;
    const double f_new = solve_f21(h_new, p);
    const double g2_new = g2_from(f_new, h_new, p);
    const double diff = std::max({std::abs(h_new - h) / std::max(1.0, h_new), std::abs(f_new - f) / std::max(1.0, std::abs(f_new)),
                                  std::abs(g2_new - g2) / std::max(1.0, g2_new)});
    h = h_new;
    f = f_new;
    g2 = g2_new;
    if (diff <= 1e-10) {
      converged = true;
      break;
    }
  }
  if (!converged && it < 10000) return std::nullopt;  // left the region: no interior point
  if (!converged) throw IterationDiverged("interior h1 iteration hit the cap");
  if (!(h < hmax)) return std::nullopt;
  NoisyFbSolution s = finish({sr, g2, f, h}, p, NoisyFbMethod::kKktIteration);
  s.iterations = it;
  return s;
}

NoisyFbSolution solve_boundary(const NoisyFbProblem& p) {
  validate(p);
  const NoisyFbParams x = envelope(p.h_max(), p);
  return finish(x, p, NoisyFbMethod::kBoundaryCase);
}

NoisyFbSolution solve(const NoisyFbProblem& p) {
  validate(p);
  if (is_inf(p.sigma_n2) || is_inf(p.sigma_w2)) return *closed_form(p);
  NoisyFbSolution best = solve_boundary(p);
  try {
    const std::optional<NoisyFbSolution> in = solve_interior(p);
    if (in && in->snr > best.snr) best = *in;
  } catch (const IterationDiverged&) {
    return grid_oracle(p);
  }
  return best;
}

std::optional<NoisyFbSolution> closed_form(const NoisyFbProblem& p) {
  validate(p);
  const double rho = p.rho, sr = std::sqrt(rho);
  NoisyFbParams x;
  x.g1 = sr;
  if (is_inf(p.sigma_w2)) {
    const double sn = p.sigma_n2;
    if (is_inf(sn)) {
      x.g2 = sr;
    } else {
      const double q = std::sqrt(std::pow(1.0 + (1.0 + rho) * sn, 2) + rho * (1.0 + sn));
      x.g2 = std::sqrt(rho) / q * (sn * rho + (1.0 + sn));
      x.f21 = -rho / q;
    }
    x.h1 = 0.0;
  } else if (p.sigma_n2 == 0.0) {
    x.g2 = std::sqrt(rho / (1.0 + rho));
    x.f21 = -rho / std::sqrt(1.0 + rho);
    x.h1 = p.sigma_w2 == 0.0 ? p.h_max()
                             : std::min(p.h_max(), 1.0 / (p.sigma_w2 * std::sqrt(1.0 + rho)));
  } else if (is_inf(p.sigma_n2)) {
    x.g2 = sr;
    x.h1 = p.sigma_w2 == 0.0 ? p.h_max() : std::min(p.h_max(), 1.0 / p.sigma_w2);
  } else if (p.sigma_w2 == 0.0) {
    x.h1 = std::sqrt(p.gamma);
    x.f21 = solve_f21(x.h1, p);
    x.g2 = -(1.0 / sr) * (1.0 + p.sigma_n2 * (1.0 + rho)) / (1.0 + p.sigma_n2 * x.f21 * x.h1) * x.f21;
  } else {
    return std::nullopt;
  }
  return finish(x, p, NoisyFbMethod::kClosedForm);
}

NoisyFbSolution grid_oracle(const NoisyFbProblem& p, double resolution) {
  validate(p);
  if (!(resolution > 0.0)) throw std::invalid_argument("grid_oracle: resolution must be positive");
  const double hmax = p.h_max(), fmax = p.f_max(), sr = std::sqrt(p.rho);
  const int nh = hmax > 0.0 ? 2 * static_cast<int>(std::ceil(hmax / resolution)) : 0;
  const int nf = fmax > 0.0 ? 2 * static_cast<int>(std::ceil(fmax / resolution)) : 0;
  NoisyFbParams best{sr, sr, 0.0, 0.0};
  double best_snr = post_snr_simplified(best, p);
  for (int i = 0; i <= nh; ++i) {
    const double h = nh > 0 ? -hmax + 2.0 * hmax * i / nh : 0.0;
    for (int j = 0; j <= nf; ++j) {
      const double f = nf > 0 ? -fmax + 2.0 * fmax * j / nf : 0.0;
      const double rest = p.rho - (is_inf(p.sigma_n2) ? 0.0 : (1.0 + p.sigma_n2) * f * f);
      const double g2 = std::sqrt(std::max(0.0, rest));
      // T^2 is convex in g2, so only the two ends of its interval matter.
      for (double s : {1.0, -1.0}) {
        const NoisyFbParams x{sr, s * g2, f, h};
        const double v = post_snr_simplified(x, p);
        if (v > best_snr) best_snr = v, best = x;
      }
    }
  }
  NoisyFbSolution s = finish(best, p, NoisyFbMethod::kGridOracle);
  return s;
}

std::vector<SweepPoint> sweep_h1(const NoisyFbProblem& p, const std::vector<double>& h1_grid, bool feedback) {
  validate(p);
  std::vector<SweepPoint> out;
  out.reserve(h1_grid.size());
  const double sr = std::sqrt(p.rho);
  for (double h : h1_grid) {
    NoisyFbParams x;
    if (feedback) {
      x = envelope(h, p);
    } else {
      x = {sr, sr, 0.0, h};
    }
    out.push_back({h, post_snr_simplified(x, p), x.g2, x.f21});
  }
  return out;
}

}  // namespace frelay
