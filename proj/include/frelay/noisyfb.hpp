// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

namespace frelay {

// Two-use linear scheme with noisy output feedback. sigma_n2 and sigma_w2 may be +infinity.
struct NoisyFbProblem {
  double rho = 1.0;
  double sigma_w2 = 1.0;
  double sigma_n2 = 0.0;
  double gamma = 1.0;

  double h_max() const;  // sqrt(gamma rho / (rho + sigma_w2))
  double f_max() const;  // sqrt(rho / (1 + sigma_n2))
};

struct NoisyFbParams {
  double g1 = 0.0;
  double g2 = 0.0;
  double f21 = 0.0;
  double h1 = 0.0;
};

enum class NoisyFbMethod { kKktIteration, kBoundaryCase, kClosedForm, kGridOracle };
std::string to_string(NoisyFbMethod m);

struct NoisyFbSolution {
  NoisyFbParams x;
  double snr = 0.0;
  double mu2 = 0.0;
  double mu3 = 0.0;
  bool relay_power_saturated = false;
  NoisyFbMethod method = NoisyFbMethod::kKktIteration;
  int iterations = 0;
};

// g' C^{-1} g with the 2x2 noise covariance assembled explicitly.
double post_snr(const NoisyFbParams& x, const NoisyFbProblem& p);
// g1^2 + (g1 (h1 - f21) + g2)^2 / (1 + sigma_n2 f21^2 + sigma_w2 h1^2).
double post_snr_simplified(const NoisyFbParams& x, const NoisyFbProblem& p);

// f21 < 0 meeting the active power constraint for a given h1, and g2 from stationarity in g2, f21.
double solve_f21(double h1, const NoisyFbProblem& p);
double g2_from(double f21, double h1, const NoisyFbProblem& p);

NoisyFbSolution solve(const NoisyFbProblem& p);
// The two branches separately; the interior one is empty when no interior stationary point exists.
std::optional<NoisyFbSolution> solve_interior(const NoisyFbProblem& p);
NoisyFbSolution solve_boundary(const NoisyFbProblem& p);

// Closed forms for sigma_n2 = 0, sigma_n2 = inf, sigma_w2 = 0 and sigma_w2 = inf.
std::optional<NoisyFbSolution> closed_form(const NoisyFbProblem& p);

NoisyFbSolution grid_oracle(const NoisyFbProblem& p, double resolution = 1e-3);

struct KktResiduals {
  double r1 = 0.0, r2 = 0.0, r3 = 0.0;
  double mu2 = 0.0, mu3 = 0.0;
};
// Multipliers recovered from the g2 and h1 equations (mu3 = 0 below the relay bound).
KktResiduals kkt_residuals(const NoisyFbParams& x, const NoisyFbProblem& p);

struct SweepPoint {
  double h1 = 0.0;
  double snr = 0.0;
  double g2 = 0.0;
  double f21 = 0.0;
};
// Best (g2, f21) at each fixed h1; feedback = false forces f21 = 0.
std::vector<SweepPoint> sweep_h1(const NoisyFbProblem& p, const std::vector<double>& h1_grid,
                                 bool feedback = true);

}  // namespace frelay
