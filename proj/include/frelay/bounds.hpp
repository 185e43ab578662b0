// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "frelay/arma.hpp"

namespace frelay {

enum class ConstraintMode { kRelaxedTapBound, kExactRelayPower };
std::string to_string(ConstraintMode m);

struct RiccatiSolution {
  Eigen::MatrixXd Sigma;
  double rate = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

struct BoundResult {
  double rate_nats = 0.0;
  FirFilter taps;
  std::vector<double> gains;  // per-node gains for network bounds
  Eigen::VectorXd s;
  Eigen::MatrixXd Sigma;
  StateSpaceModel model;
  ArmaProcess effective_noise;
  double source_power_used = 0.0;
  double relay_power_used = 0.0;     // stationary closed-loop relay power
  double relay_power_relaxed = 0.0;  // source modelled as white, independent of w
  ConstraintMode constraint_mode = ConstraintMode::kRelaxedTapBound;
  bool converged = false;
};

// White models (d = 0) are realized with d = 1, P = [0], r = [0].
StateSpaceModel padded_model(const StateSpaceModel& model);

RiccatiSolution riccati_fixed_point(const StateSpaceModel& model, const Eigen::VectorXd& s);
double riccati_residual(const StateSpaceModel& model, const Eigen::VectorXd& s,
                        const Eigen::MatrixXd& Sigma);

struct Signaling {
  Eigen::VectorXd s;
  RiccatiSolution ric;
};
// Maximizes the rate over s with s' Sigma s = rho / alpha0^2.
Signaling best_signaling(const StateSpaceModel& model, double rho);

double open_loop_relay_power(const FirFilter& taps, const ArmaProcess& w, double rho);
// Autocovariance of x + w at lags 0..L-1 in the stationary closed loop driven by s.
std::vector<double> closed_loop_input_autocov(const FirFilter& taps, const ArmaProcess& w,
                                              const ArmaProcess& z, const BoundResult& bound);

BoundResult best_rate_for_taps(const FirFilter& taps, const ArmaProcess& w, const ArmaProcess& z,
                               double rho, double gamma,
                               ConstraintMode mode = ConstraintMode::kRelaxedTapBound);

// Grid over h at `resolution`, refined by golden-section.
BoundResult search_single_tap(const ArmaProcess& w, const ArmaProcess& z, double rho, double gamma,
                              ConstraintMode mode, double resolution = 1e-3);

// Effective MA(1) of h w[k-1] + z[k] for MA(1) w and z.
void ma1_effective_moments(const ArmaProcess& w, const ArmaProcess& z, double h, double& a0,
                           double& a1);
double quartic_root(double h, double a0, double a1, double rho);
double quartic_rate_at(double h, double a0, double a1, double rho);
double max_single_tap(const ArmaProcess& w, double rho, double gamma);
BoundResult quartic_bound_ma1(const ArmaProcess& w, const ArmaProcess& z, double rho, double gamma,
                              double resolution = 1e-4);

struct BranchSpec {
  double sigma2 = 1.0;
  double gamma = 1.0;
};
BoundResult parallel_bound(const std::vector<BranchSpec>& nodes, double rho);
BoundResult series_bound(const std::vector<BranchSpec>& chain, double rho);
// Rate of the chain for fixed gains (no optimization).
BoundResult series_rate(const std::vector<BranchSpec>& chain, const std::vector<double>& gains,
                        double rho);

}  // namespace frelay
