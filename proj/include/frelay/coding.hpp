// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "frelay/arma.hpp"

namespace frelay {

// Closed-loop linear feedback code over the reduced channel with noiseless feedback.
struct ClosedLoopRun {
  StateSpaceModel model;
  Eigen::VectorXd s;
  double rho = 1.0;
  std::uint64_t M = 0;  // PAM size for the symbol-error count; 0 skips it
  int N = 1;
  int trials = 1000;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency
};

struct ClosedLoopResult {
  std::vector<double> empirical_snr;  // after each use, unbiased estimate of theta
  std::vector<double> analytic_snr;   // 1 / mmse - 1 from the filter covariance
  std::vector<double> expected_power;  // per use, from the filter covariance
  double message_scale = 0.0;          // length of the virtual offset g
  double mean_power = 0.0;             // measured over all uses and trials
  double symbol_error_rate = 0.0;
  std::uint64_t symbol_errors = 0;
  double empirical_rate = 0.0;  // largest log(M)/N with SER <= 1e-3 on this trial budget
  double bound_rate = 0.0;      // Riccati rate of (model, s)
  double steady_innovation_var = 0.0;  // measured over the second half of the block
  double riccati_innovation_var = 0.0;  // 1 + c' Sigma c
  std::vector<double> innovation_autocorr;  // normalized innovations, lags 1..10
  std::vector<double> final_errors;  // unbiased decoding error per trial
  double direct_gap = 0.0;  // max |plain recursion - weighted form| in units of the error std, where resolvable
};

ClosedLoopResult run_closed_loop(const ClosedLoopRun& cfg);

struct CollapseRow {
  int N = 0;
  std::uint64_t M = 0;
  int trials = 0;
  double ser = 0.0;
  double empirical_rate = 0.0;
  double bound_rate = 0.0;
  double loglog = 0.0;  // log(-log SER); NaN when SER is 0 or 1
};

// SER at fixed rate rate_fraction * bound with M = floor(exp(rate N)).
std::vector<CollapseRow> error_collapse_study(const StateSpaceModel& model, const Eigen::VectorXd& s,
                                              double rho, double rate_fraction,
                                              const std::vector<int>& N_list, int trials,
                                              std::uint64_t seed, int threads = 0);

}  // namespace frelay
