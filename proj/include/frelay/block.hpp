// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "frelay/network.hpp"

namespace frelay {

struct BlockProgram {
  Eigen::MatrixXd Kz_eff;
  Eigen::MatrixXd H;
  Eigen::MatrixXd Hinv;
  Eigen::MatrixXd Kw;
  double rho = 1.0;
  double gamma = 1.0;
  int N = 0;
  int L = 0;
  bool relay_off = false;  // all taps zero: the relay constraint is dropped
  Normalization normalization = Normalization::kMessageOnly;
};

BlockProgram make_block_program(const FirFilter& taps, const ArmaProcess& w, const ArmaProcess& z,
                                double rho, double gamma, int N,
                                Normalization norm = Normalization::kMessageOnly);

struct BlockSolution {
  Eigen::MatrixXd Ky;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Ks;  // Ky - (I+B) Kz_eff (I+B)', eigenvalues below 1e-10 clipped
  double rate_nats = 0.0;
  double kkt_residual = 0.0;  // duality-gap surrogate m/t at exit, in log-det units
  std::vector<double> constraint_slacks;  // source, relay, min eig of Ks
  int newton_steps = 0;
};

struct BlockOptions {
  double gap_tol = 1e-7;
  int max_newton = 200;  // per outer stage
};

BlockSolution solve_block(const BlockProgram& prog, const BlockOptions& opt = {});

// Finite-difference check of the barrier gradient and Hessian at a random feasible point.
struct DerivativeCheck {
  double grad_rel_err = 0.0;
  double hess_rel_err = 0.0;
};
DerivativeCheck check_barrier_derivatives(const BlockProgram& prog, double t, std::uint64_t seed);

// Independent recomputation of the rate and slacks from (Ky, B).
struct BlockCertificate {
  double rate_nats = 0.0;
  double source_slack = 0.0;  // budget - used, same units as the program
  double relay_slack = 0.0;
  double schur_min_eig = 0.0;
};
BlockCertificate certify_block(const BlockProgram& prog, const Eigen::MatrixXd& Ky,
                               const Eigen::MatrixXd& B);

struct TwoTapCandidate {
  double h1 = 0.0;
  double h2 = 0.0;
};
// Uniform sample from the stability triangle intersected with h1^2 + h2^2 <= gamma rho / sigma_w2.
std::vector<TwoTapCandidate> sample_two_taps(double rho, double gamma, double sigma_w2, int trials,
                                             std::uint64_t seed);

struct TwoTapResult {
  TwoTapCandidate taps;
  BlockSolution solution;
  int feasible = 0;
};
TwoTapResult random_two_tap_search(double rho, double gamma, double sigma_w2, int N, int trials,
                                   std::uint64_t seed, int threads = 0,
                                   Normalization norm = Normalization::kMessageOnly);

}  // namespace frelay
