// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "frelay/arma.hpp"

namespace frelay {

struct RelayNode {
  std::string id;
  FirFilter filter;
  ArmaProcess noise = ArmaProcess::white(1.0);
  double gamma = 1.0;
};

struct RelayNetwork {
  std::vector<RelayNode> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
  double rho = 1.0;
  ArmaProcess dest_noise = ArmaProcess::white(1.0);
  double sigma_n2 = 0.0;
};

struct EffectiveRelay {
  FirFilter taps;
  // Relay noise as seen at the destination: sum_i T_i(D) w_i.
  ArmaProcess injected_noise;
};

// T_i(D): response from the input of node i to the destination, keyed like net.nodes.
std::vector<Poly> node_to_destination(const RelayNetwork& net);
EffectiveRelay reduce_to_effective_filter(const RelayNetwork& net);
std::size_t network_memory(const RelayNetwork& net);

struct NodePower {
  std::string id;
  double power = 0.0;
  double budget = 0.0;
  bool ok = true;
};
// Open-loop check: source white with power rho, independent of relay noises.
std::vector<NodePower> check_node_powers(const RelayNetwork& net);

RelayNetwork parse_network(const std::string& text);

struct BlockChannel {
  Eigen::MatrixXd H, Hinv, Kw, Kz, Kz_eff;
  int N = 0;
  int L = 0;
};

Eigen::MatrixXd toeplitz_covariance(const ArmaProcess& proc, int n);
// a_0 = 1, a_k = -sum_i h_i a_{k-i}: first column of H^{-1}.
std::vector<double> banded_inverse_coeffs(const FirFilter& taps, int n);
Eigen::MatrixXd banded_toeplitz(const std::vector<double>& first_column, int n);
BlockChannel build_block_channel(const FirFilter& taps, const ArmaProcess& w,
                                 const ArmaProcess& z, int N);

enum class Normalization { kMessageOnly, kBlockPlusFlush };

// Second-order statistics of the source input over the message uses.
// Kxw = E[x w'] is N x M with M >= N; missing columns are treated as zero.
struct InputStatistics {
  Eigen::MatrixXd Kx;
  Eigen::MatrixXd Kxw;
};

InputStatistics linear_feedback_statistics(const Eigen::MatrixXd& Ks, const Eigen::MatrixXd& B,
                                           const BlockChannel& ch, const ArmaProcess& w);
InputStatistics open_loop_white(double rho, int N);

double relay_power_exact(const FirFilter& taps, const ArmaProcess& w, const InputStatistics& in,
                         Normalization norm = Normalization::kBlockPlusFlush);

// Large-N limit of relay_power_exact for stationary inputs: acov holds the
// autocovariance of x + w at lags 0..L-1.
double relay_power_stationary(const FirFilter& taps, const std::vector<double>& acov);

}  // namespace frelay
