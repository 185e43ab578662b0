// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "frelay/poly.hpp"

namespace frelay {

inline constexpr double kStabilityTol = 1e-9;

// G(D) z[k] = F(D) eps[k] with unit-variance innovations.
struct ArmaProcess {
  Poly beta{1.0};
  Poly alpha{1.0};

  static ArmaProcess white(double variance);
  std::size_t p() const { return beta.size() - 1; }
  std::size_t q() const { return alpha.size() - 1; }
};

// Relay FIR filter: taps[l-1] is the gain at lag l.
struct FirFilter {
  std::vector<double> taps;

  std::size_t L() const { return taps.size(); }
  bool is_zero() const;
  Poly H() const;   // 1 + sum h[l] D^l
  Poly H1() const;  // sum h[l] D^l
};

struct StateSpaceModel {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::VectorXd r;
  double alpha0 = 1.0;
  int d = 0;
  bool white = false;
};

bool is_stable(const ArmaProcess& proc);
double min_root_modulus(const Poly& g);

StateSpaceModel to_state_space(const ArmaProcess& proc);
// Coefficients padded to length d+1.
ArmaProcess reconstruct(const StateSpaceModel& model);

std::vector<double> spectral_factorize(std::vector<double> autocov);

// y with ar_extra(D) y = sum_i filter_i(D) proc_i, all proc_i independent.
struct FilteredTerm {
  Poly filter;
  ArmaProcess proc;
};
ArmaProcess combine_filtered(const Poly& ar_extra, const std::vector<FilteredTerm>& terms);

// Law of z~ with H(D) z~ = H1(D) w + z.
ArmaProcess compose_effective_noise(const ArmaProcess& w, const ArmaProcess& z,
                                    const FirFilter& taps);
// Law of z~ with H(D) z~ = n + z, n already filtered by the relay paths.
ArmaProcess compose_injected_noise(const ArmaProcess& n, const ArmaProcess& z,
                                   const FirFilter& taps);

std::vector<double> impulse_response(const ArmaProcess& proc, std::size_t n);
std::vector<double> autocovariance(const ArmaProcess& proc, std::size_t max_lag);
std::vector<double> sample_path(const ArmaProcess& proc, std::size_t n, std::uint64_t seed);

std::string to_string(const ArmaProcess& proc);
ArmaProcess parse_arma(const std::string& text);

}  // namespace frelay
