// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <vector>

namespace frelay {

// Coefficients in ascending powers of the delay operator D.
using Poly = std::vector<double>;
using Roots = std::vector<std::complex<double>>;

Poly poly_mul(const Poly& a, const Poly& b);
Poly poly_add(const Poly& a, const Poly& b);
Poly poly_scale(const Poly& a, double c);
Poly poly_trim(Poly a, double tol = 0.0);
double poly_eval(const Poly& a, double x);
std::complex<double> poly_eval(const Poly& a, std::complex<double> x);

// Zeros of a(D). Leading zeros of the highest powers are trimmed first.
Roots poly_roots(const Poly& a);

// prod_i (1 - D / root_i); imaginary residue of conjugate pairs is dropped.
Poly poly_from_roots(const Roots& roots);

// c_j = sum_i a_i a_{i+j} for j = 0..deg.
std::vector<double> poly_autocov(const Poly& a);

// Truncated power series of num(D) / den(D), den[0] != 0.
std::vector<double> series_div(const Poly& num, const Poly& den, std::size_t n);
std::vector<double> series_mul(const std::vector<double>& a, const std::vector<double>& b,
                               std::size_t n);

}  // namespace frelay
