// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace rotdcf {

inline constexpr int kMaxBesselOrder = 64;
inline constexpr int kMaxBesselZeroCount = 64;

/// Bessel function of the first kind J_order(x) for x >= 0, order >= 0.
/// Miller's backward recurrence normalized by the sum rule
/// J_0^2 + 2 * sum_k J_k^2 = 1.
double bessel_j(int order, double x);

/// d/dx J_order(x), from J'_n = J_{n-1} - (n/x) J_n (and J'_0 = -J_1).
double bessel_j_prime(int order, double x);

/// First `count` positive zeros of J_order, ascending, to ~1e-14 absolute.
/// Throws Error(Domain) for order outside [0, 64] or count outside [1, 64].
std::vector<double> bessel_zeros(int order, int count);

}  // namespace rotdcf
