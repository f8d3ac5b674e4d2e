// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/bessel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rotdcf/error.hpp"

namespace rotdcf {

namespace {

// J_0(x) .. J_nmax(x) via downward recurrence from a start index well above
// both nmax and x, where the true sequence is negligible.
std::vector<double> bessel_sequence(int nmax, double x) {
  std::vector<double> out(static_cast<std::size_t>(nmax) + 1, 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }
  if (x < 1e-8) {
    // Leading series term; the recurrence below would underflow.
    double term = 1.0;
    for (int n = 0; n <= nmax; ++n) {
      out[n] = term * (1.0 - x * x / (4.0 * (n + 1)));
      term *= x / (2.0 * (n + 1));
    }
    return out;
  }

  const double top = std::max(static_cast<double>(nmax), x);
  int start = static_cast<int>(top + 50.0 + 10.0 * std::cbrt(std::max(x, 1.0)));
  if (start % 2) ++start;

  std::vector<double> seq(static_cast<std::size_t>(start) + 2, 0.0);
  seq[start + 1] = 0.0;
  seq[start] = 1e-30;
  for (int k = start; k >= 1; --k) {
    seq[k - 1] = (2.0 * k / x) * seq[k] - seq[k + 1];
    if (std::abs(seq[k - 1]) > 1e200) {
      for (int j = k - 1; j <= start; ++j) seq[j] *= 1e-200;
    }
  }

  double sumsq = seq[0] * seq[0];
  double sum_even = seq[0];
  for (int k = 1; k <= start; ++k) {
    sumsq += 2.0 * seq[k] * seq[k];
    if (k % 2 == 0) sum_even += 2.0 * seq[k];
  }
  double norm = std::sqrt(sumsq);
  if (sum_even < 0.0) norm = -norm;
  for (int n = 0; n <= nmax; ++n) out[n] = seq[n] / norm;
  return out;
}

}  // namespace

double bessel_j(int order, double x) {
  if (order < 0) throw Error(ErrorKind::Domain, "bessel_j: negative order");
  if (x < 0.0) {
    // J_n(-x) = (-1)^n J_n(x)
    const double v = bessel_j(order, -x);
    return (order % 2) ? -v : v;
  }
  return bessel_sequence(order, x)[order];
}

double bessel_j_prime(int order, double x) {
  if (order < 0) throw Error(ErrorKind::Domain, "bessel_j_prime: negative order");
  if (order == 0) return -bessel_j(1, x);
  const auto seq = bessel_sequence(order + 1, std::abs(x));
  const double v = 0.5 * (seq[order - 1] - seq[order + 1]);
  // J'_n has parity opposite to J_n.
  return (x < 0.0 && order % 2 == 0) ? -v : v;
}

std::vector<double> bessel_zeros(int order, int count) {
  if (order < 0 || order > kMaxBesselOrder)
    throw Error(ErrorKind::Domain, "bessel_zeros: order " + std::to_string(order) +
                                       " outside [0, " + std::to_string(kMaxBesselOrder) + "]");
  if (count < 1 || count > kMaxBesselZeroCount)
    throw Error(ErrorKind::Domain, "bessel_zeros: count " + std::to_string(count) +
                                       " outside [1, " + std::to_string(kMaxBesselZeroCount) + "]");

  // Consecutive zeros of J_m (m >= 1/2) are more than pi apart and the first
  // one exceeds m, so a scan with step 0.5 starting at m sees each sign change
  // exactly once. J_0 is positive on (0, 2.4).
  std::vector<double> zeros;
  zeros.reserve(count);
  const double step = 0.5;
  double a = order == 0 ? 0.5 : static_cast<double>(order);
  double fa = bessel_j(order, a);
  while (static_cast<int>(zeros.size()) < count) {
    const double b = a + step;
    const double fb = bessel_j(order, b);
    if (fa == 0.0) {
      zeros.push_back(a);
    } else if ((fa < 0.0) != (fb < 0.0)) {
      double lo = a, hi = b, flo = fa;
      for (int it = 0; it < 200 && hi - lo > 4e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = bessel_j(order, mid);
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      zeros.push_back(0.5 * (lo + hi));
    }
    a = b;
    fa = fb;
  }
  return zeros;
}

}  // namespace rotdcf
