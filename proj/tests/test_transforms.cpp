// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rotdcf/error.hpp"
#include "rotdcf/transforms.hpp"
#include "test_util.hpp"

using namespace rotdcf;

namespace {

constexpr double kPi = std::numbers::pi;

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_SUITE("transforms") {
  TEST_CASE("rotation matches the independent bilinear oracle") {
    const auto x = test::random_tensor({2, 1, 9, 9}, 3);
    for (double t : {0.3, 1.0, -2.2, kPi / 4}) {
      CAPTURE(t);
      const Tensor r = rotate_image(x, t);
      for (std::size_t p = 0; p < 2; ++p) {
        std::vector<double> plane(x.data() + p * 81, x.data() + (p + 1) * 81);
        const auto ref = test::bilinear_rotate(plane, 9, 9, t);
        for (std::size_t u = 0; u < 81; ++u) CHECK(r[p * 81 + u] == doctest::Approx(ref[u]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("quarter turns are exact permutations") {
    const auto x = test::random_tensor({1, 2, 3, 8, 8}, 5);
    CHECK(bit_equal(rotate_image(x, 0.0), x));
    Tensor y = x;
    for (int k = 0; k < 4; ++k) y = rotate_image(y, kPi / 2);
    CHECK(bit_equal(y, x));
    // Counter-clockwise on screen: the top-right corner moves to the top-left.
    Tensor e({1, 1, 4, 4});
    e(0, 0, 0, 3) = 1.0;
    CHECK(rotate_image(e, kPi / 2)(0, 0, 0, 0) == 1.0);
    CHECK(rotate_image(e, kPi)(0, 0, 3, 0) == 1.0);
  }

  TEST_CASE("rotation commutes with scaling") {
    const auto x = test::random_tensor({1, 1, 11, 11}, 9);
    Tensor x4 = x;
    x4.scale(4.0);
    Tensor r = rotate_image(x, 0.7);
    r.scale(4.0);
    CHECK(bit_equal(rotate_image(x4, 0.7), r));
  }

  TEST_CASE("cubic interpolation reproduces samples and quadratics") {
    std::vector<double> plane(7 * 7);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) plane[i * 7 + j] = 0.5 * i * i - 1.5 * i * j + 2.0 * j + 1.0;
    CHECK(bicubic(plane.data(), 7, 7, 3.0, 4.0) == doctest::Approx(plane[3 * 7 + 4]).epsilon(1e-14));
    // Keys' kernel is exact for polynomials up to degree 2.
    const double r = 2.4, c = 3.7;
    CHECK(bicubic(plane.data(), 7, 7, r, c) == doctest::Approx(0.5 * r * r - 1.5 * r * c + 2.0 * c + 1.0).epsilon(1e-12));
    CHECK(bilinear(plane.data(), 7, 7, -5.0, 2.0) == 0.0);
  }

  TEST_CASE("T_rho composes on grid-exact angles") {
    const auto f = test::random_tensor({2, 3, 8, 10, 10}, 11);
    for (int s1 : {0, 2, 4, 6})
      for (int s2 : {2, 6}) {
        CAPTURE(s1);
        CAPTURE(s2);
        CHECK(bit_equal(apply_Trho_steps(apply_Trho_steps(f, s1), s2), apply_Trho_steps(f, s1 + s2)));
        CHECK(bit_equal(apply_Trho(f, 2 * kPi * s1 / 8), apply_Trho_steps(f, s1)));
      }
    CHECK(feature_norm(apply_Trho_steps(f, 2)) == feature_norm(f));
    CHECK(bit_equal(roll_alpha(f, 8), f));
    CHECK(roll_alpha(f, 3)(1, 2, 3, 4, 5) == f(1, 2, 0, 4, 5));
  }

  TEST_CASE("T_rho rejects angles off the group grid") {
    const auto f = test::random_tensor({1, 1, 8, 5, 5}, 1);
    try {
      apply_Trho(f, 0.1);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Domain);
    }
  }

  TEST_CASE("deformation displaces content by tau") {
    Tensor x({1, 1, 6, 6});
    x(0, 0, 2, 3) = 1.0;
    const auto tau = make_translation(1.0, -2.0, 6, 6);
    const Tensor y = apply_deformation(x, tau);
    // out(u) = x(u - tau): the spike moves one row down and two columns left.
    CHECK(y(0, 0, 3, 1) == doctest::Approx(1.0));
    CHECK(feature_norm(y) == doctest::Approx(feature_norm(x)));
    CHECK(tau.sup == doctest::Approx(std::sqrt(5.0)));
    CHECK(tau.grad_sup == 0.0);
  }

  TEST_CASE("gradient bound of affine fields is the spectral norm") {
    DeformationField f;
    f.tau = Tensor({2, 9, 9});
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) {
        // Jacobian [[0, -0.1], [0.1, 0]] has spectral norm 0.1; [[0.12, 0], [0, 0.05]] has 0.12.
        f.tau(0, i, j) = -0.1 * j;
        f.tau(1, i, j) = 0.1 * i;
      }
    measure_deformation(f);
    CHECK(f.grad_sup == doctest::Approx(0.1).epsilon(1e-12));
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) {
        f.tau(0, i, j) = 0.12 * i;
        f.tau(1, i, j) = 0.05 * j;
      }
    measure_deformation(f);
    CHECK(f.grad_sup == doctest::Approx(0.12).epsilon(1e-12));
  }

  TEST_CASE("random deformations hit the requested gradient bound") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto f = make_deformation(DeformationKind::SmoothRandom, 0.1, seed, 28, 28);
      CHECK(f.grad_sup == doctest::Approx(0.1).epsilon(1e-12));
      CHECK(f.satisfies_A3());
      CHECK(f.sup > 0.0);
    }
    CHECK_FALSE(make_deformation(DeformationKind::SmoothRandom, 0.3, 1, 28, 28).satisfies_A3());
    CHECK_THROWS_AS(make_deformation(DeformationKind::SmoothRandom, 0.0, 1, 28, 28), Error);
  }

  TEST_CASE("pooled deformations shrink with the grid") {
    const auto tau = make_translation(4.0, -2.0, 28, 28);
    const auto p = pool_deformation(tau, 2, 14, 14);
    CHECK(p.H() == 14);
    CHECK(p.tau(0, 5, 5) == doctest::Approx(2.0));
    CHECK(p.tau(1, 5, 5) == doctest::Approx(-1.0));
  }

  TEST_CASE("feature norms") {
    Tensor f({1, 1, 1, 4, 4});
    f.fill(2.0);
    CHECK(feature_norm(f) == doctest::Approx(2.0));
    f(0, 0, 0, 0, 0) = 100.0;
    CHECK(feature_norm_cropped(f, 1) == doctest::Approx(2.0));
    CHECK_THROWS_AS(feature_norm_cropped(f, 2), Error);
  }
}
