// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <tuple>

#include "rotdcf/kernels.hpp"
#include "test_util.hpp"

using namespace rotdcf;
using kernels::Op;

TEST_SUITE("kernels") {
  TEST_CASE("gemm matches the serial reference for every transpose combination") {
    int seed = 0;
    for (Op oa : {Op::N, Op::T})
      for (Op ob : {Op::N, Op::T})
        for (auto [m, n, k] : {std::tuple{1, 1, 1}, std::tuple{3, 5, 7}, std::tuple{4, 8, 25}, std::tuple{17, 33, 9},
                               std::tuple{32, 196, 120}, std::tuple{5, 3, 0}})
          for (bool acc : {false, true}) {
            const int lda = (oa == Op::N ? k : m) + 2, ldb = (ob == Op::N ? n : k) + 1, ldc = n + 3;
            const auto A = test::random_tensor({static_cast<std::size_t>((oa == Op::N ? m : k) * lda + 1)}, ++seed);
            const auto B = test::random_tensor({static_cast<std::size_t>((ob == Op::N ? k : n) * ldb + 1)}, ++seed);
            auto C1 = test::random_tensor({static_cast<std::size_t>(m * ldc)}, ++seed);
            auto C2 = C1;
            kernels::gemm(oa, ob, m, n, k, A.data(), lda, B.data(), ldb, acc, C1.data(), ldc);
            kernels::reference::gemm(oa, ob, m, n, k, A.data(), lda, B.data(), ldb, acc, C2.data(), ldc);
            double worst = 0.0;
            for (std::size_t i = 0; i < C1.size(); ++i) worst = std::max(worst, std::abs(C1[i] - C2[i]));
            CAPTURE(m);
            CAPTURE(n);
            CAPTURE(k);
            CHECK(worst < 1e-12);
          }
  }

  TEST_CASE("im2col and col2im match the reference") {
    for (auto [H, W, L] : {std::tuple{7, 7, 5}, std::tuple{9, 4, 3}, std::tuple{3, 3, 5}, std::tuple{28, 28, 5}}) {
      const auto x = test::random_tensor({static_cast<std::size_t>(H * W)}, H * 100 + W);
      const long ld = H * W + 5;
      Tensor c1({static_cast<std::size_t>(L * L * ld)});
      Tensor c2 = c1;
      kernels::im2col(x.data(), H, W, L, c1.data(), ld);
      kernels::reference::im2col(x.data(), H, W, L, c2.data(), ld);
      CHECK(c1 == c2);
      const auto g = test::random_tensor(c1.shape(), 5);
      Tensor p1({static_cast<std::size_t>(H * W)});
      Tensor p2 = p1;
      kernels::col2im_add(g.data(), H, W, L, ld, p1.data());
      kernels::reference::col2im_add(g.data(), H, W, L, ld, p2.data());
      double worst = 0.0;
      for (std::size_t i = 0; i < p1.size(); ++i) worst = std::max(worst, std::abs(p1[i] - p2[i]));
      CHECK(worst < 1e-12);
    }
  }

  TEST_CASE("col2im is the adjoint of im2col") {
    const int H = 6, W = 5, L = 3;
    const auto x = test::random_tensor({H * W}, 1);
    const auto g = test::random_tensor({L * L * H * W}, 2);
    Tensor c({L * L * H * W}), p({H * W});
    kernels::im2col(x.data(), H, W, L, c.data(), H * W);
    kernels::col2im_add(g.data(), H, W, L, H * W, p.data());
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) lhs += c[i] * g[i];
    for (std::size_t i = 0; i < p.size(); ++i) rhs += p[i] * x[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}
