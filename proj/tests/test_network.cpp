// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "rotdcf/error.hpp"
#include "rotdcf/network.hpp"
#include "test_util.hpp"

using namespace rotdcf;

namespace {

void randomize(Network& net, std::uint64_t seed) {
  net.init(seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n01;
  for (auto& p : net.params())
    if (p.name.ends_with("bias") || p.name.ends_with("beta"))
      for (double& v : p.value.values()) v = 0.3 * n01(rng);
}

Tensor roll_alpha(const Tensor& f, int s) {
  Tensor out(f.shape());
  const std::size_t B = f.dim(0), C = f.dim(1), A = f.dim(2), HW = f.dim(3) * f.dim(4);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t u = 0; u < HW; ++u)
          out[((b * C + c) * A + (a + s) % A) * HW + u] = f[((b * C + c) * A + a) * HW + u];
  return out;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("lift and joint layers match the dense oracle") {
    for (const char* text : {"ntheta=4 input(2,7,7) lift(5,2,3) joint(5,3,3,3)",
                             "ntheta=8 input(1,9,8) lift(5,2,5) joint(5,2,3,4)",
                             "ntheta=6 input(3,6,7) lift(3,2,1) joint(3,2,1,6)",
                             "ntheta=5 input(1,11,11) lift(7,2,6) joint(7,3,6,5)"}) {
      CAPTURE(text);
      Network net(ArchSpec::parse(text));
      randomize(net, 42);
      const auto x = test::random_tensor({2, net.arch().layers[0].C + 0ul, static_cast<std::size_t>(net.arch().layers[0].H),
                                          static_cast<std::size_t>(net.arch().layers[0].W)},
                                         7);
      const auto outs = net.forward_all(x, 2);
      const auto& an1 = build_angular_basis(1, std::max(2, net.arch().n_theta));
      const auto lift_ref = test::naive_conv(outs[0], net.coeffs(1), net.spatial_basis(1), an1);
      CHECK(test::rel_diff(outs[1], lift_ref) < 1e-12);
      const auto joint_ref = test::naive_conv(outs[1], net.coeffs(2), net.spatial_basis(2), *net.angular_basis(2));
      CHECK(test::rel_diff(outs[2], joint_ref) < 1e-12);
    }
  }

  TEST_CASE("zero input produces the bias") {
    Network net(ArchSpec::parse("ntheta=4 input(1,7,7) lift(5,3,3) joint(5,2,3,3)"));
    randomize(net, 3);
    net.param("l1.bias").value.fill(0.0);
    const auto y = net.forward(Tensor({1, 1, 7, 7}));
    const auto& b = net.param("l2.bias").value;
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t k = 0; k < 4 * 49; ++k) CHECK(y[o * 4 * 49 + k] == doctest::Approx(b[o]).epsilon(1e-14));
  }

  TEST_CASE("centred delta reproduces steered basis samples") {
    const int N = 8;
    Network net(ArchSpec::parse("ntheta=8 input(1,9,9) lift(5,3,3)"));
    const auto& sp = net.spatial_basis(1);
    const double h2 = sp.grid.h * sp.grid.h;
    for (int k = 0; k < 3; ++k) {
      auto& a = net.param("l1.coeffs").value;
      a.fill(0.0);
      a(0, 0, k) = 1.0;
      Tensor x({1, 1, 9, 9});
      x(0, 0, 4, 4) = 1.0;
      const auto y = net.forward(x);
      for (int s = 0; s < N; ++s) {
        const auto S = steering_matrix(sp, 2 * std::numbers::pi * s / N);
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx) {
            double w = 0.0;
            for (int q = 0; q < 3; ++q) w += S(q, k) * sp.sample(q)[(dy + 2) * 5 + dx + 2];
            // correlation flips: y(c - v) = W(v)
            CHECK(y(0, 0, s, 4 - dy, 4 - dx) == doctest::Approx(h2 * w).epsilon(1e-12).scale(1.0));
          }
      }
    }
  }

  TEST_CASE("alpha-constant input is annihilated by non-constant angular rows") {
    Network net(ArchSpec::parse("ntheta=8 input(1,9,9) lift(5,2,3) joint(5,3,3,5)"));
    randomize(net, 8);
    auto& a = net.param("l2.coeffs").value;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t k = 0; k < 3; ++k) a(i, o, k, 0) = 0.0;
    // Radial-only lift filters make the lifted map constant along alpha.
    auto& a1 = net.param("l1.coeffs").value;
    for (std::size_t i = 0; i < 2; ++i) a1(0, i, 1) = a1(0, i, 2) = 0.0;
    const auto outs = net.forward_all(test::random_tensor({2, 1, 9, 9}, 5), 2);
    const auto& b = net.param("l2.bias").value;
    for (std::size_t n = 0; n < outs[2].size(); ++n)
      CHECK(outs[2][n] == doctest::Approx(b[(n / (8 * 81)) % 3]).epsilon(1e-12).scale(1.0));
  }

  TEST_CASE("output shape") {
    Network net(make_preset("conv3-rotdcf"));
    net.init(1);
    const auto outs = net.forward_all(Tensor({3, 1, 28, 28}), 1);
    CHECK(outs[1].shape() == Shape{3, 8, 8, 28, 28});
    CHECK(net.forward(Tensor({3, 1, 28, 28})).shape() == Shape{3, 10});
    CHECK_THROWS_AS(net.forward(Tensor({3, 1, 27, 28})), Error);
  }

  TEST_CASE("pointwise and pooling layers commute with alpha rolls") {
    Network net(ArchSpec::parse("ntheta=4 input(2,8,8) lift(3,3,1) relu groupnorm avgpool(2) maxpool(2) relu"));
    randomize(net, 2);
    const auto f = test::random_tensor({2, 3, 4, 8, 8}, 9);
    Tensor cur = f;
    for (std::size_t i = 2; i <= 6; ++i) {
      CAPTURE(i);
      for (int s : {1, 3}) {
        const auto a = roll_alpha(net.apply_layer(i, cur), s);
        const auto b = net.apply_layer(i, roll_alpha(cur, s));
        // groupnorm sums in a different order after the roll
        CHECK(test::rel_diff(a, b) < 1e-14);
      }
      cur = net.apply_layer(i, cur);
    }
  }

  TEST_CASE("softmax loss") {
    const std::vector<int> labels{3, 1};
    Tensor z({2, 10});
    CHECK(Network::softmax_loss(z, labels, nullptr) == doctest::Approx(std::log(10.0)).epsilon(1e-15));
    double prev = 1e9;
    for (double margin : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
      Tensor m({2, 10});
      m(0, 3) = margin;
      m(1, 1) = margin;
      const double l = Network::softmax_loss(m, labels, nullptr);
      CHECK(l < prev);
      prev = l;
    }
    CHECK(prev < 1e-5);
    const auto r = test::random_tensor({4, 10}, 1);
    Tensor swapped({4, 10});
    const int perm[4] = {2, 0, 3, 1};
    const std::vector<int> lab{1, 5, 9, 0};
    std::vector<int> lab2(4);
    for (int i = 0; i < 4; ++i) {
      for (int c = 0; c < 10; ++c) swapped(i, c) = r(perm[i], c);
      lab2[i] = lab[perm[i]];
    }
    CHECK(Network::softmax_loss(r, lab, nullptr) == doctest::Approx(Network::softmax_loss(swapped, lab2, nullptr)));
    CHECK_THROWS_AS(Network::softmax_loss(r, std::vector<int>{1, 2, 3, 10}, nullptr), Error);
  }

  TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    Network net(ArchSpec::parse("ntheta=4 input(1,9,9) lift(5,2,3) relu joint(5,2,3,3) relu avgpool(2) flatten dense(3)"));
    randomize(net, 1);
    Trace t;
    const auto y = net.forward(test::random_tensor({2, 1, 9, 9}, 3), &t);
    net.zero_grad();
    net.backward(t, Tensor(y.shape()));
    for (const auto& p : net.params()) CHECK(p.grad.max_abs() == 0.0);
  }

  TEST_CASE("gradients add over batch elements") {
    Network net(ArchSpec::parse(
        "ntheta=4 input(1,9,9) lift(5,2,3) relu joint(5,2,3,3) relu maxpool(2) flatten dense(4) relu dense(3)"));
    randomize(net, 6);
    const auto x = test::random_tensor({2, 1, 9, 9}, 13);
    const std::vector<int> labels{0, 2};
    auto grads_for = [&](const Tensor& xb, std::span<const int> lb, double weight) {
      Trace t;
      Tensor dl;
      const auto y = net.forward(xb, &t);
      Network::softmax_loss(y, lb, &dl);
      dl.scale(weight);
      net.zero_grad();
      net.backward(t, dl);
      std::vector<Tensor> g;
      for (const auto& p : net.params()) g.push_back(p.grad);
      return g;
    };
    const auto both = grads_for(x, labels, 1.0);
    Tensor x0({1, 1, 9, 9}), x1({1, 1, 9, 9});
    std::copy(x.data(), x.data() + 81, x0.data());
    std::copy(x.data() + 81, x.data() + 162, x1.data());
    const auto g0 = grads_for(x0, std::span(labels).subspan(0, 1), 0.5);
    const auto g1 = grads_for(x1, std::span(labels).subspan(1, 1), 0.5);
    for (std::size_t p = 0; p < both.size(); ++p)
      for (std::size_t i = 0; i < both[p].size(); ++i)
        CHECK(both[p][i] == doctest::Approx(g0[p][i] + g1[p][i]).epsilon(1e-10).scale(1e-12));
  }
}
