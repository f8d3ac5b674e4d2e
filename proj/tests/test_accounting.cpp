// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sstream>

#include "rotdcf/accounting.hpp"
#include "rotdcf/error.hpp"

using namespace rotdcf;

namespace {

std::int64_t count(const std::string& family, Variant v, int M, int K = 0, int Ka = 0) {
  PresetOptions o;
  o.M = M;
  o.K = K;
  o.K_alpha = Ka;
  return param_count(make_preset(family, v, o), v).total_params;
}

}  // namespace

TEST_SUITE("accounting") {
  TEST_CASE("hand-expanded parameter counts") {
    CHECK(count("conv3", Variant::Cnn, 32) == 25 * (1 * 32 + 32 * 64 + 64 * 128) + (32 + 64 + 128));
    CHECK(count("conv3", Variant::RotDcf, 8, 3, 5) == (3 * 1 * 8 + 8) + (3 * 5 * 8 * 16 + 16) + (3 * 5 * 16 * 32 + 32));
    CHECK(count("conv3", Variant::Dcf, 32, 5) == 5 * (32 + 2048 + 8192) + 224);
    CHECK(count("vgg16", Variant::RotDcf, 32, 3, 5) == 1137856);
  }

  TEST_CASE("every displayed table entry") {
    // Reference parameter counts as displayed (4 significant digits).
    const std::vector<std::string> conv3{"2.570e5", "5.158e4", "3.104e4", "2.871e5", "1.026e5",
                                         "6.160e4", "6.419e4", "3.856e4", "1.610e4", "9.680e3"};
    const std::vector<std::string> vgg{"2.732e6", "1.593e6", "1.138e6"};
    const std::vector<double> conv3_ratio{1.00, 0.20, 0.12, 1.12, 0.40, 0.24, 0.25, 0.15, 0.06, 0.04};
    const auto t = count_table("conv3");
    REQUIRE(t.size() >= conv3.size());
    for (std::size_t i = 0; i < conv3.size(); ++i) {
      CAPTURE(t[i].name);
      CHECK(format_sig(static_cast<double>(t[i].total_params)) == conv3[i]);
      CHECK(*t[i].ratio == doctest::Approx(conv3_ratio[i]).epsilon(0.005 / conv3_ratio[i] + 1e-9));
    }
    const auto v = count_table("vgg16");
    for (std::size_t i = 0; i < vgg.size(); ++i) CHECK(format_sig(static_cast<double>(v[i].total_params)) == vgg[i]);
  }

  TEST_CASE("totals are sums of layers and the head is separate") {
    for (const auto& r : count_table("conv3")) {
      std::int64_t s = 0;
      double f = 0.0;
      for (const auto& l : r.layers) {
        s += l.params();
        f += l.flops.total;
      }
      CHECK(s == r.total_params);
      CHECK(f == r.total_flops);
      CHECK(r.layers.size() == 3);
    }
    const auto c = param_count(make_preset("conv3-cnn"), Variant::Cnn);
    CHECK(c.head_params == (128 * 3 * 3) * 64 + 64 + 64 * 10 + 10);
  }

  TEST_CASE("basis reduction factor on joint layers") {
    PresetOptions o;
    o.M = 16;
    o.K = 5;
    o.K_alpha = 8;
    const auto arch = make_preset("conv3", Variant::RotDcf, o);
    const auto a = param_count(arch, Variant::RotDcf), b = param_count(arch, Variant::RotNoBasis);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      if (a.layers[i].kind != "joint") continue;
      CHECK(static_cast<double>(a.layers[i].weights) / b.layers[i].weights == doctest::Approx(5.0 * 8 / (25 * 8)));
    }
  }

  TEST_CASE("closed-form flops") {
    CHECK(flops_regular(1, 32, 28, 5).total == 1279488.0);
    // 2 * 8 * 784 * 5 * (8 + 75 + 16 * 8 * 3)
    const auto f = flops_rotdcf(8, 16, 28, 5, 3, 5, 8);
    CHECK(f.total == 2.0 * 8 * 784 * 5 * (8 + 75 + 384));
    CHECK(f.angular + f.basis + f.contraction == f.total);
    CHECK(flops_rotdcf(0, 16, 28, 5, 3, 5, 8).total == 0.0);
    CHECK(flops_nobasis(8, 16, 28, 5, 8).estimate);
    // Ratio to the non-basis layer tends to (K / L^2)(K_alpha / N_theta) for wide layers.
    const double M = 1e7;
    CHECK(flops_rotdcf(M, M, 28, 5, 3, 5, 8).total / flops_nobasis(M, M, 28, 5, 8).total ==
          doctest::Approx((3.0 / 25) * (5.0 / 8)).epsilon(1e-5));
  }

  TEST_CASE("variant mismatches are config errors") {
    CHECK_THROWS_AS(param_count(make_preset("conv3-rotdcf"), Variant::Cnn), Error);
    CHECK_THROWS_AS(param_count(make_preset("conv3-cnn"), Variant::RotDcf), Error);
    CHECK_THROWS_AS(param_count(make_preset("conv3-rotdcf"), Variant::Dcf), Error);
    CHECK_THROWS_AS(table_rows("resnet"), Error);
  }

  TEST_CASE("formatting and reports") {
    CHECK(format_sig(9680) == "9.680e3");
    CHECK(format_sig(99996) == "1.000e5");
    CHECK(format_sig(2731520) == "2.732e6");
    const auto t = count_table("conv3", Variant::RotDcf);
    CHECK(t.size() == 7);
    std::ostringstream table, csv;
    print_cost_table(table, t);
    CHECK(table.str().find("9680") != std::string::npos);
    write_cost_csv(csv, t);
    CHECK(csv.str().rfind("name,variant,layer,kind,W,M_in,M_out,weights,biases,params,flops,flops_estimate\n", 0) == 0);
    const auto j = to_json(t.back());
    CHECK(j["total_params"] == 9680);
    CHECK(j["layers"].size() == 3);
  }
}
