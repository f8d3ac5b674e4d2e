// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "rotdcf/arch.hpp"
#include "rotdcf/error.hpp"

using namespace rotdcf;

TEST_SUITE("arch") {
  TEST_CASE("conv3 presets follow the published layer tables") {
    CHECK(make_preset("conv3-rotdcf").to_string() ==
          "ntheta=8 input(1,28,28) lift(5,8,3) relu avgpool(2) joint(5,16,3,5) relu avgpool(2) joint(5,32,3,5) relu "
          "avgpool(2) flatten dense(64) relu dense(10) softmax_loss");
    CHECK(make_preset("conv3-cnn").to_string() ==
          "ntheta=1 input(1,28,28) conv_plain(5,32) relu avgpool(2) conv_plain(5,64) relu avgpool(2) conv_plain(5,128) "
          "relu avgpool(2) flatten dense(64) relu dense(10) softmax_loss");
    const auto dcf = make_preset("conv3", Variant::Dcf, {.M = 32, .K = 5});
    CHECK(dcf.n_theta == 1);
    CHECK(dcf.layers[4].to_string() == "lift(5,64,5)");
  }

  TEST_CASE("vgg16 presets have 13 convolutions") {
    for (const char* name : {"vgg16-cnn", "vgg16-rotdcf"}) {
      const auto a = make_preset(name);
      int convs = 0, pools = 0;
      for (const auto& l : a.layers) {
        convs += l.is_conv();
        pools += l.type == LayerType::MaxPool;
      }
      CHECK(convs == 13);
      CHECK(pools == 3);
      CHECK(a.layers[0].to_string() == "input(3,32,32)");
    }
  }

  TEST_CASE("text round trip") {
    for (const char* name : {"conv3-cnn", "conv3-rotdcf", "vgg16-cnn", "vgg16-rotdcf"}) {
      const auto a = make_preset(name);
      CHECK(ArchSpec::parse(a.to_string()) == a);
    }
    const auto g = ArchSpec::parse("ntheta=4 input(1,9,9) lift(5,2,3) groupnorm relu maxpool(2) flatten dense(3)");
    CHECK(g.to_string() == "ntheta=4 input(1,9,9) lift(5,2,3) groupnorm relu maxpool(2) flatten dense(3)");
  }

  TEST_CASE("shape inference") {
    const auto s = infer_shapes(make_preset("conv3-rotdcf"));
    CHECK(s[1] == Shape{8, 8, 28, 28});
    CHECK(s[3] == Shape{8, 8, 14, 14});
    CHECK(s[9] == Shape{32, 8, 3, 3});
    CHECK(s[10] == Shape{2304});
    CHECK(s.back() == Shape{10});
    const auto r = filter_radii(make_preset("conv3-rotdcf"));
    CHECK(r[1] == 2.0);
    CHECK(r[4] == 4.0);
    CHECK(r[7] == 8.0);
  }

  TEST_CASE("invalid sequences are rejected") {
    auto bad = [](const char* text) { CHECK_THROWS_AS(ArchSpec::parse(text), Error); };
    bad("ntheta=8 lift(5,8,3)");
    bad("ntheta=8 input(1,28,28) joint(5,8,3,3)");
    bad("ntheta=8 input(1,28,28) lift(5,8,3) lift(5,8,3)");
    bad("ntheta=8 input(1,28,28) lift(4,8,3)");
    bad("ntheta=8 input(1,28,28) lift(5,8,3) joint(5,8,3,9)");
    bad("ntheta=8 input(1,4,4) avgpool(5)");
    bad("ntheta=8 input(1,4,4) dense(3)");
    bad("ntheta=8 input(1,4,4) flatten softmax_loss relu");
    bad("ntheta=8 input(1,4,4) frobnicate");
    bad("ntheta=8 input(1,4) relu");
    bad("ntheta=8 input(1,4,x) relu");
    bad("ntheta=1 input(1,9,9) lift(3,2,1) joint(3,2,1,1)");
    CHECK_THROWS_AS(parse_variant("fancy"), Error);
    CHECK_THROWS_AS(make_preset("resnet-cnn"), Error);
  }
}
