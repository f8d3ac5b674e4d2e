// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "rotdcf/error.hpp"
#include "rotdcf/training.hpp"

using namespace rotdcf;

namespace {

const char* kTiny = "ntheta=4 input(1,28,28) lift(5,2,3) groupnorm relu avgpool(4) joint(3,3,1,3) groupnorm relu "
                    "avgpool(7) flatten dense(10) softmax_loss";

bool same_params(const Network& a, const Network& b) {
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& x = a.params()[i].value;
    const auto& y = b.params()[i].value;
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x[k] != y[k]) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("learning rate decays log-linearly between the endpoints") {
    TrainConfig cfg;
    CHECK(learning_rate(cfg, 0) == doctest::Approx(1e-2).epsilon(1e-14));
    CHECK(learning_rate(cfg, cfg.epochs - 1) == doctest::Approx(1e-4).epsilon(1e-14));
    cfg.epochs = 3;
    CHECK(learning_rate(cfg, 1) == doctest::Approx(1e-3).epsilon(1e-14));
    cfg.epochs = 1;
    CHECK(learning_rate(cfg, 0) == doctest::Approx(1e-2));
  }

  TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.lr_end = 1e-1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.lr_end = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK_NOTHROW(TrainConfig{}.validate());
  }

  TEST_CASE("same seed gives identical parameters and metrics") {
    const Dataset d = make_synthetic(40, 1);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    auto run = [&](std::uint64_t seed) {
      Network net(ArchSpec::parse(kTiny));
      net.init(seed);
      cfg.seed = seed;
      auto m = train(net, d, &d, cfg);
      return std::pair{std::move(net), m};
    };
    const auto [a, ma] = run(3);
    const auto [b, mb] = run(3);
    const auto [c, mc] = run(4);
    CHECK(same_params(a, b));
    CHECK_FALSE(same_params(a, c));
    REQUIRE(ma.size() == 2);
    CHECK(ma[1].train_loss == mb[1].train_loss);
    CHECK(ma[1].test_acc == mb[1].test_acc);
    CHECK(ma[1].lr == doctest::Approx(1e-4));
  }

  TEST_CASE("non-finite loss aborts with a diagnostic") {
    Dataset d = make_synthetic(8, 1);
    d.images(5, 0, 10, 10) = std::numeric_limits<double>::quiet_NaN();
    Network net(ArchSpec::parse(kTiny));
    net.init(1);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    try {
      train(net, d, nullptr, cfg);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Divergence);
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }

  TEST_CASE("untrained accuracy is near chance and order invariant") {
    const Dataset d = make_synthetic(400, 5);
    Network net(make_preset("conv3-rotdcf"));
    net.init(2);
    const double acc = evaluate(net, d);
    CHECK(acc == doctest::Approx(0.1).epsilon(0.5));  // 0.1 +- 0.05
    Dataset r = d;
    for (std::size_t n = 0; n < d.size(); ++n) {
      const std::size_t m = d.size() - 1 - n;
      r.labels[n] = d.labels[m];
      for (std::size_t u = 0; u < 784; ++u) r.images[n * 784 + u] = d.images[m * 784 + u];
    }
    CHECK(evaluate(net, r, 37) == acc);
  }

  TEST_CASE("conv3-rotdcf overfits a small rotated set") {
    const Dataset d = make_rotmnist(make_synthetic(100, 7), 2 * std::numbers::pi, 8);
    PresetOptions po;
    po.norm = true;
    Network net(make_preset("conv3-rotdcf", po));
    net.init(1);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 10;
    const auto m = train(net, d, nullptr, cfg);
    for (const auto& e : m) CHECK(std::isfinite(e.train_loss));
    CHECK(m.back().train_acc > 0.95);
    CHECK(evaluate(net, d) >= 0.95);
  }

  TEST_CASE("metrics csv") {
    const auto p = std::filesystem::temp_directory_path() / "rotdcf_metrics_test.csv";
    write_metrics_csv({{0, 1e-2, 2.3, 0.1, -1.0}, {1, 1e-4, 1.2, 0.6, 0.5}}, p.string());
    std::ifstream in(p);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "epoch,lr,train_loss,train_acc,test_acc");
    CHECK(row.rfind("0,", 0) == 0);
    std::filesystem::remove(p);
  }
}
