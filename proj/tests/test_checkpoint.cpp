// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rotdcf/checkpoint.hpp"
#include "rotdcf/container.hpp"
#include "rotdcf/error.hpp"
#include "rotdcf/training.hpp"

using namespace rotdcf;
namespace fs = std::filesystem;

namespace {

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name) : path(fs::temp_directory_path() / name) {}
  ~TempFile() { fs::remove(path); }
  std::string str() const { return path.string(); }
};

Network trained_net(int M = 4) {
  PresetOptions po;
  po.M = M;
  Network net(make_preset("conv3-rotdcf", po));
  net.init(5);
  // A few bias values off zero so every tensor carries information.
  for (auto& p : net.params())
    for (std::size_t i = 0; i < p.value.size(); i += 7) p.value[i] += 0.01 * static_cast<double>(i % 5);
  return net;
}

ErrorKind kind_of(const std::function<void()>& f, std::string* msg = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (msg) *msg = e.what();
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Domain;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit exact") {
    TempFile f("rotdcf_ckpt_roundtrip.rdcf");
    const Network net = trained_net();
    save_checkpoint(net, f.str(), {{"epochs", "3"}, {"seed", "5"}});
    const auto loaded = load_checkpoint(f.str(), &net.arch());
    CHECK(loaded.meta.at("epochs") == "3");
    REQUIRE(loaded.net.params().size() == net.params().size());
    for (std::size_t i = 0; i < net.params().size(); ++i) {
      const auto& a = net.params()[i];
      const auto& b = loaded.net.params()[i];
      CHECK(a.name == b.name);
      REQUIRE(a.value.shape() == b.value.shape());
      for (std::size_t k = 0; k < a.value.size(); ++k) REQUIRE(a.value[k] == b.value[k]);
    }
    const Dataset d = make_synthetic(50, 2);
    CHECK(evaluate(loaded.net, d) == evaluate(net, d));
  }

  TEST_CASE("truncated file names the damaged section") {
    TempFile f("rotdcf_ckpt_trunc.rdcf");
    save_checkpoint(trained_net(), f.str());
    const auto size = fs::file_size(f.path);
    fs::resize_file(f.path, size - 100);
    std::string msg;
    CHECK(kind_of([&] { load_checkpoint(f.str()); }, &msg) == ErrorKind::Format);
    CHECK(msg.find("tensors") != std::string::npos);
  }

  TEST_CASE("missing section") {
    TempFile f("rotdcf_ckpt_missing.rdcf");
    Container c;
    c.add("arch", make_preset("conv3-rotdcf").to_string());
    c.save(f.str());
    std::string msg;
    CHECK(kind_of([&] { load_checkpoint(f.str()); }, &msg) == ErrorKind::Format);
    CHECK(msg.find("basis") != std::string::npos);
  }

  TEST_CASE("arch mismatch is rejected") {
    TempFile f("rotdcf_ckpt_arch.rdcf");
    save_checkpoint(trained_net(), f.str());
    const ArchSpec other = make_preset("conv3-cnn");
    CHECK(kind_of([&] { load_checkpoint(f.str(), &other); }) == ErrorKind::Config);
  }

  TEST_CASE("bad magic and version") {
    TempFile f("rotdcf_ckpt_magic.rdcf");
    std::ofstream(f.path, std::ios::binary) << "RDCX\x01\x00";
    std::string msg;
    CHECK(kind_of([&] { load_checkpoint(f.str()); }, &msg) == ErrorKind::Format);
    CHECK(msg.find("magic") != std::string::npos);
    std::ofstream(f.path, std::ios::binary) << std::string("RDCF\x09\x00", 6);
    CHECK(kind_of([&] { load_checkpoint(f.str()); }, &msg) == ErrorKind::Format);
    CHECK(msg.find("version") != std::string::npos);
    CHECK(kind_of([] { load_checkpoint("/nonexistent/ckpt.rdcf"); }) == ErrorKind::Io);
  }

  TEST_CASE("tensor shape mismatch is rejected") {
    TempFile a("rotdcf_ckpt_shape_a.rdcf"), b("rotdcf_ckpt_shape_b.rdcf");
    save_checkpoint(trained_net(4), a.str());
    save_checkpoint(trained_net(6), b.str());
    // Arch and basis of the first file, tensors of the second.
    const auto ca = Container::load(a.str(), "checkpoint"), cb = Container::load(b.str(), "checkpoint");
    Container mixed;
    for (const char* s : {"arch", "basis", "meta"}) mixed.add(s, ca.section(s));
    mixed.add("tensors", cb.section("tensors"));
    mixed.save(a.str());
    std::string msg;
    CHECK(kind_of([&] { load_checkpoint(a.str()); }, &msg) == ErrorKind::Format);
    CHECK(msg.find("expected") != std::string::npos);
  }
}
