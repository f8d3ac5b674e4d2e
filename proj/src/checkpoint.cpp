// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/checkpoint.hpp"

#include "rotdcf/container.hpp"
#include "rotdcf/error.hpp"

namespace rotdcf {

namespace {

constexpr const char* kWhat = "checkpoint";

std::string basis_section(const Network& net) {
  ByteWriter w;
  std::uint32_t count = 0;
  for (const auto& l : net.arch().layers) count += l.type == LayerType::Lift || l.type == LayerType::Joint;
  w.u32(count);
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const auto& l = net.arch().layers[i];
    if (l.type != LayerType::Lift && l.type != LayerType::Joint) continue;
    w.u32(static_cast<std::uint32_t>(i));
    w.u32(static_cast<std::uint32_t>(l.L));
    w.u32(static_cast<std::uint32_t>(l.K));
    w.u32(static_cast<std::uint32_t>(l.type == LayerType::Joint ? l.K_alpha : 1));
    w.u32(static_cast<std::uint32_t>(net.arch().n_theta));
  }
  return w.bytes();
}

}  // namespace

void save_checkpoint(const Network& net, const std::string& path, const std::map<std::string, std::string>& meta) {
  Container c;
  c.add("arch", net.arch().to_string());
  c.add("basis", basis_section(net));
  ByteWriter m;
  m.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    m.str(k);
    m.str(v);
  }
  c.add("meta", m.bytes());
  ByteWriter t;
  t.u32(static_cast<std::uint32_t>(net.params().size()));
  for (const auto& p : net.params()) {
    t.str(p.name);
    t.tensor(p.value);
  }
  c.add("tensors", t.bytes());
  c.save(path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, const ArchSpec* expected) {
  const auto c = Container::load(path, kWhat);
  const ArchSpec arch = ArchSpec::parse(c.section("arch"));
  if (expected && !(arch == *expected))
    throw Error(ErrorKind::Config, "checkpoint '" + path + "' holds arch '" + arch.to_string() + "' but '" +
                                       expected->to_string() + "' was requested");
  LoadedCheckpoint out{Network(arch), {}};
  if (c.section("basis") != basis_section(out.net))
    throw Error(ErrorKind::Format, "checkpoint '" + path + "': basis descriptors disagree with the arch");

  ByteReader m(c.section("meta"), "checkpoint meta section");
  for (std::uint32_t n = m.u32(); n > 0; --n) {
    std::string k = m.str();
    out.meta[k] = m.str();
  }
  m.expect_done();

  ByteReader t(c.section("tensors"), "checkpoint tensors section");
  const std::uint32_t n = t.u32();
  if (n != out.net.params().size())
    throw Error(ErrorKind::Format, "checkpoint '" + path + "': " + std::to_string(n) + " tensors, arch needs " +
                                       std::to_string(out.net.params().size()));
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::string name = t.str();
    Tensor v = t.tensor();
    auto& p = out.net.param(name);
    if (v.shape() != p.value.shape())
      throw Error(ErrorKind::Format, "checkpoint '" + path + "': tensor '" + name + "' is " +
                                         shape_to_string(v.shape()) + ", expected " + shape_to_string(p.value.shape()));
    p.value = std::move(v);
  }
  t.expect_done();
  return out;
}

}  // namespace rotdcf
