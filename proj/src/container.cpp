// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rotdcf/error.hpp"

namespace rotdcf {

namespace {

constexpr char kMagic[4] = {'R', 'D', 'C', 'F'};
// Sanity limit on a tensor rank read from disk.
constexpr std::uint32_t kMaxRank = 16;

}  // namespace

void ByteWriter::u16(std::uint16_t v) {
  for (int b = 0; b < 2; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
}
void ByteWriter::u32(std::uint32_t v) {
  for (int b = 0; b < 4; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
}
void ByteWriter::u64(std::uint64_t v) {
  for (int b = 0; b < 8; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
}
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_ += s;
}
void ByteWriter::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) u64(d);
  for (double v : t.values()) f64(v);
}

const char* ByteReader::take(std::size_t n) {
  if (n > bytes_.size() - pos_) throw Error(ErrorKind::Format, what_ + ": unexpected end of data");
  const char* p = bytes_.data() + pos_;
  pos_ += n;
  return p;
}
std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(*take(1)); }
std::uint16_t ByteReader::u16() {
  const auto* p = reinterpret_cast<const unsigned char*>(take(2));
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t ByteReader::u32() {
  const auto* p = reinterpret_cast<const unsigned char*>(take(4));
  std::uint32_t v = 0;
  for (int b = 3; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}
std::uint64_t ByteReader::u64() {
  const auto* p = reinterpret_cast<const unsigned char*>(take(8));
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}
double ByteReader::f64() { return std::bit_cast<double>(u64()); }
std::string ByteReader::str() {
  const std::uint32_t n = u32();
  return std::string(take(n), n);
}
Tensor ByteReader::tensor() {
  const std::uint32_t rank = u32();
  if (rank > kMaxRank) throw Error(ErrorKind::Format, what_ + ": tensor rank " + std::to_string(rank) + " is implausible");
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = u64();
    if (d != 0 && n > (bytes_.size() - pos_) / 8 / d)
      throw Error(ErrorKind::Format, what_ + ": tensor payload shorter than its shape header");
    n *= d;
  }
  Tensor t(shape);
  for (double& v : t.values()) v = f64();
  return t;
}
void ByteReader::expect_done() const {
  if (!done()) throw Error(ErrorKind::Format, what_ + ": " + std::to_string(bytes_.size() - pos_) + " trailing bytes");
}

const std::string& Container::section(const std::string& name) const {
  for (const auto& [n, p] : sections_)
    if (n == name) return p;
  throw Error(ErrorKind::Format, what_ + ": missing section '" + name + "'");
}

bool Container::has(const std::string& name) const {
  for (const auto& s : sections_)
    if (s.first == name) return true;
  return false;
}

void Container::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  ByteWriter head;
  for (char c : kMagic) head.u8(static_cast<std::uint8_t>(c));
  head.u16(kVersion);
  out.write(head.bytes().data(), static_cast<std::streamsize>(head.bytes().size()));
  for (const auto& [name, payload] : sections_) {
    ByteWriter s;
    s.str(name);
    s.u64(payload.size());
    out.write(s.bytes().data(), static_cast<std::streamsize>(s.bytes().size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  if (!out) throw Error(ErrorKind::Io, "write to '" + path + "' failed");
}

Container Container::load(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + what + " '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorKind::Format, what + " '" + path + "': bad magic (expected RDCF)");
  ByteReader r(bytes, what + " header");
  r.u32();
  const std::uint16_t version = r.u16();
  if (version != kVersion)
    throw Error(ErrorKind::Format, what + " '" + path + "': unsupported version " + std::to_string(version));
  Container c;
  c.what_ = what + " '" + path + "'";
  std::size_t pos = 6;
  while (pos < bytes.size()) {
    ByteReader h(std::string_view(bytes).substr(pos), c.what_ + ": section header");
    const std::string name = h.str();
    const std::uint64_t len = h.u64();
    const std::size_t start = pos + name.size() + 12;
    if (len > bytes.size() - start)
      throw Error(ErrorKind::Format, c.what_ + ": section '" + name + "' is truncated (" +
                                         std::to_string(bytes.size() - start) + " of " + std::to_string(len) + " bytes)");
    c.sections_.emplace_back(name, bytes.substr(start, len));
    pos = start + len;
  }
  return c;
}

}  // namespace rotdcf
