// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rotdcf/tensor.hpp"

namespace rotdcf {

/// Little-endian byte sink.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void str(const std::string& s);  // u32 length + bytes
  void tensor(const Tensor& t);    // u32 rank, u64 dims, f64 values
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

/// Bounds-checked little-endian reader; running past the end throws
/// Error(Format) naming `what`.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  std::string str();
  Tensor tensor();
  bool done() const { return pos_ == bytes_.size(); }
  void expect_done() const;

 private:
  const char* take(std::size_t n);
  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

/// File layout: "RDCF", u16 version, then sections of
///   u32 name length, name, u64 payload length, payload.
class Container {
 public:
  static constexpr std::uint16_t kVersion = 1;

  void add(std::string name, std::string payload) { sections_.emplace_back(std::move(name), std::move(payload)); }
  /// Payload of a named section; throws Error(Format) "missing section".
  const std::string& section(const std::string& name) const;
  bool has(const std::string& name) const;

  void save(const std::string& path) const;
  /// `what` names the file kind in error messages ("checkpoint", ...).
  static Container load(const std::string& path, const std::string& what);

 private:
  std::string what_ = "container";
  std::vector<std::pair<std::string, std::string>> sections_;
};

}  // namespace rotdcf
