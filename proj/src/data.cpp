// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "rotdcf/container.hpp"
#include "rotdcf/error.hpp"
#include "rotdcf/transforms.hpp"

namespace rotdcf {

namespace {

constexpr double kPi = std::numbers::pi;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::string& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(b[at + i]);
  return v;
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

// Checks magic and header length; returns the dimension sizes.
std::vector<std::uint32_t> idx_header(const std::string& b, const std::string& path, std::uint32_t magic, int ndims) {
  if (b.size() < 4) throw Error(ErrorKind::Format, "'" + path + "': file too short for an IDX header");
  const std::uint32_t got = be32(b, 0);
  if (got != magic)
    throw Error(ErrorKind::Format, "'" + path + "': bad IDX magic " + hex(got) + " (expected " + hex(magic) + ")");
  if (b.size() < 4 + 4u * ndims) throw Error(ErrorKind::Format, "'" + path + "': truncated IDX header");
  std::vector<std::uint32_t> dims(ndims);
  for (int d = 0; d < ndims; ++d) dims[d] = be32(b, 4 + 4 * d);
  return dims;
}

// ---- synthetic glyphs -------------------------------------------------------

struct Stroke {
  bool arc = false;
  double x0, y0, x1, y1;  // segment ends, or arc centre / (radius, unused)
  double a0 = 0, a1 = 0;  // arc angle range, counter-clockwise from a0
};

Stroke seg(double x0, double y0, double x1, double y1) { return {false, x0, y0, x1, y1}; }
Stroke arc(double cx, double cy, double r, double a0_deg, double a1_deg) {
  return {true, cx, cy, r, 0.0, a0_deg * kPi / 180, a1_deg * kPi / 180};
}

// Glyph coordinates: x right, y down, unit = glyph radius.
const std::array<std::vector<Stroke>, 10>& glyphs() {
  static const std::array<std::vector<Stroke>, 10> g = {{
      {arc(0, 0, 0.8, 0, 360)},                                                       // ring
      {seg(0, -0.9, 0, 0.9)},                                                         // bar
      {seg(-0.8, 0, 0.8, 0), seg(0, -0.8, 0, 0.8)},                                   // plus
      {seg(-0.8, -0.8, 0.8, -0.8), seg(0, -0.8, 0, 0.9)},                             // tee
      {seg(-0.5, -0.9, -0.5, 0.8), seg(-0.5, 0.8, 0.6, 0.8)},                         // corner
      {arc(0, 0, 0.8, 45, 315)},                                                      // open arc
      {arc(0, 0.45, 0.42, 0, 360), seg(-0.42, 0.45, 0.15, -0.9)},                     // loop with a tail
      {seg(0, -0.85, 0.8, 0.65), seg(0.8, 0.65, -0.8, 0.65), seg(-0.8, 0.65, 0, -0.85)},  // triangle
      {arc(0, -0.45, 0.4, 0, 360), arc(0, 0.45, 0.4, 0, 360)},                        // two loops
      {seg(-0.7, -0.7, 0.7, -0.7), seg(0.7, -0.7, 0.7, 0.7), seg(0.7, 0.7, -0.7, 0.7),
       seg(-0.7, 0.7, -0.7, -0.7)},  // square
  }};
  return g;
}

double dist_segment(double px, double py, const Stroke& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  const double t = len2 > 0 ? std::clamp(((px - s.x0) * dx + (py - s.y0) * dy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(px - s.x0 - t * dx, py - s.y0 - t * dy);
}

double dist_arc(double px, double py, const Stroke& s) {
  const double r = s.x1;
  const double ang = std::atan2(py - s.y0, px - s.x0);
  const double span = s.a1 - s.a0;
  double rel = std::fmod(ang - s.a0, 2 * kPi);
  if (rel < 0) rel += 2 * kPi;
  if (rel <= span) return std::abs(std::hypot(px - s.x0, py - s.y0) - r);
  const double e0 = std::hypot(px - s.x0 - r * std::cos(s.a0), py - s.y0 - r * std::sin(s.a0));
  const double e1 = std::hypot(px - s.x0 - r * std::cos(s.a1), py - s.y0 - r * std::sin(s.a1));
  return std::min(e0, e1);
}

void draw_glyph(int cls, std::mt19937_64& rng, double* img, int H, int W) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double R = 7.0 + 2.0 * U(rng);
  const double cx = (W - 1) / 2.0 + 4.0 * U(rng) - 2.0, cy = (H - 1) / 2.0 + 4.0 * U(rng) - 2.0;
  const double slant = 0.4 * U(rng) - 0.2;
  const double aspect = 0.85 + 0.3 * U(rng);
  const double width = 1.6 + 0.8 * U(rng);
  const double c = std::cos(slant), s = std::sin(slant);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const double dx = (j - cx) / R, dy = (i - cy) / R;
      const double gx = (c * dx + s * dy) / aspect, gy = -s * dx + c * dy;
      double d = 1e9;
      for (const auto& st : glyphs()[cls]) d = std::min(d, st.arc ? dist_arc(gx, gy, st) : dist_segment(gx, gy, st));
      img[i * W + j] = std::clamp(width / 2 - d * R + 0.5, 0.0, 1.0);
    }
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Idx: return "idx";
    case Provenance::RotMnist: return "rotmnist";
    case Provenance::Synthetic: return "synthetic";
  }
  return "unknown";
}

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw Error(ErrorKind::Domain, "dataset slice past the end");
  Dataset d;
  d.provenance = provenance;
  const std::size_t per = images.size() / std::max<std::size_t>(size(), 1);
  Shape sh = images.shape();
  sh[0] = count;
  d.images = Tensor(sh);
  std::copy_n(images.data() + begin * per, count * per, d.images.data());
  d.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
  return d;
}

void Dataset::gather(std::span<const std::size_t> idx, Tensor& x, std::vector<int>& y) const {
  const std::size_t per = images.size() / size();
  Shape sh = images.shape();
  sh[0] = idx.size();
  if (x.shape() != sh) x = Tensor(sh);
  y.resize(idx.size());
  for (std::size_t b = 0; b < idx.size(); ++b) {
    std::copy_n(images.data() + idx[b] * per, per, x.data() + b * per);
    y[b] = labels[idx[b]];
  }
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const std::string ib = read_file(images_path), lb = read_file(labels_path);
  const auto idims = idx_header(ib, images_path, 0x00000803, 3);
  const auto ldims = idx_header(lb, labels_path, 0x00000801, 1);
  const std::size_t n = idims[0], rows = idims[1], cols = idims[2];
  if (ib.size() - 16 < n * rows * cols)
    throw Error(ErrorKind::Format, "'" + images_path + "': truncated payload (" + std::to_string(ib.size() - 16) +
                                       " bytes for " + std::to_string(n) + " images of " + std::to_string(rows) + "x" +
                                       std::to_string(cols) + ")");
  if (lb.size() - 8 < ldims[0])
    throw Error(ErrorKind::Format, "'" + labels_path + "': truncated payload (" + std::to_string(lb.size() - 8) +
                                       " bytes for " + std::to_string(ldims[0]) + " labels)");
  if (ldims[0] != n)
    throw Error(ErrorKind::Format, "count mismatch: " + std::to_string(n) + " images but " + std::to_string(ldims[0]) +
                                       " labels");
  Dataset d;
  d.provenance = Provenance::Idx;
  d.images = Tensor({n, 1, rows, cols});
  for (std::size_t k = 0; k < n * rows * cols; ++k) d.images[k] = static_cast<unsigned char>(ib[16 + k]) / 255.0;
  d.labels.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    d.labels[k] = static_cast<unsigned char>(lb[8 + k]);
    if (d.labels[k] > 9)
      throw Error(ErrorKind::Format, "'" + labels_path + "': label " + std::to_string(d.labels[k]) + " out of range");
  }
  return d;
}

Dataset load_mnist_dir(const std::string& dir, bool train) {
  const std::string prefix = train ? "train" : "t10k";
  const auto p = std::filesystem::path(dir);
  const auto images = p / (prefix + "-images-idx3-ubyte"), labels = p / (prefix + "-labels-idx1-ubyte");
  if (!std::filesystem::exists(images) || !std::filesystem::exists(labels))
    throw Error(ErrorKind::Io, "MNIST files " + images.string() + " / " + labels.string() + " not found");
  return load_idx(images.string(), labels.string());
}

std::vector<double> rotation_angles(std::size_t n, double max_rot, std::uint64_t seed) {
  if (!(max_rot >= 0.0 && max_rot <= 2 * kPi + 1e-12))
    throw Error(ErrorKind::Domain, "max_rot must lie in [0, 2pi], got " + std::to_string(max_rot));
  std::mt19937_64 rng(seed);
  const bool full = max_rot >= 2 * kPi - 1e-12;
  std::uniform_real_distribution<double> U(full ? 0.0 : -max_rot, full ? 2 * kPi : max_rot);
  std::vector<double> a(n);
  for (auto& v : a) v = max_rot == 0.0 ? 0.0 : U(rng);
  return a;
}

Dataset make_rotmnist(const Dataset& base, double max_rot, std::uint64_t seed) {
  const auto angles = rotation_angles(base.size(), max_rot, seed);
  Dataset d = base;
  d.provenance = Provenance::RotMnist;
  if (max_rot == 0.0) return d;
  const std::size_t per = base.images.size() / std::max<std::size_t>(base.size(), 1);
  const Shape one{1, base.images.dim(1), base.height(), base.width()};
  for (std::size_t k = 0; k < base.size(); ++k) {
    Tensor img(one, std::vector<double>(base.images.data() + k * per, base.images.data() + (k + 1) * per));
    const auto r = rotate_image(img, angles[k]);
    std::copy_n(r.data(), per, d.images.data() + k * per);
  }
  return d;
}

Dataset make_synthetic(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorKind::Domain, "synthetic dataset needs at least one item");
  constexpr int H = 28, W = 28;
  Dataset d;
  d.provenance = Provenance::Synthetic;
  d.images = Tensor({n, 1, H, W});
  d.labels.resize(n);
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < n; ++k) {
    d.labels[k] = static_cast<int>(k % 10);
    draw_glyph(d.labels[k], rng, d.images.data() + k * H * W, H, W);
  }
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  Container c;
  ByteWriter meta;
  meta.u8(static_cast<std::uint8_t>(d.provenance));
  meta.u64(d.size());
  c.add("dataset", meta.bytes());
  ByteWriter img;
  img.tensor(d.images);
  c.add("images", img.bytes());
  ByteWriter lab;
  for (int l : d.labels) lab.u8(static_cast<std::uint8_t>(l));
  c.add("labels", lab.bytes());
  c.save(path);
}

Dataset load_dataset(const std::string& path) {
  const auto c = Container::load(path, "dataset cache");
  ByteReader meta(c.section("dataset"), "dataset section");
  Dataset d;
  const auto prov = meta.u8();
  if (prov > 2) throw Error(ErrorKind::Format, "dataset cache: unknown provenance tag " + std::to_string(prov));
  d.provenance = static_cast<Provenance>(prov);
  const std::uint64_t n = meta.u64();
  ByteReader img(c.section("images"), "images section");
  d.images = img.tensor();
  img.expect_done();
  const auto& lab = c.section("labels");
  if (lab.size() != n || d.images.rank() != 4 || d.images.dim(0) != n)
    throw Error(ErrorKind::Format, "dataset cache: " + std::to_string(n) + " items but images " +
                                       shape_to_string(d.images.shape()) + " and " + std::to_string(lab.size()) +
                                       " labels");
  d.labels.resize(n);
  for (std::size_t k = 0; k < n; ++k) d.labels[k] = static_cast<unsigned char>(lab[k]);
  return d;
}

}  // namespace rotdcf
