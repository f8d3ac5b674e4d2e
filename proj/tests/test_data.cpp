// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "rotdcf/data.hpp"
#include "rotdcf/error.hpp"
#include "rotdcf/transforms.hpp"

using namespace rotdcf;
namespace fs = std::filesystem;

namespace {

void put_be32(std::string& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<char>((v >> s) & 0xff));
}

struct IdxFixture {
  fs::path dir;
  std::string images, labels;

  IdxFixture(std::uint32_t n, std::uint32_t image_magic = 0x803, std::uint32_t label_count = 0, std::size_t cut = 0) {
    dir = fs::temp_directory_path() / ("rotdcf_idx_" + std::to_string(n) + "_" + std::to_string(image_magic) + "_" +
                                       std::to_string(label_count) + "_" + std::to_string(cut));
    fs::create_directories(dir);
    std::string im, lb;
    put_be32(im, image_magic);
    put_be32(im, n);
    put_be32(im, 28);
    put_be32(im, 28);
    for (std::uint32_t k = 0; k < n * 784; ++k) im.push_back(static_cast<char>(k % 256));
    if (cut) im.resize(im.size() - cut);
    put_be32(lb, 0x801);
    put_be32(lb, label_count ? label_count : n);
    for (std::uint32_t k = 0; k < (label_count ? label_count : n); ++k) lb.push_back(static_cast<char>(k % 10));
    images = (dir / "images.idx").string();
    labels = (dir / "labels.idx").string();
    std::ofstream(images, std::ios::binary) << im;
    std::ofstream(labels, std::ios::binary) << lb;
  }
  ~IdxFixture() { fs::remove_all(dir); }
};

template <class F>
std::string error_of(F&& f, ErrorKind kind) {
  try {
    f();
  } catch (const Error& e) {
    CHECK(e.kind() == kind);
    return e.what();
  }
  FAIL("expected an error");
  return {};
}

bool same(const Dataset& a, const Dataset& b) {
  if (a.labels != b.labels || a.images.shape() != b.images.shape()) return false;
  return std::equal(a.images.values().begin(), a.images.values().end(), b.images.values().begin());
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("IDX fixture loads with 1/255 scaling") {
    IdxFixture fx(10);
    const Dataset d = load_idx(fx.images, fx.labels);
    CHECK(d.size() == 10);
    CHECK(d.height() == 28);
    CHECK(d.provenance == Provenance::Idx);
    const auto v = d.images.values();
    CHECK(*std::max_element(v.begin(), v.end()) == 1.0);  // byte 255 maps to 1 exactly
    CHECK(d.images[255] == 1.0);
    CHECK(d.images[1] == doctest::Approx(1.0 / 255));
    CHECK(d.labels[7] == 7);
  }

  TEST_CASE("IDX errors are distinct") {
    {
      IdxFixture fx(3, 0x804);
      const auto msg = error_of([&] { load_idx(fx.images, fx.labels); }, ErrorKind::Format);
      CHECK(msg.find("0x00000804") != std::string::npos);
    }
    {
      IdxFixture fx(3, 0x803, 0, 100);
      const auto msg = error_of([&] { load_idx(fx.images, fx.labels); }, ErrorKind::Format);
      CHECK(msg.find("truncated") != std::string::npos);
    }
    {
      IdxFixture fx(3, 0x803, 4);
      const auto msg = error_of([&] { load_idx(fx.images, fx.labels); }, ErrorKind::Format);
      CHECK(msg.find("count") != std::string::npos);
    }
    error_of([] { load_idx("/nonexistent/images", "/nonexistent/labels"); }, ErrorKind::Io);
  }

  TEST_CASE("rotation angles are uniform on the full circle") {
    const auto a = rotation_angles(10000, 2 * std::numbers::pi, 17);
    constexpr int kBins = 20;
    std::vector<int> hist(kBins);
    for (double t : a) {
      REQUIRE(t >= 0.0);
      REQUIRE(t < 2 * std::numbers::pi);
      ++hist[static_cast<int>(t / (2 * std::numbers::pi) * kBins)];
    }
    double chi2 = 0.0;
    for (int h : hist) chi2 += (h - 500.0) * (h - 500.0) / 500.0;
    CHECK(chi2 < 36.19);  // 99th percentile of chi-square with 19 degrees of freedom
  }

  TEST_CASE("partial rotations stay within plus or minus max_rot") {
    const double m = std::numbers::pi / 3;
    const auto a = rotation_angles(2000, m, 4);
    CHECK(*std::min_element(a.begin(), a.end()) >= -m);
    CHECK(*std::max_element(a.begin(), a.end()) <= m);
    CHECK(*std::min_element(a.begin(), a.end()) < -0.9 * m);
    CHECK_THROWS_AS(rotation_angles(1, 7.0, 1), Error);
  }

  TEST_CASE("rotMNIST generation") {
    const Dataset base = make_synthetic(20, 3);
    CHECK(same(make_rotmnist(base, 0.0, 1), base));
    const Dataset r1 = make_rotmnist(base, 2 * std::numbers::pi, 5), r2 = make_rotmnist(base, 2 * std::numbers::pi, 5);
    CHECK(same(r1, r2));
    CHECK_FALSE(same(r1, base));
    CHECK(r1.provenance == Provenance::RotMnist);
    // Each image is its base image rotated by the drawn angle.
    const auto a = rotation_angles(20, 2 * std::numbers::pi, 5);
    const Tensor one = rotate_image(base.slice(4, 1).images, a[4]);
    for (std::size_t u = 0; u < 784; ++u) CHECK(r1.images[4 * 784 + u] == one[u]);
  }

  TEST_CASE("synthetic glyphs") {
    const Dataset d = make_synthetic(205, 9);
    CHECK(same(d, make_synthetic(205, 9)));
    std::vector<int> count(10);
    for (int y : d.labels) ++count[y];
    CHECK(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()) <= 1);
    const auto v = d.images.values();
    CHECK(*std::min_element(v.begin(), v.end()) >= 0.0);
    CHECK(*std::max_element(v.begin(), v.end()) <= 1.0);
    // Every glyph leaves the border rows dark enough for rotation.
    double border = 0.0;
    for (std::size_t n = 0; n < d.size(); ++n)
      for (int j = 0; j < 28; ++j) border = std::max(border, d.images(n, 0, 0, j));
    CHECK(border < 0.5);
  }

  TEST_CASE("cache files round-trip") {
    const fs::path p = fs::temp_directory_path() / "rotdcf_cache_test.rdcf";
    const Dataset d = make_rotmnist(make_synthetic(30, 1), 1.0, 2);
    save_dataset(d, p.string());
    const Dataset back = load_dataset(p.string());
    CHECK(same(back, d));
    CHECK(back.provenance == Provenance::RotMnist);
    fs::remove(p);
  }

  TEST_CASE("slices and batches") {
    const Dataset d = make_synthetic(12, 2);
    const Dataset s = d.slice(3, 4);
    CHECK(s.size() == 4);
    CHECK(s.labels[0] == d.labels[3]);
    Tensor x;
    std::vector<int> y;
    const std::vector<std::size_t> idx{5, 1};
    d.gather(idx, x, y);
    CHECK(x.dim(0) == 2);
    CHECK(y == std::vector<int>{d.labels[5], d.labels[1]});
    CHECK(x(1, 0, 14, 14) == d.images(1, 0, 14, 14));
  }
}
