// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rotdcf/tensor.hpp"

namespace rotdcf {

enum class Provenance : std::uint8_t { Idx, RotMnist, Synthetic };
std::string to_string(Provenance p);

/// N x 1 x 28 x 28 images in [0, 1] with labels in [0, 10).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  Provenance provenance = Provenance::Synthetic;

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
  /// Items [begin, begin + count).
  Dataset slice(std::size_t begin, std::size_t count) const;
  /// Gathers a batch of images and labels.
  void gather(std::span<const std::size_t> idx, Tensor& x, std::vector<int>& y) const;
};

/// IDX files as distributed with MNIST (magic 0x803 images, 0x801 labels).
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
/// MNIST from a directory holding the four standard ubyte files.
Dataset load_mnist_dir(const std::string& dir, bool train);

/// Rotation angles used by make_rotmnist: uniform in [-max_rot, max_rot], or
/// uniform in [0, 2 pi) when max_rot is 2 pi (full circle).
std::vector<double> rotation_angles(std::size_t n, double max_rot, std::uint64_t seed);
Dataset make_rotmnist(const Dataset& base, double max_rot, std::uint64_t seed);

/// Ten classes of stroke glyphs drawn with 1-pixel antialiasing, random
/// jitter in position, size, slant and stroke width. Labels are assigned round
/// robin. No class is a rotation of another.
Dataset make_synthetic(std::size_t n, std::uint64_t seed);

void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace rotdcf
