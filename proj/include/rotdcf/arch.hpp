// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "rotdcf/tensor.hpp"

namespace rotdcf {

enum class LayerType {
  Input,
  Lift,
  Joint,
  ConvPlain,
  Relu,
  AvgPool,
  MaxPool,
  GroupNorm,
  Flatten,
  Dense,
  SoftmaxLoss,
};

/// One layer descriptor. Unused fields stay zero.
///   input(C,H,W)  lift(L,M,K)  joint(L,M,K,Ka)  conv_plain(L,M)
///   avgpool(p)  maxpool(p)  dense(n)
struct LayerSpec {
  LayerType type = LayerType::Relu;
  int L = 0;
  int M = 0;
  int K = 0;
  int K_alpha = 0;
  int p = 0;
  int n = 0;
  int C = 0, H = 0, W = 0;

  std::string to_string() const;
  bool is_conv() const { return type == LayerType::Lift || type == LayerType::Joint || type == LayerType::ConvPlain; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Network description shared by the engine, the accountant and the CLI.
/// Canonical text: "ntheta=8 input(1,28,28) lift(5,8,3) relu avgpool(2) ...".
struct ArchSpec {
  int n_theta = 8;
  std::vector<LayerSpec> layers;

  std::string to_string() const;
  static ArchSpec parse(const std::string& text);
  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

/// Shape flowing out of each layer: features are {C, A, H, W} (A = 1 without
/// an angular axis), dense activations are {n}. Index 0 is the input layer.
/// Throws Error(Config) when the layer sequence is inconsistent.
std::vector<Shape> infer_shapes(const ArchSpec& arch);

/// Cumulative spatial pooling factor in front of each layer.
std::vector<int> pooling_factors(const ArchSpec& arch);

/// Filter radius 2^j in input pixels for each layer ((L-1)/2 times the
/// pooling factor in front of it; 0 for non-convolutional layers).
std::vector<double> filter_radii(const ArchSpec& arch);

enum class Variant { Cnn, Dcf, RotNoBasis, RotDcf };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

struct PresetOptions {
  int M = 0;        // 0 picks the family default
  int K = 0;        // 0 picks 3
  int K_alpha = 0;  // 0 picks 5
  int n_theta = 8;
  bool norm = false;  // groupnorm between each convolution and its relu
  bool gap = false;   // conv3 only: the last pooling averages the whole 7x7 map
};

/// The reference conv3 and vgg16 networks. Accepts
/// "conv3-cnn", "conv3-rotdcf", "vgg16-cnn", "vgg16-rotdcf" as well as the
/// family name plus a variant. The dcf variant uses decomposed filters
/// without rotation (lift layers at n_theta = 1); rot-nobasis shares the
/// rotdcf architecture and only changes how it is counted.
ArchSpec make_preset(const std::string& family, Variant variant, const PresetOptions& opts = {});
ArchSpec make_preset(const std::string& name, const PresetOptions& opts = {});

}  // namespace rotdcf
