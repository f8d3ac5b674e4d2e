// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rotdcf/arch.hpp"
#include "rotdcf/basis.hpp"
#include "rotdcf/filters.hpp"
#include "rotdcf/tensor.hpp"

namespace rotdcf {

/// One trainable tensor with its gradient accumulator.
///   lift       coeffs  M_prev x M x K
///   joint      coeffs  M_prev x M x K x K_alpha
///   conv_plain weight  M x M_prev x L x L
///   dense      weight  n_in x n_out
///   groupnorm  gamma, beta  C
/// plus a bias of length M / n_out for every conv and dense layer.
struct Param {
  std::string name;
  std::size_t layer = 0;
  Tensor value;
  Tensor grad;
};

/// Activations recorded by a forward pass, consumed by backward().
/// outputs[i] is the output of layer i (outputs[0] is the input as a
/// B x C x 1 x H x W tensor). Feature maps are B x C x A x H x W, dense
/// activations B x n.
struct Trace {
  std::vector<Tensor> outputs;
  std::vector<Tensor> aux;                        // per-layer cached intermediates
  std::vector<std::vector<std::uint32_t>> argmax;  // maxpool winners
  std::vector<Tensor> inv_std;                    // groupnorm
};

struct ConvPlan;

class Network {
 public:
  /// Builds bases for every decomposed layer. Throws Error(Basis) when a K
  /// is not realisable on the layer's grid.
  explicit Network(ArchSpec arch);

  const ArchSpec& arch() const { return arch_; }
  /// Per-layer output shapes without the batch axis.
  const std::vector<Shape>& shapes() const { return shapes_; }
  std::size_t num_layers() const { return arch_.layers.size(); }

  /// Uniform(-s, s) coefficients with s = sqrt(3 / fan_in); zero biases,
  /// unit groupnorm scale.
  void init(std::uint64_t seed);

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param& param(const std::string& name);
  const Param& param(const std::string& name) const;
  std::size_t param_count() const;
  void zero_grad();

  /// Coefficients of a lift/joint layer as a FilterCoeffs (copy).
  FilterCoeffs coeffs(std::size_t layer) const;
  void set_coeffs(std::size_t layer, const FilterCoeffs& c);
  const SpatialBasisSet& spatial_basis(std::size_t layer) const;
  /// Angular basis of a joint layer; nullptr otherwise.
  const AngularBasisSet* angular_basis(std::size_t layer) const;

  /// Forward through every layer except softmax_loss. x is B x C x H x W or
  /// B x C x 1 x H x W. With `trace` the intermediates needed by backward()
  /// are kept.
  Tensor forward(const Tensor& x, Trace* trace = nullptr) const;
  /// Forward of layer i alone on a batch shaped like that layer's input.
  Tensor apply_layer(std::size_t i, const Tensor& x) const;
  /// Outputs of layers 0..upto (inclusive).
  std::vector<Tensor> forward_all(const Tensor& x, std::size_t upto) const;

  /// Accumulates d loss / d params into Param::grad given the upstream
  /// gradient of the final forward() output. Returns d loss / d input when
  /// `input_grad` is set.
  void backward(const Trace& trace, const Tensor& dout, Tensor* input_grad = nullptr);

  /// Mean softmax cross-entropy of B x n logits; writes d loss / d logits.
  static double softmax_loss(const Tensor& logits, std::span<const int> labels, Tensor* dlogits);

  /// Treat relu layers as the identity (for exact-linearity checks).
  void set_linear_activation(bool on) { linear_ = on; }
  bool linear_activation() const { return linear_; }

  /// Indices of the layer whose output is the block output of each conv
  /// layer: the last consecutive relu/groupnorm after it.
  std::vector<std::size_t> block_outputs() const;

 private:
  void build();
  void forward_layer(std::size_t i, const Tensor& xin, Tensor& y, Trace& t) const;
  std::size_t first_param(std::size_t layer) const { return param_index_[layer]; }

  ArchSpec arch_;
  std::vector<Shape> shapes_;
  std::vector<Param> params_;
  std::vector<std::size_t> param_index_;
  std::vector<std::shared_ptr<const ConvPlan>> plans_;
  bool linear_ = false;
};

}  // namespace rotdcf
