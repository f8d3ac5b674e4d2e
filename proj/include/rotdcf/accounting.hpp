// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rotdcf/arch.hpp"

namespace rotdcf {

/// Flop estimate of one convolution. For decomposed layers the three stages
/// are the angular transform, the basis convolutions and the coefficient
/// contraction; `total` is the closed form and equals their sum.
struct FlopEstimate {
  double angular = 0.0;
  double basis = 0.0;
  double contraction = 0.0;
  double total = 0.0;
  bool estimate = false;  // asymptotic figure (non-basis equivariant layers)
};

struct LayerCost {
  std::size_t layer = 0;  // index into ArchSpec::layers
  std::string kind;       // "conv", "lift", "joint"
  int W = 0;              // output side length
  int M_in = 0, M_out = 0;
  std::int64_t weights = 0;
  std::int64_t biases = 0;
  std::int64_t params() const { return weights + biases; }
  FlopEstimate flops;
};

struct CostReport {
  std::string name;
  Variant variant = Variant::Cnn;
  std::vector<LayerCost> layers;
  std::int64_t total_params = 0;  // convolutional layers only
  double total_flops = 0.0;
  std::int64_t head_params = 0;   // dense layers, reported separately
  std::optional<double> ratio;    // total_params / baseline total_params
  std::string baseline;
};

/// Exact counts for the convolutional layers of `arch`, read as `variant`:
/// regular L^2 M' M, lift K M' M, joint K K_alpha M' M, non-basis joint
/// L^2 N_theta M' M; one bias per output channel. Throws Error(Config) when
/// the layer types of `arch` cannot be read as `variant` or a decomposed
/// layer lacks K / K_alpha.
CostReport param_count(const ArchSpec& arch, Variant variant);

/// Closed forms, evaluated exactly as printed:
///   regular    M' M W^2 (1 + 2 L^2)
///   rotdcf     2 M' W^2 K_alpha (N_theta + L^2 K + M N_theta K)
///   non-basis  2 M' M W^2 L^2 N_theta^2 (estimate)
/// A lift layer has no angular axis on its input: 2 M' W^2 (L^2 K + M N_theta K),
/// and 2 M' M W^2 L^2 N_theta without a basis.
FlopEstimate flops_regular(double M_in, double M_out, double W, double L);
FlopEstimate flops_rotdcf(double M_in, double M_out, double W, double L, double K, double K_alpha, double n_theta);
FlopEstimate flops_rotdcf_lift(double M_in, double M_out, double W, double L, double K, double n_theta);
FlopEstimate flops_nobasis(double M_in, double M_out, double W, double L, double n_theta);
FlopEstimate flops_nobasis_lift(double M_in, double M_out, double W, double L, double n_theta);

void set_baseline(CostReport& r, const CostReport& baseline);

/// One row of the parameter table.
struct TableRow {
  std::string family;  // conv3 or vgg16
  Variant variant;
  PresetOptions opts;
  std::string label() const;
};
/// The reference configurations for `family`, in
/// table order. With `variant` set, only rows of that variant; rot-nobasis
/// rows mirror the rotdcf channel widths.
std::vector<TableRow> table_rows(const std::string& family, std::optional<Variant> variant = {});

/// Counts every row; ratios are against the family's cnn row.
std::vector<CostReport> count_table(const std::string& family, std::optional<Variant> variant = {});

/// `n` with `digits` significant digits, as 9.680e3.
std::string format_sig(double n, int digits = 4);

nlohmann::json to_json(const CostReport& r);
/// Frozen columns: name,variant,layer,kind,W,M_in,M_out,weights,biases,params,flops,flops_estimate
void write_cost_csv(std::ostream& os, const std::vector<CostReport>& reports);
/// The table printed by `count`: one line per report with total, ratio and flops.
void print_cost_table(std::ostream& os, const std::vector<CostReport>& reports);

}  // namespace rotdcf
