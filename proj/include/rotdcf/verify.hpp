// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rotdcf/network.hpp"
#include "rotdcf/transforms.hpp"

namespace rotdcf {

/// One verification outcome. `status` is "ok", or "hypothesis violated" when
/// a precondition of the checked statement does not hold (then `pass` is
/// false and the bound was not asserted).
struct CheckRecord {
  std::string check;
  nlohmann::json params = nlohmann::json::object();
  double lhs = 0.0;
  double rhs = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string status = "ok";
};

/// Cumulative receptive-field radius of layer `layer`'s output, in pixels of
/// that layer's grid, rounded up.
int receptive_margin(const Network& net, std::size_t layer);

/// True when t is a multiple of pi/2, i.e. the rotation permutes a square
/// grid exactly.
bool grid_exact_angle(double t);

/// |x^l[D_rho x] - T_rho x^l[x]| / |x^l[x]| over the interior crop. The
/// default margin is 0 for grid-exact angles (zero padding is itself
/// rotation symmetric then) and receptive_margin otherwise. Networks
/// without an angular axis are compared after the spatial rotation alone.
/// Throws Error(Verification) for a degenerate crop.
double equivariance_error(const Network& net, const Tensor& image, double t, std::size_t layer,
                          std::optional<int> margin = {});

struct ZeroResponse {
  std::vector<Tensor> outputs;       // output of every layer for a zero input
  std::vector<double> interior_std;  // per layer: largest std over (alpha, u) of one channel, interior only (-1 if no crop)
};
ZeroResponse zero_input_response(const Network& net, std::size_t batch = 1);

/// Replaces every lift/joint layer's coefficients by their A_l-rescaled copy.
void rescale_network(Network& net);

struct NonexpansiveResult {
  std::vector<std::size_t> layers;   // block output index per conv layer
  std::vector<double> layer_ratio;   // |y1 - y2| / |block input difference|
  std::vector<double> total_ratio;   // |y1 - y2| / |x1 - x2|
  std::vector<double> centered_ratio;  // |x_c^l| / |x_c^(l-1)|, pointwise centring
  double worst = 0.0;
  double worst_centered = 0.0;
  double max_Al = 0.0;          // largest A_l over the decomposed layers
  bool hypothesis_ok = true;    // every A_l <= 1 (up to rounding)
  bool pass = false;            // hypothesis holds and both worst ratios <= 1 + eps
};
inline constexpr double kNonexpansiveSlack = 0.05;
/// Non-expansiveness on one input pair, feature_norm everywhere. Ratios are 0
/// when the denominator vanishes. A layer with A_l > 1 is reported as a
/// violated hypothesis and the bound is not asserted.
NonexpansiveResult nonexpansiveness(const Network& net, const Tensor& x1, const Tensor& x2);

struct StabilityResult {
  double lhs = 0.0;
  double rhs = 0.0;
  bool hypothesis_ok = true;
  std::vector<double> layer_lhs;  // per conv block, intermediate relation
  std::vector<double> layer_rhs;
  bool pass = false;
};
inline constexpr double kC1 = 4.0;
inline constexpr double kC2 = 2.0;
/// Deformation stability bound for D_rho o D_tau with rho a rotation by 2 pi s / N_theta about
/// the centre; also the per-layer relation
///   |x^l[D_rho D_tau x] - T_rho D_tau x^l[x]| <= 2 c1 l |grad tau| |x|.
/// |tau|_inf and 2^j are both in input pixels.
StabilityResult stability_bound(const Network& net, const Tensor& image, int s, const DeformationField& tau);

struct GradCheckOptions {
  std::size_t samples = 200;
  double step = 1e-4;  // balances truncation against rounding in double precision
  /// 2: central difference, 4: five-point stencil.
  int stencil = 2;
  /// Loss is the mean softmax cross-entropy, or with `linear_objective` the
  /// fixed random functional sum_k r_k logits_k.
  bool linear_objective = false;
  std::uint64_t seed = 1;
  double floor = 1e-7;  // denominators below this count as this
};
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t compared = 0;
  std::size_t excluded = 0;  // perturbation crossed a relu or max-pool kink
  std::vector<std::string> covered;  // parameter tensors with at least one comparison
};
/// Analytic vs finite-difference gradients on a random parameter subset,
/// drawn round robin over every parameter tensor.
GradCheckResult gradient_check(Network& net, const Tensor& x, std::span<const int> labels,
                               const GradCheckOptions& opts = {});

/// Rolls each sample's alpha axis so the index with the largest sum of |f|
/// over (lambda, u) lands at 0; ties go to the smallest index. `shifts`
/// receives that index per sample (the map is rolled back by it).
Tensor circular_align(const Tensor& f, std::vector<int>* shifts = nullptr);
/// Spatial mean of a B x C x A x H x W map over the interior crop, kept as
/// B x C x A x 1 x 1.
Tensor spatial_mean(const Tensor& f, int margin = 0);

/// Rotation-invariant descriptor test: the crop means of x^l[x] and of
/// x^l[D_rho x], rho = 2 pi s / N_theta, agree after circular_align. Returns
/// their relative difference. When several alpha indices of the rotated
/// descriptor carry energy within `tie_band` (relative) of the largest, the
/// reference is ambiguous and the best of those alignments is returned.
double alignment_error(const Network& net, const Tensor& image, int s, std::size_t layer, double tie_band = 0.0);

/// Filter bounds on one filter layer: B, C and 2^j D against A_l, with the given
/// slack factor.
CheckRecord filter_bound_check(const FilterCoeffs& c, const SpatialBasisSet& sp, const AngularBasisSet& an,
                               double slack, int quad_factor = 8);

}  // namespace rotdcf
