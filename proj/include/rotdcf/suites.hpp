// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "rotdcf/verify.hpp"

namespace rotdcf {

/// Property suites shared by `rotdcf verify` and the acceptance binary.
/// Tolerances are calibration constants, measured on this implementation.
struct SuiteOptions {
  std::uint64_t seed = 1;
  int nets = 3;             // random networks per equivariance / alignment run
  int pairs = 100;          // non-expansiveness input pairs
  int filter_draws = 50;
  int stability_seeds = 20;
  int grad_samples = 200;

  double grid_tol = 1e-3;     // grid-exact rotations
  double interp_tol = 5e-2;   // interpolated rotations
  double control_min = 0.2;   // plain CNN must exceed this
  double slack = 0.05;        // epsilon of the non-expansiveness and filter bounds
  double grad_tol = 1e-4;
  double linear_grad_tol = 1e-9;
  double tau_grad = 0.1;      // |grad tau|_inf of the stability deformations

  // Network under test (conv3 family).
  int n_theta = 8;
  int K = 3;
  int K_alpha = 5;

  void validate() const;
  nlohmann::json to_json() const;
  static SuiteOptions from_json(const nlohmann::json& j);
};

/// Sum of a few broad Gaussian blobs near the centre: smooth enough that
/// bilinear resampling error stays small, asymmetric enough that rotations
/// matter.
Tensor smooth_test_image(std::uint64_t seed, std::size_t side = 28);

/// Random conv3-rotdcf against the plain control: grid-exact and
/// interpolated rotations at every convolution block. Blocks whose crop is
/// degenerate are recorded as skipped.
std::vector<CheckRecord> equivariance_suite(const SuiteOptions& o);
/// Finite differences on small networks covering every layer type, plus the
/// linear variant.
std::vector<CheckRecord> gradient_suite(const SuiteOptions& o);
/// Non-expansiveness (with the A_l gate), filter bounds and the deformation
/// stability bound (with the A3 gate).
std::vector<CheckRecord> stability_suite(const SuiteOptions& o);
/// Circularly aligned crop means of an image and its rotations.
std::vector<CheckRecord> alignment_suite(const SuiteOptions& o);

/// Records that were evaluated (status other than "skipped").
bool counted(const CheckRecord& r);
bool all_pass(const std::vector<CheckRecord>& records);

nlohmann::json to_json(const CheckRecord& r);
/// {"options": ..., "checks": [...], "passed": n, "failed": n, "skipped": n, "all_pass": bool}
nlohmann::json suite_report(const std::vector<CheckRecord>& records, const SuiteOptions& o);

}  // namespace rotdcf
