// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rotdcf/arch.hpp"
#include "rotdcf/data.hpp"
#include "rotdcf/suites.hpp"
#include "rotdcf/training.hpp"

namespace rotdcf {

/// Where images come from. `source` is "synthetic" or a directory with the
/// four MNIST ubyte files. Rotations are uniform in [-max, max] degrees
/// (360 means the full circle).
struct DataConfig {
  std::string source = "synthetic";
  int train_size = 2000;
  int test_size = 1000;
  double train_max_rot_deg = 360.0;
  double test_max_rot_deg = 360.0;
};

/// Train upright, test rotated, no retraining; both models share data and
/// schedule.
struct TransferConfig {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int train_size = 1000;
  int test_size = 1000;
  double test_max_rot_deg = 60.0;
  int epochs = 6;
  std::string baseline = "conv3-cnn";
  double min_gap = 0.05;  // accuracy points / 100 the model must win by
};

struct RunConfig {
  std::string arch = "conv3-rotdcf";  // preset name, family name, or inline arch text
  std::string variant;                // empty: taken from the preset name; "all" for count
  int M = 0;                          // 0 keeps the preset default
  int K = 0;
  int K_alpha = 0;
  int n_theta = 8;
  bool norm = true;  // groupnorm before each relu in trained presets
  std::uint64_t seed = 1;
  std::string out = "rotdcf_out";
  std::string checkpoint;  // eval: checkpoint to load (default <out>/model.ckpt)
  bool strict = false;

  DataConfig data;
  TrainConfig train;
  SuiteOptions verify;
  TransferConfig transfer;

  /// Throws Error(Config).
  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are errors; missing keys keep their defaults.
  static RunConfig from_json(const nlohmann::json& j);
  /// Two-space indented JSON with sorted keys, newline terminated.
  std::string canonical() const;

  PresetOptions preset_options() const;
  /// The network to train or evaluate.
  ArchSpec resolve_arch() const;
};

RunConfig load_run_config(const std::string& path);

/// Loads (or synthesises) `n` items of the train or test split and rotates
/// them by angles drawn from `seed`.
Dataset load_split(const DataConfig& data, bool train_split, std::size_t n, double max_rot_deg, std::uint64_t seed);

struct TransferRow {
  std::string model;  // preset name, or "inline"
  bool baseline = false;
  std::uint64_t seed = 0;
  int epochs_run = 0;
  double train_acc = 0.0;
  double upright_acc = 0.0;
  double rotated_acc = 0.0;
  double seconds = 0.0;
};
using TransferLog = std::function<void(const TransferRow&)>;

/// For every seed: trains cfg.arch and cfg.transfer.baseline on the same
/// upright set and scores both on an upright and a rotated test set.
std::vector<TransferRow> run_transfer(const RunConfig& cfg, const TransferLog& log = {});
/// Per seed, model accuracy minus baseline accuracy on the rotated set, in
/// the order of cfg.transfer.seeds.
std::vector<double> transfer_gaps(const RunConfig& cfg, const std::vector<TransferRow>& rows);
/// model,baseline,seed,train_size,test_size,test_max_rot_deg,epochs,train_acc,upright_acc,rotated_acc,seconds
void write_transfer_csv(const RunConfig& cfg, const std::vector<TransferRow>& rows, const std::string& path);

}  // namespace rotdcf
