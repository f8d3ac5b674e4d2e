// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rotdcf/data.hpp"
#include "rotdcf/network.hpp"

namespace rotdcf {

/// Mini-batch SGD with heavy-ball momentum, v = mu v + g, p -= lr v.
struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr_start = 1e-2;
  double lr_end = 1e-4;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  /// Stop after the first epoch whose test accuracy reaches this; 0 never
  /// stops early. The schedule still spans `epochs`.
  double target_test_acc = 0.0;

  /// Throws Error(Config) unless lr_start >= lr_end > 0, epochs >= 1 and
  /// batch_size >= 1.
  void validate() const;
};

/// Log-linear interpolation: lr_start at epoch 0, lr_end at epochs - 1.
double learning_rate(const TrainConfig& cfg, int epoch);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean over the epoch's mini-batches, weighted by size
  double train_acc = 0.0;   // running accuracy during the epoch
  double test_acc = -1.0;   // -1 when no test set was given
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains in place. Shuffling uses mt19937_64(cfg.seed); the result depends
/// only on the seed, the data and the initial parameters. A non-finite loss
/// throws Error(Divergence) naming the epoch and batch.
std::vector<EpochMetrics> train(Network& net, const Dataset& train_set, const Dataset* test_set, const TrainConfig& cfg,
                                const EpochCallback& on_epoch = {});

/// Fraction of items whose arg-max logit equals the label.
double evaluate(const Network& net, const Dataset& data, int batch_size = 128);

/// Writes `epoch,lr,train_loss,train_acc,test_acc`; test_acc is empty when
/// absent.
void write_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::string& path);

}  // namespace rotdcf
