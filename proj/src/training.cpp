// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "rotdcf/error.hpp"

namespace rotdcf {

namespace {

int argmax_row(const Tensor& logits, std::size_t b) {
  const std::size_t n = logits.dim(1);
  const double* row = logits.data() + b * n;
  return static_cast<int>(std::max_element(row, row + n) - row);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::Config, "epochs must be at least 1");
  if (batch_size < 1) throw Error(ErrorKind::Config, "batch_size must be at least 1");
  if (!(lr_end > 0.0) || !(lr_start >= lr_end))
    throw Error(ErrorKind::Config, "learning rates must satisfy lr_start >= lr_end > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::Config, "momentum must lie in [0, 1)");
  if (!(target_test_acc >= 0.0 && target_test_acc <= 1.0))
    throw Error(ErrorKind::Config, "target_test_acc must lie in [0, 1]");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  if (cfg.epochs <= 1) return cfg.lr_start;
  const double f = static_cast<double>(epoch) / (cfg.epochs - 1);
  return std::exp(std::log(cfg.lr_start) + f * (std::log(cfg.lr_end) - std::log(cfg.lr_start)));
}

std::vector<EpochMetrics> train(Network& net, const Dataset& train_set, const Dataset* test_set, const TrainConfig& cfg,
                                const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.size() == 0) throw Error(ErrorKind::Domain, "training set is empty");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor> velocity;
  for (const auto& p : net.params()) velocity.emplace_back(p.value.shape());

  std::vector<EpochMetrics> history;
  Tensor x, dlogits;
  std::vector<int> y;
  Trace trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = learning_rate(cfg, epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      train_set.gather(std::span(order).subspan(start, n), x, y);
      const Tensor logits = net.forward(x, &trace);
      const double loss = Network::softmax_loss(logits, y, &dlogits);
      if (!std::isfinite(loss))
        throw Error(ErrorKind::Divergence, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                               std::to_string(batch) + " (lr " + std::to_string(lr) + ")");
      loss_sum += loss * static_cast<double>(n);
      for (std::size_t b = 0; b < n; ++b) correct += argmax_row(logits, b) == y[b];
      net.zero_grad();
      net.backward(trace, dlogits);
      auto& params = net.params();
      for (std::size_t p = 0; p < params.size(); ++p) {
        double* v = velocity[p].data();
        double* w = params[p].value.data();
        const double* g = params[p].grad.data();
        for (std::size_t i = 0; i < velocity[p].size(); ++i) {
          v[i] = cfg.momentum * v[i] + g[i];
          w[i] -= lr * v[i];
        }
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    if (test_set) m.test_acc = evaluate(net, *test_set);
    history.push_back(m);
    if (on_epoch) on_epoch(m);
    if (cfg.target_test_acc > 0.0 && m.test_acc >= cfg.target_test_acc) break;
  }
  return history;
}

double evaluate(const Network& net, const Dataset& data, int batch_size) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  Tensor x;
  std::vector<int> y;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t n = std::min<std::size_t>(batch_size, data.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    data.gather(idx, x, y);
    const Tensor logits = net.forward(x);
    for (std::size_t b = 0; b < n; ++b) correct += argmax_row(logits, b) == y[b];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void write_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write metrics to '" + path + "'");
  out.precision(10);
  out << "epoch,lr,train_loss,train_acc,test_acc\n";
  for (const auto& m : metrics) {
    out << m.epoch << ',' << m.lr << ',' << m.train_loss << ',' << m.train_acc << ',';
    if (m.test_acc >= 0) out << m.test_acc;
    out << '\n';
  }
}

}  // namespace rotdcf
