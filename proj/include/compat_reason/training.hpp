#pragma once

// Joint training of the intra- and inter-factor networks with the reason
// regularizer: plain SGD with weight decay, a step learning-rate schedule
// and class-balanced minibatches.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "compat_reason/compatnet.hpp"
#include "compat_reason/kvconfig.hpp"
#include "compat_reason/metrics.hpp"
#include "compat_reason/random.hpp"
#include "compat_reason/reasoning.hpp"

namespace compat_reason {

struct TrainConfig {
  double lr0 = 0.01;
  double weight_decay = 0.0005;
  std::size_t epochs = 70;
  std::size_t lr_drop_every = 30;
  double lr_drop_factor = 10.0;
  std::size_t batch_size = 64;
  double alpha = 0.0;
  RegularizerKind reg = RegularizerKind::cross_entropy;
  std::uint64_t seed = 0;

  /// Keys under `section`: lr0, weight_decay, epochs, lr_drop_every,
  /// lr_drop_factor, batch_size, alpha, reg, seed. Unknown keys are rejected.
  static TrainConfig from_config(const KeyValueConfig& cfg, const std::string& section = "train");
};

void validate_train_config(const TrainConfig& config);

/// lr0 / factor^floor(epoch / drop_every), epochs counted from 0.
double lr_at(const TrainConfig& config, std::size_t epoch);

/// p <- p - lr * (g + weight_decay * p), elementwise.
void sgd_step(std::span<ad::Tensor* const> params, std::span<const ad::Tensor> grads, double lr, double weight_decay);

/// Draws a class uniformly among the non-empty ones, then an outfit uniformly within it.
class BalancedSampler {
 public:
  BalancedSampler(std::span<const Judgment> labels, std::uint64_t seed);

  std::size_t next();
  std::vector<std::size_t> batch(std::size_t n);
  const std::vector<std::size_t>& pool(Judgment j) const { return pools_[index_of(j)]; }

 private:
  std::array<std::vector<std::size_t>, kNumJudgments> pools_;
  std::vector<std::size_t> classes_;
  Rng rng_;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;           // mean total loss over the epoch's batches
  double judgment_loss = 0.0;
  double reason_loss = 0.0;
  double judgment_acc = 0.0;   // on the monitor set
  std::optional<double> reason_acc;
};

struct TrainResult {
  CompatModel model;  // final-epoch weights
  std::vector<EpochMetrics> log;
  std::size_t best_epoch = 0;  // highest monitor judgment accuracy
};

struct TrainingDiverged : Error {
  using Error::Error;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// The monitor set (validation if given, else the training set) is scored
/// after each epoch; `monitor_every` = 0 disables per-epoch scoring.
TrainResult train(const std::vector<OutfitRecord>& train_set, const std::vector<OutfitRecord>* monitor,
                  const ModelConfig& model_config, const TrainConfig& config, const EpochCallback& on_epoch = {},
                  std::size_t monitor_every = 1);

/// Columns: epoch, lr, loss, judgment_loss, reason_loss, judgment_acc, reason_acc.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& log);

}  // namespace compat_reason
