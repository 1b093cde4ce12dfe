#pragma once

// Repeated runs, baselines and ablation sweeps over synthetic data.
//
// Every run is fixed by (experiment config, seed): the seed picks the
// dataset and the training seed. Runs in a sweep are independent and may be
// spread over COMPAT_REASON_THREADS worker threads; results are stored by
// run index so the output does not depend on scheduling.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "compat_reason/metrics.hpp"
#include "compat_reason/synthdata.hpp"
#include "compat_reason/training.hpp"

namespace compat_reason {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  std::size_t n = 0;
};

/// Throws on an empty input.
MeanStd mean_std(std::span<const double> values);

struct ExperimentConfig {
  GenerationConfig gen;
  TrainConfig train;
  ModelConfig model;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t threads = 1;

  /// Sections [gen], [train], [model] (layer widths: intra_hidden1,
  /// intra_hidden2, intra_out, inter_hidden1, inter_hidden2) and [eval]
  /// (seeds = 1,2,3 and threads).
  /// The training seed is replaced by each run seed.
  static ExperimentConfig from_config(const KeyValueConfig& cfg);
};

/// COMPAT_REASON_THREADS when set to a positive integer, else `fallback`.
std::size_t thread_count(std::size_t fallback = 1);

struct RunResult {
  std::string method;  // "ours", "noreg", "ifiv", "multitask", or a formulation name
  std::uint64_t seed = 0;
  double alpha = 0.0;
  RegularizerKind reg = RegularizerKind::cross_entropy;
  double judgment_acc = 0.0;
  std::optional<double> reason_acc;
  ConfusionMatrix confusion{};
  double seconds = 0.0;
};

struct SummaryRow {
  std::string method;
  double alpha = 0.0;
  RegularizerKind reg = RegularizerKind::cross_entropy;
  MeanStd judgment;
  MeanStd reason;          // over the runs where reason accuracy is defined
  std::size_t undefined = 0;
};

struct RunReport {
  std::string name;
  std::vector<RunResult> runs;

  /// Groups runs by (method, alpha, reg) in first-appearance order.
  std::vector<SummaryRow> summary() const;
};

/// The data of one seed; the same for every run with that seed.
Dataset dataset_for_seed(const ExperimentConfig& config, std::uint64_t seed);

/// Trains with the given alpha/regularizer and scores the test split.
RunResult run_training(const ExperimentConfig& config, std::uint64_t seed, double alpha, RegularizerKind reg,
                       const EvaluationOptions& eval = {});

/// Reason-NoReg: our model trained with alpha = 0.
RunResult baseline_noreg(const ExperimentConfig& config, std::uint64_t seed);

/// Item feature influence on the alpha = 0 model: argmax of per-reason mean
/// contribution for the predicted judgment, with no normal difference.
RunResult baseline_ifiv(const ExperimentConfig& config, std::uint64_t seed);

/// Judgment network plus a separate three-layer reason head on x, trained
/// jointly with cross-entropy on the reason labels of good/bad outfits.
struct MultitaskModel {
  CompatModel base;
  MlpParams reason_head;
};

MultitaskModel train_multitask(const std::vector<OutfitRecord>& train_set, const ModelConfig& model_config,
                               const TrainConfig& config);
Evaluation evaluate_multitask(const MultitaskModel& model, const std::vector<OutfitRecord>& records);
RunResult baseline_multitask(const ExperimentConfig& config, std::uint64_t seed);

/// Table-style comparison: ours (config alpha/reg), noreg, ifiv, multitask, per seed.
RunReport compare_methods(const ExperimentConfig& config);

/// Every (reg, alpha) pair over every seed. An alpha of 0 is trained once per
/// seed and reported under each regularizer.
RunReport sweep_alpha(const ExperimentConfig& config, const std::vector<double>& alphas,
                      const std::vector<RegularizerKind>& regs);

/// alpha = 0 models scored with each formulation.
RunReport sweep_formulations(const ExperimentConfig& config);

using ProgressCallback = std::function<void(const RunResult&)>;
void set_progress_callback(ProgressCallback callback);

/// Runs `n` jobs on up to `threads` threads; job i writes slot i.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job);

/// One row per run.
void write_runs_csv(const std::filesystem::path& path, const RunReport& report);
/// One row per (method, alpha, reg) with mean and std.
void write_summary_csv(const std::filesystem::path& path, const RunReport& report);
/// {"name", "series": [{"method", "reg", "points": [{"alpha", "judgment_acc", ...}]}]}.
void write_plot_json(const std::filesystem::path& path, const RunReport& report);

}  // namespace compat_reason
