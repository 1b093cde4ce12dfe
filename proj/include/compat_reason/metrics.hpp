#pragma once

// Judgment and reason accuracy.
//
// Reason accuracy is conditional: among outfits whose ground truth is good or
// bad and whose judgment was predicted correctly, the percentage whose
// predicted reason matches. With no such outfit it is undefined (nullopt).

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "compat_reason/compatnet.hpp"
#include "compat_reason/reasoning.hpp"

namespace compat_reason {

/// Percent of matching judgments. Throws on size mismatch or empty input.
double judgment_accuracy(std::span<const Judgment> predicted, std::span<const Judgment> truth);

/// Single pass with a running numerator and denominator.
std::optional<double> reason_accuracy(std::span<const Judgment> predicted_j,
                                      std::span<const std::optional<Reason>> predicted_r,
                                      std::span<const Judgment> truth_j, std::span<const std::optional<Reason>> truth_r);

/// Same quantity computed by first filtering the eligible outfits.
std::optional<double> reason_accuracy_filtered(std::span<const Judgment> predicted_j,
                                               std::span<const std::optional<Reason>> predicted_r,
                                               std::span<const Judgment> truth_j,
                                               std::span<const std::optional<Reason>> truth_r);

/// counts[truth][predicted].
using ConfusionMatrix = std::array<std::array<std::size_t, kNumJudgments>, kNumJudgments>;
ConfusionMatrix confusion_matrix(std::span<const Judgment> predicted, std::span<const Judgment> truth);

/// How good/bad predictions are explained.
enum class ReasonMethod {
  positive_contribution_difference,  // the default tracing
  item_feature_influence,            // argmax of per-reason mean contribution, no normal difference
  formulation,                       // a formulation from the ablation
};

struct EvaluationOptions {
  ReasonMethod method = ReasonMethod::positive_contribution_difference;
  Formulation formulation = Formulation::positive_contribution_difference;
  std::size_t chunk_size = 256;
};

/// "ours", "ifiv", or a formulation as "F1".."F6" or its full name.
EvaluationOptions parse_evaluation_method(std::string_view name);

struct Evaluation {
  std::size_t count = 0;
  double judgment_acc = 0.0;
  std::optional<double> reason_acc;
  ConfusionMatrix confusion{};
  std::vector<Judgment> predicted_judgments;
  std::vector<std::optional<Reason>> predicted_reasons;
};

Evaluation evaluate(const CompatModel& model, const std::vector<OutfitRecord>& records,
                    const EvaluationOptions& options = {});

}  // namespace compat_reason
