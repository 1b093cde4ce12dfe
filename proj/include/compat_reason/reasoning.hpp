#pragma once

// Reason tracing and reason supervision.
//
// For a judgment j with logit y_j and compatibility feature x:
//   contribution          contrib_j(x_i) = dy_j/dx_i * relu(x_i)
//   positive contribution C+_j(r) = mean_{i in I_r} relu(dy_j/dx_i) * relu(x_i)
//   reason for good/bad   argmax_r C+_j(r) - C+_normal(r)
//   traced reason vector  F_r = C+_{gt}(r) - C+_normal(r)   (zero for gt = normal)
// The regularizers compare F against the labelled reason. Because F contains
// dy/dx, minimizing them needs gradients of gradients; everything here is
// built on the graph with create_graph so the training loss stays
// differentiable in the network parameters.
//
// Batched variants take one judgment per row: rows are independent, so the
// gradient of sum_b y[b, j_b] with respect to x holds dy_{j_b}/dx_b in row b.

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "compat_reason/autodiff.hpp"
#include "compat_reason/compatnet.hpp"
#include "compat_reason/types.hpp"

namespace compat_reason {

enum class RegularizerKind { cross_entropy, linear, square };
inline constexpr std::array<RegularizerKind, 3> kAllRegularizers{RegularizerKind::cross_entropy,
                                                                 RegularizerKind::linear, RegularizerKind::square};

std::string_view to_string(RegularizerKind k);
/// Accepts "ce", "cross_entropy", "linear", "square".
RegularizerKind parse_regularizer(std::string_view s);

/// Candidate reason scores compared in the formulation ablation.
enum class Formulation : int {
  contribution = 1,                     // mean_r contrib_j
  contribution_difference = 2,          // mean_r contrib_j - mean_r contrib_normal
  positive_gradient = 3,                // mean_r relu(dy_j/dx) * x
  positive_contribution = 4,            // C+_j
  rectified_contribution_difference = 5,  // relu(formulation 2)
  positive_contribution_difference = 6,   // C+_j - C+_normal
};
inline constexpr std::array<Formulation, 6> kAllFormulations{
    Formulation::contribution,          Formulation::contribution_difference,
    Formulation::positive_gradient,     Formulation::positive_contribution,
    Formulation::rectified_contribution_difference, Formulation::positive_contribution_difference};
std::string_view to_string(Formulation f);

/// Per-reason scores (color, print, design).
using ContributionVector = std::array<double, kNumReasons>;

// ---- graph expressions --------------------------------------------------------

/// dy_{j_b}/dx_b per row, batch x x_dim.
ad::Var logit_gradient(ad::Var x, ad::Var y, std::span<const Judgment> per_row, bool create_graph = true);

/// Elementwise contribution, batch x x_dim.
ad::Var contrib(ad::Var x, ad::Var y, std::span<const Judgment> per_row);
ad::Var contrib(ad::Var x, ad::Var y, Judgment j);

/// C+ per reason, batch x 3.
ad::Var positive_contrib(ad::Var x, ad::Var y, std::span<const Judgment> per_row, const FactorPartition& partition);
ad::Var positive_contrib(ad::Var x, ad::Var y, Judgment j, const FactorPartition& partition);

/// Traced reason vector for the ground-truth judgments, batch x 3.
ad::Var f_vector(ad::Var x, ad::Var y, std::span<const Judgment> ground_truth, const FactorPartition& partition);

/// Per-row regularizers, batch x 1.
ad::Var reg_ce(ad::Var f, std::span<const Reason> ground_truth);
ad::Var reg_linear(ad::Var f, std::span<const Reason> ground_truth);
ad::Var reg_square(ad::Var f, std::span<const Reason> ground_truth);
ad::Var regularizer(RegularizerKind kind, ad::Var f, std::span<const Reason> ground_truth);

struct LossTerms {
  ad::Var total;
  ad::Var judgment;
  ad::Var reason;
};

/// mean_b [ CE(y_b, gt_b) + alpha * [gt_b != normal] * R(F_b, reason_b) ].
/// With alpha == 0 the reason branch is not built at all.
LossTerms total_loss(ad::Graph& g, const ModelVars& vars, const FactorPartition& partition, const OutfitBatch& batch,
                     double alpha, RegularizerKind kind);

// ---- reason selection ---------------------------------------------------------

/// argmax over reasons, ties in (color, print, design) order.
Reason argmax_reason(const ContributionVector& scores);
Reason reason_good(const ContributionVector& positive_good, const ContributionVector& positive_normal);
Reason reason_bad(const ContributionVector& positive_bad, const ContributionVector& positive_normal);

ContributionVector row_of(const ad::Tensor& t, std::size_t row);

/// Per-row formulation scores for the given judgments, batch x 3.
ad::Tensor formulation_scores(ad::Var x, ad::Var y, std::span<const Judgment> per_row, Formulation formulation,
                              const FactorPartition& partition);

/// Judgments, reasons and the contribution tables of one evaluation pass.
struct ReasonTrace {
  std::vector<Judgment> judgments;
  std::vector<std::optional<Reason>> reasons;
  ad::Tensor logits;              // batch x 3
  ad::Tensor contribution;        // batch x 3, factor means of contrib for the predicted judgment
  ad::Tensor positive_good;       // batch x 3
  ad::Tensor positive_normal;     // batch x 3
  ad::Tensor positive_bad;        // batch x 3
};

/// Predicts judgments, then the reason for each good/bad prediction
/// (none for normal).
ReasonTrace trace_reasons(const CompatModel& model, const OutfitBatch& batch);

std::optional<Reason> predict_reason(const CompatModel& model, const OutfitRecord& record);

/// Per-factor (five segments of x) view of one outfit, for explanation tables.
struct FactorTable {
  Judgment judgment = Judgment::normal;
  std::optional<Reason> reason;
  std::array<double, kNumJudgments> logits{};
  std::array<double, kNumFactors> contribution{};  // segment means of contrib for the predicted judgment
  std::array<std::array<double, kNumFactors>, kNumJudgments> positive{};  // segment means of C+ per judgment

  /// Design sub-factor (material, silhouette or detail) with the largest
  /// positive contribution difference to normal; nullopt unless the reason is design.
  std::optional<Factor> design_factor() const;
};

FactorTable factor_table(const CompatModel& model, const OutfitRecord& record);

}  // namespace compat_reason
