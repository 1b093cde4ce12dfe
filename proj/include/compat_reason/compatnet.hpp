#pragma once

// The judgment network: five intra-factor MLPs, each fusing the top and
// bottom features of one factor, whose outputs are concatenated into the
// compatibility feature x; an inter-factor MLP maps x to logits y over
// (good, normal, bad).

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "compat_reason/autodiff.hpp"
#include "compat_reason/random.hpp"
#include "compat_reason/records.hpp"
#include "compat_reason/types.hpp"

namespace compat_reason {

struct ModelConfig {
  FeatureDims dims;
  std::size_t intra_hidden1 = 64;
  std::size_t intra_hidden2 = 64;
  std::size_t intra_out = 32;
  std::size_t inter_hidden1 = 64;
  std::size_t inter_hidden2 = 32;

  std::size_t x_dim() const { return kNumFactors * intra_out; }
  bool operator==(const ModelConfig&) const = default;
};

/// Throws DimensionError on zero-sized layers or inputs.
void validate_config(const ModelConfig& config);

struct DenseLayer {
  ad::Tensor weight;  // out x in
  ad::Tensor bias;    // 1 x out
};

/// Three dense layers; relu after the first two, identity after the last.
struct MlpParams {
  std::array<DenseLayer, 3> layers;

  std::size_t input_dim() const { return layers[0].weight.cols(); }
  std::size_t output_dim() const { return layers[2].weight.rows(); }
};

MlpParams init_mlp(std::size_t in, std::size_t hidden1, std::size_t hidden2, std::size_t out, Rng& rng);

/// Which elements of x belong to each reason, plus each factor's segment of x.
struct FactorPartition {
  std::array<std::vector<std::size_t>, kNumReasons> indices;
  std::array<std::size_t, kNumFactors> offset{};
  std::array<std::size_t, kNumFactors> width{};

  static FactorPartition for_config(const ModelConfig& config);
  std::size_t x_dim() const;
  /// x_dim x 3 matrix; column r holds 1/|I_r| on I_r, so x * P gives per-reason means.
  ad::Tensor pooling_matrix() const;
};

struct CompatModel {
  ModelConfig config;
  std::array<MlpParams, kNumFactors> intra;
  MlpParams inter;
  FactorPartition partition;

  /// Weight and bias tensors in declared order: intra color..detail, then inter.
  std::vector<ad::Tensor*> parameters();
  std::vector<const ad::Tensor*> parameters() const;
  std::size_t parameter_count() const;
};

/// Fan-in scaled uniform weights, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
CompatModel init_model(const ModelConfig& config, std::uint64_t seed);

// ---- graph evaluation -----------------------------------------------------

struct MlpVars {
  std::array<ad::Var, 3> weight;
  std::array<ad::Var, 3> bias;
};

MlpVars bind_mlp(ad::Graph& g, const MlpParams& p, bool trainable);
ad::Var mlp_forward(const MlpVars& mlp, ad::Var input);
void append_vars(const MlpVars& mlp, std::vector<ad::Var>& out);

struct ModelVars {
  std::array<MlpVars, kNumFactors> intra;
  MlpVars inter;

  /// Same order as CompatModel::parameters().
  std::vector<ad::Var> all() const;
};

/// Trainable parameters become graph variables, otherwise constants.
ModelVars bind_model(ad::Graph& g, const CompatModel& model, bool trainable);

/// Per-factor network inputs (rows = outfits, cols = top features then bottom features).
struct OutfitBatch {
  std::array<ad::Tensor, kNumFactors> inputs;
  std::vector<Judgment> judgments;
  std::vector<std::optional<Reason>> reasons;

  std::size_t size() const { return judgments.size(); }
};

OutfitBatch make_batch(const std::vector<OutfitRecord>& records, std::span<const std::size_t> indices,
                       const FeatureDims& dims);
OutfitBatch make_batch(const std::vector<OutfitRecord>& records, const FeatureDims& dims);

struct ForwardPass {
  ad::Var x;  // batch x x_dim, always differentiable
  ad::Var y;  // batch x 3 logits
};

/// When the model is bound as constants, x is re-rooted as a graph variable
/// so that dy/dx stays available for reason tracing.
ForwardPass forward(ad::Graph& g, const ModelVars& vars, const OutfitBatch& batch);

Judgment predict_judgment(std::span<const double> logits);
std::vector<Judgment> predict_judgments(const ad::Tensor& logits);
std::array<double, kNumJudgments> softmax(std::span<const double> logits);

// ---- checkpoints ------------------------------------------------------------
//
// Layout: text header lines
//   COMPAT-REASON-CHECKPOINT
//   format_version=1
//   dims=25,14,10,5,8
//   intra_hidden=64,64
//   intra_out=32
//   inter_hidden=64,32
//   parameter_count=N
//   end_header
// followed by N little-endian IEEE-754 doubles in CompatModel::parameters()
// order, each tensor row-major.

inline constexpr int kCheckpointVersion = 1;

struct CheckpointError : Error {
  using Error::Error;
};

void save_checkpoint(const CompatModel& model, const std::filesystem::path& path);
CompatModel load_checkpoint(const std::filesystem::path& path);
/// Also throws DimensionError unless the stored config equals `expected`.
CompatModel load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

std::string serialize_checkpoint(const CompatModel& model);
CompatModel deserialize_checkpoint(const std::string& bytes);

/// 64-bit FNV-1a, used for checkpoint fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace compat_reason
