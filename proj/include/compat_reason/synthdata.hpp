#pragma once

// Rule-based synthetic outfits.
//
// Every garment carries one attribute per factor (a palette colour, a print,
// a material, a silhouette, a design detail). Labels come from cross-item
// rules on the attribute pair of a single factor:
//   clash rules      -> bad, reason = that factor's reason
//   highlight rules  -> good, reason = that factor's reason
//   no rule          -> normal
// A clash beats any highlight; among several clashes (or several
// highlights) the factor order color, print, material, silhouette, detail
// decides. By default each generated outfit fires at most one rule, so its
// reason is unambiguous.
//
// Features are one-hot attribute codes plus Gaussian noise; the colour
// feature is the FOCO feature of a synthetic colour histogram whose
// dominant bin is the garment colour, plus the same noise.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "compat_reason/colorfeat.hpp"
#include "compat_reason/kvconfig.hpp"
#include "compat_reason/random.hpp"
#include "compat_reason/records.hpp"

namespace compat_reason {

enum class Tone { vivid_warm, vivid_cool, neutral, pastel };

struct PaletteColor {
  std::string name;
  FocoCode code;
  Tone tone;
};

enum class PrintKind { plain, subtle, loud };
enum class MaterialKind { casual, heavy, sheer };

struct AttributeCatalog {
  std::vector<PaletteColor> palette;
  std::vector<std::string> prints;       // 14
  std::vector<std::string> materials;    // 10
  std::vector<std::string> silhouettes;  // 5
  std::vector<std::string> details;      // 8
  std::vector<PrintKind> print_kind;
  std::vector<MaterialKind> material_kind;

  static const AttributeCatalog& standard();

  /// Number of values of the attribute that describes factor f.
  std::size_t size(Factor f) const;
  const std::string& name(Factor f, std::size_t index) const;
  std::size_t index_of_name(Factor f, const std::string& name) const;
};

/// Attribute indices of one garment, per factor.
using GarmentAttributes = std::array<std::size_t, kNumFactors>;

struct Rule {
  std::string name;
  Factor factor;
  Judgment effect;  // good or bad
  std::set<std::pair<std::size_t, std::size_t>> pairs;  // (top, bottom) attribute indices

  bool fires(const GarmentAttributes& top, const GarmentAttributes& bottom) const {
    const std::size_t f = index_of(factor);
    return pairs.count({top[f], bottom[f]}) != 0;
  }
};

struct RuleSet {
  std::vector<Rule> rules;

  static RuleSet standard(const AttributeCatalog& catalog);
};

struct OutfitLabel {
  Judgment judgment = Judgment::normal;
  std::optional<Reason> reason;
  std::optional<Factor> decisive_factor;
  std::optional<std::size_t> decisive_rule;  // index into RuleSet::rules
  std::vector<std::size_t> fired;  // indices into RuleSet::rules
};

/// Total and deterministic.
OutfitLabel label_outfit(const RuleSet& rules, const GarmentAttributes& top, const GarmentAttributes& bottom);

struct GenerationConfig {
  std::size_t n_train = 5000;
  std::size_t n_val = 500;
  std::size_t n_test = 1000;
  double noise = 0.1;
  std::array<double, kNumJudgments> ratios{0.158, 0.750, 0.092};  // good, normal, bad
  bool ambiguous = false;  // allow extra rules to fire; the label then follows the priority order
  // Probability that a non-decisive factor of a good/bad outfit takes a
  // near-miss pair (one garment matches the rule, the pair does not fire).
  // Makes the other factors correlate with the verdict without deciding it.
  double confound = 0.0;

  /// Reads keys n_train, n_val, n_test, noise, ratio_good, ratio_normal,
  /// ratio_bad, ambiguous, confound under `section` ("gen" -> "gen.noise"); other keys
  /// in that section are rejected.
  static GenerationConfig from_config(const KeyValueConfig& cfg, const std::string& section = "gen");
};

/// Throws Error when ratios are negative, non-finite or do not sum to 1.
void validate_generation_config(const GenerationConfig& config);

/// Exact per-class counts for n samples (largest remainder).
std::array<std::size_t, kNumJudgments> class_counts(std::size_t n, const std::array<double, kNumJudgments>& ratios);

struct Dataset {
  std::vector<OutfitRecord> train;
  std::vector<OutfitRecord> val;
  std::vector<OutfitRecord> test;
};

Dataset generate_dataset(const GenerationConfig& config, std::uint64_t seed);

/// One split of `n` outfits with stratified judgments and uniform reasons.
std::vector<OutfitRecord> generate_split(const GenerationConfig& config, std::size_t n, const std::string& prefix,
                                         Rng& rng);

/// Garment features for given attributes.
GarmentFeatures garment_features(const GarmentAttributes& attrs, double noise, Rng& rng);

/// Attributes recovered from record attribute strings.
std::pair<GarmentAttributes, GarmentAttributes> record_attributes(const OutfitRecord& record);

/// Re-pairs tops with uniformly shuffled bottoms and relabels with the rules.
std::vector<OutfitRecord> make_test_random(const std::vector<OutfitRecord>& test, std::uint64_t seed);

}  // namespace compat_reason
