#pragma once

// Outfit records and the NDJSON feature-file format.
//
// One JSON object per line:
//   {"outfit_id": "...",
//    "top":    {"color": [25 reals], "print": [...], "material": [...],
//               "silhouette": [...], "detail": [...]},
//    "bottom": {...same keys...},
//    "judgment": "good" | "normal" | "bad",
//    "reason": "color" | "print" | "design" | null,   (null iff normal)
//    "attributes": {"print_top": "floral", ...}}
// Reals are written in shortest round-trip decimal form.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "compat_reason/colorfeat.hpp"
#include "compat_reason/types.hpp"

namespace compat_reason {

enum class Factor : int { color = 0, print = 1, material = 2, silhouette = 3, detail = 4 };
inline constexpr std::size_t kNumFactors = 5;
inline constexpr std::array<Factor, kNumFactors> kAllFactors{Factor::color, Factor::print, Factor::material,
                                                            Factor::silhouette, Factor::detail};

constexpr std::size_t index_of(Factor f) { return static_cast<std::size_t>(f); }
std::string_view to_string(Factor f);

/// material, silhouette and detail all report as the design reason.
constexpr Reason reason_of(Factor f) {
  switch (f) {
    case Factor::color: return Reason::color;
    case Factor::print: return Reason::print;
    default: return Reason::design;
  }
}

struct FeatureDims {
  std::array<std::size_t, kNumFactors> dims{kColorFeatureDim, 14, 10, 5, 8};

  std::size_t operator[](Factor f) const { return dims[index_of(f)]; }
  std::size_t& operator[](Factor f) { return dims[index_of(f)]; }
  bool operator==(const FeatureDims&) const = default;
};

struct GarmentFeatures {
  std::array<std::vector<double>, kNumFactors> factors;

  const std::vector<double>& operator[](Factor f) const { return factors[index_of(f)]; }
  std::vector<double>& operator[](Factor f) { return factors[index_of(f)]; }
};

struct OutfitRecord {
  std::string outfit_id;
  GarmentFeatures top;
  GarmentFeatures bottom;
  Judgment judgment = Judgment::normal;
  std::optional<Reason> reason;
  std::map<std::string, std::string> attributes;
};

/// Throws DimensionError / ParseError when the record breaks the format contract.
void validate_record(const OutfitRecord& record, const FeatureDims& dims);

OutfitRecord parse_record(std::string_view json_line, const FeatureDims& dims);
std::string format_record(const OutfitRecord& record);

std::vector<OutfitRecord> load_feature_records(const std::filesystem::path& path, const FeatureDims& dims);
void save_feature_records(const std::filesystem::path& path, const std::vector<OutfitRecord>& records);

}  // namespace compat_reason
