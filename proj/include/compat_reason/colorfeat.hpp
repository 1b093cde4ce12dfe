#pragma once

// FOCO colour quantization and the 25-dimensional colour feature.
//
// FOCO bins hue, saturation and brightness into 15, 8 and 6 uniform,
// left-closed, 1-based levels. The colour feature keeps the five most
// frequent bins, each encoded as (h, s, b, ratio, presence):
//   h = (h_idx - 0.5) / 15, s = (s_idx - 0.5) / 8, b = (b_idx - 0.5) / 6
// Missing bins (fewer than five colours) are all-zero with presence 0.

#include <array>
#include <compare>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "compat_reason/types.hpp"

namespace compat_reason {

inline constexpr int kFocoHueLevels = 15;
inline constexpr int kFocoSaturationLevels = 8;
inline constexpr int kFocoBrightnessLevels = 6;
inline constexpr std::size_t kMajorColors = 5;
inline constexpr std::size_t kColorBlockSize = 5;
inline constexpr std::size_t kColorFeatureDim = kMajorColors * kColorBlockSize;

struct FocoCode {
  int h = 1;
  int s = 1;
  int b = 1;

  auto operator<=>(const FocoCode&) const = default;
};

std::string to_string(const FocoCode& c);

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
};

struct Hsb {
  double h = 0.0;  // degrees, [0, 360)
  double s = 0.0;
  double b = 0.0;
};

using ColorHistogram = std::map<FocoCode, double>;

struct ColorFeature {
  std::array<double, kColorFeatureDim> values{};

  std::span<const double, kColorBlockSize> block(std::size_t k) const {
    return std::span<const double, kColorBlockSize>(values.data() + k * kColorBlockSize, kColorBlockSize);
  }
  std::vector<double> to_vector() const { return {values.begin(), values.end()}; }
};

struct ColorRangeError : Error {
  using Error::Error;
};

/// Standard RGB -> HSB (HSV). Achromatic input has hue 0.
Hsb rgb_to_hsb(Rgb rgb);
Hsb rgb_to_hsb(double r, double g, double b);

FocoCode foco_quantize(Hsb hsb);
FocoCode foco_quantize(double h, double s, double b);

/// Bin centre of a code, the representative value re-quantizing to the same code.
Hsb foco_representative(const FocoCode& code);

/// FOCO-binned histogram; ratios sum to 1. Throws on empty input.
ColorHistogram color_histogram(std::span<const Rgb> pixels);

/// Top five bins by ratio (ties by code order). Throws on an invalid histogram.
ColorFeature build_color_feature(const ColorHistogram& histogram);

/// Reads an uncompressed PPM (P3 or P6) as normalized pixels.
std::vector<Rgb> read_ppm(const std::filesystem::path& path);
/// Reads whitespace-separated "r g b" triples in [0, 1], one pixel per line.
std::vector<Rgb> read_pixel_text(const std::filesystem::path& path);

}  // namespace compat_reason
