#include "compat_reason/colorfeat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace compat_reason {

std::string to_string(const FocoCode& c) {
  std::ostringstream os;
  os << "(" << c.h << ", " << c.s << ", " << c.b << ")";
  return os.str();
}

namespace {

void require_unit(double v, const char* what) {
  if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
    throw ColorRangeError(std::string(what) + " outside [0, 1]: " + std::to_string(v));
  }
}

bool valid_code(const FocoCode& c) {
  return c.h >= 1 && c.h <= kFocoHueLevels && c.s >= 1 && c.s <= kFocoSaturationLevels && c.b >= 1 &&
         c.b <= kFocoBrightnessLevels;
}

int level(double v, double width, int levels) {
  return std::min(static_cast<int>(std::floor(v / width)) + 1, levels);
}

}  // namespace

Hsb rgb_to_hsb(double r, double g, double b) {
  require_unit(r, "red");
  require_unit(g, "green");
  require_unit(b, "blue");
  const double hi = std::max({r, g, b});
  const double lo = std::min({r, g, b});
  const double delta = hi - lo;
  Hsb out;
  out.b = hi;
  out.s = hi > 0.0 ? delta / hi : 0.0;
  if (delta > 0.0) {
    double h;
    if (hi == r) {
      h = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (hi == g) {
      h = 60.0 * ((b - r) / delta + 2.0);
    } else {
      h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
    out.h = h;
  }
  return out;
}

Hsb rgb_to_hsb(Rgb rgb) { return rgb_to_hsb(rgb.r, rgb.g, rgb.b); }

FocoCode foco_quantize(double h, double s, double b) {
  if (!std::isfinite(h) || h < 0.0 || h >= 360.0) {
    throw ColorRangeError("hue outside [0, 360): " + std::to_string(h));
  }
  require_unit(s, "saturation");
  require_unit(b, "brightness");
  return FocoCode{level(h, 360.0 / kFocoHueLevels, kFocoHueLevels),
                  level(s, 1.0 / kFocoSaturationLevels, kFocoSaturationLevels),
                  level(b, 1.0 / kFocoBrightnessLevels, kFocoBrightnessLevels)};
}

FocoCode foco_quantize(Hsb hsb) { return foco_quantize(hsb.h, hsb.s, hsb.b); }

Hsb foco_representative(const FocoCode& code) {
  if (!valid_code(code)) throw ColorRangeError("invalid FOCO code " + to_string(code));
  return Hsb{(code.h - 0.5) * (360.0 / kFocoHueLevels), (code.s - 0.5) / kFocoSaturationLevels,
             (code.b - 0.5) / kFocoBrightnessLevels};
}

ColorHistogram color_histogram(std::span<const Rgb> pixels) {
  if (pixels.empty()) throw Error("color_histogram: no pixels");
  std::map<FocoCode, std::size_t> counts;
  for (const Rgb& p : pixels) ++counts[foco_quantize(rgb_to_hsb(p))];
  ColorHistogram hist;
  const double n = static_cast<double>(pixels.size());
  for (const auto& [code, count] : counts) hist[code] = static_cast<double>(count) / n;
  return hist;
}

ColorFeature build_color_feature(const ColorHistogram& histogram) {
  if (histogram.empty()) throw Error("build_color_feature: empty histogram");
  double total = 0.0;
  std::vector<std::pair<FocoCode, double>> bins;
  for (const auto& [code, ratio] : histogram) {
    if (!valid_code(code)) throw ColorRangeError("invalid FOCO code " + to_string(code));
    require_unit(ratio, "histogram ratio");
    total += ratio;
    bins.emplace_back(code, ratio);
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error("build_color_feature: ratios sum to " + std::to_string(total) + ", expected 1");
  }
  std::stable_sort(bins.begin(), bins.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  ColorFeature feature;
  const std::size_t kept = std::min(bins.size(), kMajorColors);
  for (std::size_t k = 0; k < kept; ++k) {
    const auto& [code, ratio] = bins[k];
    double* block = feature.values.data() + k * kColorBlockSize;
    block[0] = (code.h - 0.5) / kFocoHueLevels;
    block[1] = (code.s - 0.5) / kFocoSaturationLevels;
    block[2] = (code.b - 0.5) / kFocoBrightnessLevels;
    block[3] = ratio;
    block[4] = 1.0;
  }
  return feature;
}

namespace {

std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] != '#') return tok;
    std::string rest;
    std::getline(in, rest);
  }
  throw ParseError("ppm: unexpected end of header");
}

}  // namespace

std::vector<Rgb> read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string magic = next_token(in);
  if (magic != "P3" && magic != "P6") throw ParseError("ppm: unsupported magic '" + magic + "'");
  const std::size_t width = std::stoul(next_token(in));
  const std::size_t height = std::stoul(next_token(in));
  const double maxval = std::stod(next_token(in));
  if (width == 0 || height == 0 || maxval <= 0.0 || maxval > 65535.0) {
    throw ParseError("ppm: invalid dimensions or maxval");
  }
  std::vector<Rgb> pixels(width * height);
  if (magic == "P3") {
    for (Rgb& p : pixels) {
      double r, g, b;
      if (!(in >> r >> g >> b)) throw ParseError("ppm: truncated pixel data");
      p = {r / maxval, g / maxval, b / maxval};
    }
  } else {
    in.get();  // single whitespace after maxval
    const bool wide = maxval > 255.0;
    auto sample = [&]() -> double {
      int hi = in.get();
      if (!wide) {
        if (hi == EOF) throw ParseError("ppm: truncated pixel data");
        return hi / maxval;
      }
      int lo = in.get();
      if (hi == EOF || lo == EOF) throw ParseError("ppm: truncated pixel data");
      return ((hi << 8) | lo) / maxval;
    };
    for (Rgb& p : pixels) {
      p.r = sample();
      p.g = sample();
      p.b = sample();
    }
  }
  return pixels;
}

std::vector<Rgb> read_pixel_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Rgb> pixels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Rgb p;
    if (!(ls >> p.r >> p.g >> p.b)) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 'r g b'");
    }
    pixels.push_back(p);
  }
  return pixels;
}

}  // namespace compat_reason
