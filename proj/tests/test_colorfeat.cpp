#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "compat_reason/colorfeat.hpp"
#include "compat_reason/random.hpp"

using namespace compat_reason;

namespace {

// Level by scanning bin edges, independent of the floor-based quantizer.
int oracle_level(double v, double lo, double hi, int levels) {
  const double width = (hi - lo) / levels;
  for (int k = 1; k < levels; ++k) {
    if (v < lo + width * k) return k;
  }
  return levels;
}

FocoCode oracle_code(const Hsb& c) {
  return {oracle_level(c.h, 0.0, 360.0, 15), oracle_level(c.s, 0.0, 1.0, 8), oracle_level(c.b, 0.0, 1.0, 6)};
}

// Textbook hexcone HSV.
Hsb oracle_hsb(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r) {
      h = 60.0 * std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
      h = 60.0 * ((b - r) / d + 2.0);
    } else {
      h = 60.0 * ((r - g) / d + 4.0);
    }
  }
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  return {h, mx > 0.0 ? d / mx : 0.0, mx};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("compat_reason_colorfeat_" + name);
}

}  // namespace

TEST_CASE("foco boundary codes") {
  CHECK(foco_quantize(rgb_to_hsb(0.0, 0.0, 0.0)) == FocoCode{1, 1, 1});
  CHECK(foco_quantize(359.9, 1.0, 1.0) == FocoCode{15, 8, 6});
  CHECK(foco_quantize(0.0, 0.0, 0.0) == FocoCode{1, 1, 1});
  CHECK(foco_quantize(24.0, 0.125, 1.0 / 6.0) == FocoCode{2, 2, 2});
  CHECK(foco_quantize(23.999, 0.1249, 0.1666) == FocoCode{1, 1, 1});
  CHECK(foco_quantize(rgb_to_hsb(1.0, 1.0, 1.0)) == FocoCode{1, 1, 6});
}

TEST_CASE("saturated dark red lands in the candy apple red bin") {
  // Calibration check: a fully saturated red at 60% brightness.
  CHECK(foco_quantize(rgb_to_hsb(0.6, 0.0, 0.0)) == FocoCode{1, 8, 4});
  CHECK(foco_quantize(rgb_to_hsb(0.6, 0.05, 0.02)) == FocoCode{1, 8, 4});
}

TEST_CASE("rgb to hsb matches the hexcone model") {
  Rng rng(11);
  for (int i = 0; i < 5000; ++i) {
    const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
    const Hsb got = rgb_to_hsb(r, g, b);
    const Hsb want = oracle_hsb(r, g, b);
    CHECK(got.h == doctest::Approx(want.h).epsilon(1e-12));
    CHECK(got.s == doctest::Approx(want.s).epsilon(1e-12));
    CHECK(got.b == doctest::Approx(want.b).epsilon(1e-12));
  }
  CHECK(rgb_to_hsb(0.0, 1.0, 0.0).h == doctest::Approx(120.0));
  CHECK(rgb_to_hsb(0.0, 0.0, 1.0).h == doctest::Approx(240.0));
  CHECK(rgb_to_hsb(0.5, 0.5, 0.5).h == 0.0);
}

TEST_CASE("quantizer agrees with the edge scan and stays in range") {
  Rng rng(12);
  for (int i = 0; i < 20000; ++i) {
    const Hsb c{rng.uniform(0.0, 360.0), rng.uniform(), rng.uniform()};
    const FocoCode code = foco_quantize(c);
    REQUIRE(code == oracle_code(c));
    CHECK(code.h >= 1);
    CHECK(code.h <= 15);
    CHECK(code.s >= 1);
    CHECK(code.s <= 8);
    CHECK(code.b >= 1);
    CHECK(code.b <= 6);
  }
  // Exact edges and the closed upper ends of s and b.
  for (int k = 0; k <= 8; ++k) {
    const double s = k / 8.0;
    CHECK(foco_quantize(0.0, s, 0.5).s == std::min(k + 1, 8));
  }
  for (int k = 0; k < 15; ++k) CHECK(foco_quantize(24.0 * k, 0.0, 0.0).h == k + 1);
}

TEST_CASE("representatives re-quantize to their own code") {
  for (int h = 1; h <= 15; ++h) {
    for (int s = 1; s <= 8; ++s) {
      for (int b = 1; b <= 6; ++b) {
        CHECK(foco_quantize(foco_representative({h, s, b})) == FocoCode{h, s, b});
      }
    }
  }
  CHECK_THROWS_AS(foco_representative({0, 1, 1}), ColorRangeError);
  CHECK_THROWS_AS(foco_representative({1, 9, 1}), ColorRangeError);
}

TEST_CASE("out of range colours are rejected") {
  CHECK_THROWS_AS(foco_quantize(360.0, 0.5, 0.5), ColorRangeError);
  CHECK_THROWS_AS(foco_quantize(-0.1, 0.5, 0.5), ColorRangeError);
  CHECK_THROWS_AS(foco_quantize(10.0, 1.01, 0.5), ColorRangeError);
  CHECK_THROWS_AS(foco_quantize(10.0, 0.5, -0.01), ColorRangeError);
  CHECK_THROWS_AS(foco_quantize(std::nan(""), 0.5, 0.5), ColorRangeError);
  CHECK_THROWS_AS(rgb_to_hsb(1.2, 0.0, 0.0), ColorRangeError);
  CHECK_THROWS_AS(rgb_to_hsb(0.0, -0.5, 0.0), ColorRangeError);
}

TEST_CASE("histogram of a random image matches pixel counting") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Rgb> pixels(64 * 64);
    // A few dominant colours plus noise pixels.
    std::vector<Rgb> palette;
    for (int k = 0; k < 7; ++k) palette.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    for (auto& p : pixels) {
      p = rng.uniform() < 0.8 ? palette[rng.below(palette.size())] : Rgb{rng.uniform(), rng.uniform(), rng.uniform()};
    }
    std::map<FocoCode, int> counts;
    for (const auto& p : pixels) ++counts[oracle_code(oracle_hsb(p.r, p.g, p.b))];

    const ColorHistogram hist = color_histogram(pixels);
    REQUIRE(hist.size() == counts.size());
    double total = 0.0;
    for (const auto& [code, ratio] : hist) {
      REQUIRE(counts.count(code) == 1);
      CHECK(ratio == doctest::Approx(counts[code] / 4096.0).epsilon(1e-12));
      total += ratio;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);

    // Pixel order does not matter.
    std::vector<Rgb> shuffled = pixels;
    rng.shuffle(shuffled);
    const ColorHistogram again = color_histogram(shuffled);
    REQUIRE(again.size() == hist.size());
    for (const auto& [code, ratio] : hist) CHECK(again.at(code) == doctest::Approx(ratio).epsilon(1e-12));
  }
  CHECK_THROWS_AS(color_histogram(std::vector<Rgb>{}), Error);
}

TEST_CASE("single colour feature block") {
  const ColorFeature f = build_color_feature({{FocoCode{1, 8, 4}, 1.0}});
  const auto b0 = f.block(0);
  CHECK(b0[0] == doctest::Approx(0.5 / 15.0).epsilon(1e-15));
  CHECK(b0[1] == doctest::Approx(0.9375).epsilon(1e-15));
  CHECK(b0[2] == doctest::Approx(3.5 / 6.0).epsilon(1e-15));
  CHECK(b0[3] == 1.0);
  CHECK(b0[4] == 1.0);
  for (std::size_t i = kColorBlockSize; i < kColorFeatureDim; ++i) CHECK(f.values[i] == 0.0);
}

TEST_CASE("top five bins are chosen by ratio with code order on ties") {
  const ColorHistogram hist{{{3, 2, 1}, 0.10}, {{1, 1, 1}, 0.30}, {{2, 2, 2}, 0.10},
                            {{9, 4, 5}, 0.20}, {{4, 4, 4}, 0.05}, {{5, 5, 5}, 0.25}};
  const ColorFeature f = build_color_feature(hist);
  const std::vector<FocoCode> expected{{1, 1, 1}, {5, 5, 5}, {9, 4, 5}, {2, 2, 2}, {3, 2, 1}};
  for (std::size_t k = 0; k < kMajorColors; ++k) {
    const auto b = f.block(k);
    const FocoCode& c = expected[k];
    CHECK(b[0] == doctest::Approx((c.h - 0.5) / 15.0));
    CHECK(b[1] == doctest::Approx((c.s - 0.5) / 8.0));
    CHECK(b[2] == doctest::Approx((c.b - 0.5) / 6.0));
    CHECK(b[3] == doctest::Approx(hist.at(c)));
    CHECK(b[4] == 1.0);
  }
}

TEST_CASE("random histograms match a sort oracle") {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    ColorHistogram hist;
    const std::size_t bins = 1 + rng.below(12);
    while (hist.size() < bins) {
      hist[FocoCode{1 + static_cast<int>(rng.below(15)), 1 + static_cast<int>(rng.below(8)),
                    1 + static_cast<int>(rng.below(6))}] = 1.0 + static_cast<double>(rng.below(4));
    }
    double total = 0.0;
    for (auto& [c, r] : hist) total += r;
    for (auto& [c, r] : hist) r /= total;

    std::vector<std::pair<FocoCode, double>> order(hist.begin(), hist.end());
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    const ColorFeature f = build_color_feature(hist);
    double kept = 0.0;
    for (std::size_t k = 0; k < kMajorColors; ++k) {
      const auto b = f.block(k);
      if (k < order.size()) {
        CHECK(b[0] == doctest::Approx((order[k].first.h - 0.5) / 15.0));
        CHECK(b[1] == doctest::Approx((order[k].first.s - 0.5) / 8.0));
        CHECK(b[2] == doctest::Approx((order[k].first.b - 0.5) / 6.0));
        CHECK(b[3] == order[k].second);
        CHECK(b[4] == 1.0);
        kept += b[3];
      } else {
        for (double v : b) CHECK(v == 0.0);
      }
    }
    CHECK(kept <= 1.0 + 1e-12);
    if (order.size() <= kMajorColors) CHECK(kept == doctest::Approx(1.0));
  }
}

TEST_CASE("invalid histograms are rejected") {
  CHECK_THROWS_AS(build_color_feature({}), Error);
  CHECK_THROWS_AS(build_color_feature({{FocoCode{1, 1, 1}, 0.5}}), Error);
  CHECK_THROWS_AS(build_color_feature({{FocoCode{16, 1, 1}, 1.0}}), ColorRangeError);
  CHECK_THROWS_AS(build_color_feature({{FocoCode{1, 1, 1}, 1.5}, {FocoCode{1, 1, 2}, -0.5}}), Error);
}

TEST_CASE("ppm and pixel text readers") {
  const auto p3 = temp_file("p3.ppm");
  {
    std::ofstream out(p3);
    out << "P3\n# comment\n2 1\n255\n255 0 0   0 0 255\n";
  }
  auto px = read_ppm(p3);
  REQUIRE(px.size() == 2);
  CHECK(px[0].r == 1.0);
  CHECK(px[0].g == 0.0);
  CHECK(px[1].b == 1.0);

  const auto p6 = temp_file("p6.ppm");
  {
    std::ofstream out(p6, std::ios::binary);
    out << "P6 1 2 255\n";
    const unsigned char bytes[] = {0, 255, 0, 51, 51, 51};
    out.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
  }
  px = read_ppm(p6);
  REQUIRE(px.size() == 2);
  CHECK(px[0].g == 1.0);
  CHECK(px[1].r == doctest::Approx(0.2));

  const auto truncated = temp_file("short.ppm");
  {
    std::ofstream out(truncated, std::ios::binary);
    out << "P6 2 2 255\n" << "abc";
  }
  CHECK_THROWS_AS(read_ppm(truncated), ParseError);

  const auto bad = temp_file("bad.ppm");
  {
    std::ofstream out(bad);
    out << "P5 1 1 255\n0\n";
  }
  CHECK_THROWS_AS(read_ppm(bad), ParseError);

  const auto txt = temp_file("pixels.txt");
  {
    std::ofstream out(txt);
    out << "0.6 0 0\n\n0.6 0 0\n";
  }
  const auto hist = color_histogram(read_pixel_text(txt));
  REQUIRE(hist.size() == 1);
  CHECK(hist.begin()->first == FocoCode{1, 8, 4});

  const auto broken = temp_file("broken.txt");
  {
    std::ofstream out(broken);
    out << "0.1 0.2\n";
  }
  CHECK_THROWS_AS(read_pixel_text(broken), ParseError);
  CHECK_THROWS_AS(read_ppm(temp_file("missing.ppm")), Error);
}
