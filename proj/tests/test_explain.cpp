#include <doctest.h>

#include <fstream>
#include <set>

#include "compat_reason/explain.hpp"
#include "compat_reason/synthdata.hpp"

using namespace compat_reason;

namespace {

const std::filesystem::path kSource = COMPAT_REASON_SOURCE_DIR;

AttributeSet golden_attributes() {
  return {{"color_top", "(1, 8, 4)"},  {"color_bottom", "cobalt blue"}, {"print_top", "floral"},
          {"print_bottom", "floral"},  {"material_top", "silk"},        {"material_bottom", "denim"},
          {"silhouette_top", "X-line"}, {"silhouette_bottom", "A-line"}, {"detail_top", "wrap"},
          {"detail_bottom", "pleated"}};
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(' ');
  const auto e = s.find_last_not_of(' ');
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

struct GoldenLine {
  std::string key, design_factor, sentence;
};

std::vector<GoldenLine> read_golden() {
  std::ifstream in(kSource / "tests" / "golden" / "explanations.golden");
  REQUIRE(in);
  std::vector<GoldenLine> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto a = line.find('|'), b = line.find('|', a + 1);
    REQUIRE(b != std::string::npos);
    out.push_back({trim(line.substr(0, a)), trim(line.substr(a + 1, b - a - 1)), trim(line.substr(b + 1))});
  }
  return out;
}

std::pair<Judgment, std::optional<Reason>> parse_key(const std::string& key) {
  if (key == "normal") return {Judgment::normal, std::nullopt};
  const auto dot = key.find('.');
  return {parse_judgment(key.substr(0, dot)), parse_reason(key.substr(dot + 1))};
}

}  // namespace

TEST_CASE("worked bad/print example") {
  const AttributeSet a{{"print_top", "floral"}, {"print_bottom", "floral"}};
  CHECK(generate_explanation(Judgment::bad, Reason::print, a) ==
        "This outfit is bad. The floral print top and the floral bottom make the outfit too dazzling.");
}

TEST_CASE("every leaf matches its golden sentence") {
  const auto golden = read_golden();
  std::set<std::string> covered;
  for (const auto& g : golden) {
    AttributeSet a = golden_attributes();
    if (g.design_factor != "-") a["design_factor"] = g.design_factor;
    const auto [j, r] = parse_key(g.key);
    CHECK(generate_explanation(j, r, a) == g.sentence);
    covered.insert(g.key);
  }
  for (const auto& k : template_keys()) CHECK(covered.count(k) == 1);
}

TEST_CASE("shipped template file equals the built-in table") {
  const TemplateTable t = TemplateTable::load(kSource / "data" / "templates.txt");
  CHECK(t.templates == TemplateTable::standard().templates);
  CHECK(TemplateTable::parse(t.to_text()).templates == t.templates);
}

TEST_CASE("custom templates change the wording") {
  std::string text = TemplateTable::standard().to_text();
  text.replace(text.find("make the outfit too dazzling"), 28, "are too busy together");
  const TemplateTable t = TemplateTable::parse(text);
  CHECK(generate_explanation(t, Judgment::bad, Reason::print, golden_attributes()) ==
        "This outfit is bad. The floral print top and the floral bottom are too busy together.");
}

TEST_CASE("table validation") {
  CHECK_THROWS_AS(TemplateTable::parse("normal = ok\n"), ParseError);
  std::string text = TemplateTable::standard().to_text();
  CHECK_THROWS_AS(TemplateTable::parse(text + "ugly.print = x\n"), ParseError);
  CHECK_THROWS_AS(placeholders("a {b"), ParseError);
  CHECK_THROWS_AS(placeholders("a }b"), ParseError);
  CHECK_THROWS_AS(placeholders("a {b{c}}"), ParseError);
  CHECK_THROWS_AS(placeholders("a {}"), ParseError);
  CHECK(placeholders("{x} and {y_t}.") == std::vector<std::string>{"x", "y_t"});
}

TEST_CASE("contract violations") {
  CHECK_THROWS_AS(generate_explanation(Judgment::normal, Reason::color, {}), Error);
  CHECK_THROWS_AS(generate_explanation(Judgment::good, std::nullopt, {}), Error);
  CHECK_THROWS_AS(generate_explanation(Judgment::bad, Reason::print, {{"print_top", "floral"}}),
                  MissingAttributeError);
  CHECK_THROWS_AS(generate_explanation(Judgment::bad, Reason::design, golden_attributes()), MissingAttributeError);
  AttributeSet a = golden_attributes();
  a["design_factor"] = "print";
  CHECK_THROWS_AS(generate_explanation(Judgment::bad, Reason::design, a), MissingAttributeError);
  CHECK(generate_explanation(Judgment::normal, std::nullopt, {}) ==
        "This outfit is normal. Nothing in it stands out as especially good or bad.");
}

TEST_CASE("colour codes show as palette names") {
  CHECK(display_color("(1, 8, 4)") == "candy apple red");
  CHECK(display_color("(10,7,4)") == "cobalt blue");
  CHECK(display_color("(15, 1, 1)") == "black");  // hue wraps around
  CHECK(display_color("navy") == "navy");
  CHECK(display_color("(1, 8, 4) x") == "(1, 8, 4) x");
}

TEST_CASE("fuzz: generated outfits always explain") {
  GenerationConfig g;
  g.n_train = 3000;
  g.n_val = 0;
  g.n_test = 0;
  g.ambiguous = true;
  g.noise = 0.0;
  const Dataset d = generate_dataset(g, 77);
  for (const auto& r : d.train) {
    const std::string s = generate_explanation(r.judgment, r.reason, r.attributes);
    REQUIRE(s.rfind("This outfit is " + std::string(to_string(r.judgment)) + ". ", 0) == 0);
    CHECK(s.find('{') == std::string::npos);
    CHECK(s.find('}') == std::string::npos);
  }

  // any attribute values, any leaf, any design factor
  const AttributeCatalog& c = AttributeCatalog::standard();
  Rng rng(3);
  for (int i = 0; i < 5000; ++i) {
    AttributeSet a;
    for (Factor f : kAllFactors) {
      a[std::string(to_string(f)) + "_top"] = c.name(f, rng.below(c.size(f)));
      a[std::string(to_string(f)) + "_bottom"] = c.name(f, rng.below(c.size(f)));
    }
    const Factor design[] = {Factor::material, Factor::silhouette, Factor::detail};
    a["design_factor"] = std::string(to_string(design[rng.below(3)]));
    for (const auto& key : template_keys()) {
      const auto [j, r] = parse_key(key);
      const std::string s = generate_explanation(j, r, a);
      CHECK(s.find('{') == std::string::npos);
    }
  }
}
