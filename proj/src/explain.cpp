#include "compat_reason/explain.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "compat_reason/kvconfig.hpp"
#include "compat_reason/synthdata.hpp"

namespace compat_reason {

std::string template_key(Judgment judgment, const std::optional<Reason>& reason) {
  if (judgment == Judgment::normal) {
    if (reason) throw Error("a normal judgment carries no reason");
    return "normal";
  }
  if (!reason) throw Error(std::string(to_string(judgment)) + " judgment needs a reason");
  return std::string(to_string(judgment)) + "." + std::string(to_string(*reason));
}

std::vector<std::string> template_keys() {
  std::vector<std::string> keys;
  for (Judgment j : {Judgment::good, Judgment::bad}) {
    for (Reason r : kAllReasons) keys.push_back(template_key(j, r));
  }
  keys.push_back("normal");
  return keys;
}

const TemplateTable& TemplateTable::standard() {
  static const TemplateTable table = [] {
    TemplateTable t;
    t.templates = {
        {"good.color", "The {color_t} top and the {color_b} bottom give the outfit a clean color accent."},
        {"good.print", "The {print_t} top and the {print_b} bottom let one print stand out."},
        {"good.design", "The {design_t} top and the {design_b} bottom make a flattering {design_kind} match."},
        {"bad.color", "The {color_t} top and the {color_b} bottom make the colors clash."},
        {"bad.print", "The {print_t} print top and the {print_b} bottom make the outfit too dazzling."},
        {"bad.design", "The {design_t} top and the {design_b} bottom make the {design_kind} too heavy."},
        {"normal", "Nothing in it stands out as especially good or bad."},
    };
    return t;
  }();
  return table;
}

void TemplateTable::validate() const {
  for (const auto& key : template_keys()) {
    if (!templates.count(key)) throw ParseError("template table: missing key '" + key + "'");
  }
  for (const auto& [key, tmpl] : templates) {
    const auto keys = template_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ParseError("template table: unknown key '" + key + "'");
    }
    (void)placeholders(tmpl);
  }
}

TemplateTable TemplateTable::parse(const std::string& text, const std::string& origin) {
  const KeyValueConfig cfg = KeyValueConfig::parse(text, origin);
  TemplateTable t;
  t.templates = cfg.values();
  t.validate();
  return t;
}

TemplateTable TemplateTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open template file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string TemplateTable::to_text() const {
  std::string out;
  for (const auto& key : template_keys()) {
    auto it = templates.find(key);
    if (it != templates.end()) out += key + " = " + it->second + "\n";
  }
  return out;
}

std::vector<std::string> placeholders(const std::string& tmpl) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find_first_of("{}", pos);
    if (open == std::string::npos) break;
    if (tmpl[open] == '}') throw ParseError("template: unmatched '}' in \"" + tmpl + "\"");
    const auto close = tmpl.find_first_of("{}", open + 1);
    if (close == std::string::npos || tmpl[close] == '{') {
      throw ParseError("template: unmatched '{' in \"" + tmpl + "\"");
    }
    if (close == open + 1) throw ParseError("template: empty placeholder in \"" + tmpl + "\"");
    out.push_back(tmpl.substr(open + 1, close - open - 1));
    pos = close + 1;
  }
  return out;
}

std::string display_color(const std::string& value) {
  int h = 0, s = 0, b = 0;
  char tail = 0;
  if (std::sscanf(value.c_str(), " ( %d , %d , %d )%c", &h, &s, &b, &tail) != 3) return value;
  const AttributeCatalog& c = AttributeCatalog::standard();
  const PaletteColor* best = nullptr;
  int best_d = 0;
  for (const auto& p : c.palette) {
    int dh = std::abs(p.code.h - h);
    dh = std::min(dh, kFocoHueLevels - dh);
    const int d = dh * dh + (p.code.s - s) * (p.code.s - s) + (p.code.b - b) * (p.code.b - b);
    if (!best || d < best_d) {
      best = &p;
      best_d = d;
    }
  }
  return best->name;
}

namespace {

const std::string& lookup(const AttributeSet& attrs, const std::string& key) {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw MissingAttributeError("explanation needs attribute '" + key + "'");
  return it->second;
}

std::string design_kind(Factor f) {
  switch (f) {
    case Factor::material: return "material";
    case Factor::silhouette: return "silhouette";
    case Factor::detail: return "design details";
    default: throw Error("not a design factor: " + std::string(to_string(f)));
  }
}

Factor design_factor(const AttributeSet& attrs) {
  const std::string& name = lookup(attrs, "design_factor");
  for (Factor f : {Factor::material, Factor::silhouette, Factor::detail}) {
    if (to_string(f) == name) return f;
  }
  throw MissingAttributeError("design_factor '" + name + "' is not material, silhouette or detail");
}

std::string resolve(const std::string& name, const AttributeSet& attrs) {
  if (name == "design_kind") return design_kind(design_factor(attrs));
  const bool top = name.size() > 2 && name.compare(name.size() - 2, 2, "_t") == 0;
  const bool bottom = name.size() > 2 && name.compare(name.size() - 2, 2, "_b") == 0;
  if (top || bottom) {
    std::string factor = name.substr(0, name.size() - 2);
    if (factor == "design") factor = std::string(to_string(design_factor(attrs)));
    const std::string& v = lookup(attrs, factor + (top ? "_top" : "_bottom"));
    return factor == "color" ? display_color(v) : v;
  }
  return lookup(attrs, name);
}

}  // namespace

std::string generate_explanation(const TemplateTable& table, Judgment judgment, const std::optional<Reason>& reason,
                                 const AttributeSet& attributes) {
  const std::string key = template_key(judgment, reason);
  auto it = table.templates.find(key);
  if (it == table.templates.end()) throw Error("no template for '" + key + "'");
  const std::string& tmpl = it->second;

  std::string body;
  std::size_t pos = 0;
  for (const std::string& name : placeholders(tmpl)) {
    const auto open = tmpl.find('{', pos);
    body += tmpl.substr(pos, open - pos);
    body += resolve(name, attributes);
    pos = open + name.size() + 2;
  }
  body += tmpl.substr(pos);
  return "This outfit is " + std::string(to_string(judgment)) + ". " + body;
}

std::string generate_explanation(Judgment judgment, const std::optional<Reason>& reason,
                                 const AttributeSet& attributes) {
  return generate_explanation(TemplateTable::standard(), judgment, reason, attributes);
}

}  // namespace compat_reason
