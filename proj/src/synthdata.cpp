#include "compat_reason/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace compat_reason {

const AttributeCatalog& AttributeCatalog::standard() {
  static const AttributeCatalog catalog = [] {
    AttributeCatalog c;
    c.palette = {
        {"candy apple red", {1, 8, 4}, Tone::vivid_warm},
        {"pink yarrow", {14, 6, 5}, Tone::vivid_warm},
        {"tangerine", {2, 8, 6}, Tone::vivid_warm},
        {"golden yellow", {3, 8, 6}, Tone::vivid_warm},
        {"cadmium green", {6, 8, 4}, Tone::vivid_cool},
        {"cobalt blue", {10, 7, 4}, Tone::vivid_cool},
        {"turquoise", {8, 6, 5}, Tone::vivid_cool},
        {"royal purple", {12, 7, 3}, Tone::vivid_cool},
        {"black", {1, 1, 1}, Tone::neutral},
        {"white", {1, 1, 6}, Tone::neutral},
        {"grey", {1, 1, 4}, Tone::neutral},
        {"camel", {2, 4, 5}, Tone::neutral},
        {"blush pink", {15, 2, 6}, Tone::pastel},
        {"sky blue", {9, 3, 6}, Tone::pastel},
        {"mint", {7, 3, 6}, Tone::pastel},
        {"lavender", {12, 2, 6}, Tone::pastel},
    };
    c.prints = {"solid",    "stripe",  "polka dot", "letter",     "graphic", "abstract", "allover",
                "animal",   "floral",  "plaid",     "paisley",    "camouflage", "tie-dye", "geometric"};
    c.print_kind = {PrintKind::plain, PrintKind::subtle, PrintKind::subtle, PrintKind::subtle, PrintKind::subtle,
                    PrintKind::loud,  PrintKind::loud,   PrintKind::loud,   PrintKind::loud,   PrintKind::loud,
                    PrintKind::loud,  PrintKind::loud,   PrintKind::loud,   PrintKind::loud};
    c.materials = {"knit", "cotton", "linen", "leather", "denim", "wool", "velvet", "lace", "chiffon", "silk"};
    c.material_kind = {MaterialKind::casual, MaterialKind::casual, MaterialKind::casual, MaterialKind::heavy,
                       MaterialKind::heavy,  MaterialKind::heavy,  MaterialKind::heavy,  MaterialKind::sheer,
                       MaterialKind::sheer,  MaterialKind::sheer};
    c.silhouettes = {"A-line", "H-line", "X-line", "O-line", "peg-top"};
    c.details = {"tiered", "ruffle", "bow", "lace-up", "wrap", "pleated", "slit", "button"};
    return c;
  }();
  return catalog;
}

std::size_t AttributeCatalog::size(Factor f) const {
  switch (f) {
    case Factor::color: return palette.size();
    case Factor::print: return prints.size();
    case Factor::material: return materials.size();
    case Factor::silhouette: return silhouettes.size();
    case Factor::detail: return details.size();
  }
  return 0;
}

const std::string& AttributeCatalog::name(Factor f, std::size_t index) const {
  if (index >= size(f)) throw DimensionError("attribute index out of range for " + std::string(to_string(f)));
  switch (f) {
    case Factor::color: return palette[index].name;
    case Factor::print: return prints[index];
    case Factor::material: return materials[index];
    case Factor::silhouette: return silhouettes[index];
    case Factor::detail: return details[index];
  }
  throw Error("unknown factor");
}

std::size_t AttributeCatalog::index_of_name(Factor f, const std::string& n) const {
  for (std::size_t i = 0; i < size(f); ++i) {
    if (name(f, i) == n) return i;
  }
  throw ParseError("unknown " + std::string(to_string(f)) + " attribute '" + n + "'");
}

namespace {

using Pairs = std::set<std::pair<std::size_t, std::size_t>>;

template <class Pred>
Pairs pairs_where(std::size_t n, Pred pred) {
  Pairs out;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t b = 0; b < n; ++b) {
      if (pred(t, b)) out.insert({t, b});
    }
  }
  return out;
}

}  // namespace

RuleSet RuleSet::standard(const AttributeCatalog& c) {
  auto tone = [&c](std::size_t i) { return c.palette[i].tone; };
  auto vivid = [&](std::size_t i) { return tone(i) == Tone::vivid_warm || tone(i) == Tone::vivid_cool; };
  auto print = [&c](std::size_t i) { return c.print_kind[i]; };
  auto material = [&c](std::size_t i) { return c.material_kind[i]; };
  auto silhouette = [&c](std::size_t i) { return c.silhouettes[i]; };
  auto detail = [&c](std::size_t i) { return c.details[i]; };
  auto bulky = [&](std::size_t i) { return silhouette(i) == "O-line" || silhouette(i) == "peg-top"; };
  auto fussy = [&](std::size_t i) {
    const std::string& d = detail(i);
    return d == "tiered" || d == "ruffle" || d == "bow" || d == "lace-up";
  };

  RuleSet rs;
  rs.rules.push_back({"color_clash", Factor::color, Judgment::bad,
                      pairs_where(c.palette.size(), [&](auto t, auto b) {
                        return (tone(t) == Tone::vivid_warm && tone(b) == Tone::vivid_cool) ||
                               (tone(t) == Tone::vivid_cool && tone(b) == Tone::vivid_warm);
                      })});
  rs.rules.push_back({"color_accent", Factor::color, Judgment::good,
                      pairs_where(c.palette.size(), [&](auto t, auto b) {
                        return (tone(t) == Tone::neutral && vivid(b)) || (vivid(t) && tone(b) == Tone::neutral);
                      })});
  rs.rules.push_back({"print_dazzle", Factor::print, Judgment::bad, pairs_where(c.prints.size(), [&](auto t, auto b) {
                        return print(t) == PrintKind::loud && print(b) == PrintKind::loud;
                      })});
  rs.rules.push_back({"print_statement", Factor::print, Judgment::good,
                      pairs_where(c.prints.size(), [&](auto t, auto b) {
                        return (print(t) == PrintKind::loud && print(b) == PrintKind::plain) ||
                               (print(t) == PrintKind::plain && print(b) == PrintKind::loud);
                      })});
  rs.rules.push_back({"material_heavy", Factor::material, Judgment::bad,
                      pairs_where(c.materials.size(), [&](auto t, auto b) {
                        return material(t) == MaterialKind::heavy && material(b) == MaterialKind::heavy;
                      })});
  rs.rules.push_back({"material_contrast", Factor::material, Judgment::good,
                      pairs_where(c.materials.size(), [&](auto t, auto b) {
                        return material(t) == MaterialKind::sheer && material(b) == MaterialKind::heavy;
                      })});
  rs.rules.push_back({"silhouette_bulky", Factor::silhouette, Judgment::bad,
                      pairs_where(c.silhouettes.size(), [&](auto t, auto b) { return bulky(t) && bulky(b); })});
  rs.rules.push_back({"silhouette_balance", Factor::silhouette, Judgment::good,
                      pairs_where(c.silhouettes.size(), [&](auto t, auto b) {
                        return (silhouette(t) == "X-line" && silhouette(b) == "A-line") ||
                               (silhouette(t) == "H-line" && silhouette(b) == "peg-top");
                      })});
  rs.rules.push_back({"detail_fussy", Factor::detail, Judgment::bad,
                      pairs_where(c.details.size(), [&](auto t, auto b) { return fussy(t) && fussy(b); })});
  rs.rules.push_back({"detail_accent", Factor::detail, Judgment::good,
                      pairs_where(c.details.size(), [&](auto t, auto b) {
                        return (detail(t) == "wrap" && detail(b) == "pleated") ||
                               (detail(t) == "button" && detail(b) == "slit");
                      })});
  return rs;
}

OutfitLabel label_outfit(const RuleSet& rules, const GarmentAttributes& top, const GarmentAttributes& bottom) {
  OutfitLabel label;
  std::optional<std::size_t> clash;
  std::optional<std::size_t> highlight;
  auto earlier = [&rules](std::optional<std::size_t> cur, std::size_t cand) {
    return !cur || index_of(rules.rules[cand].factor) < index_of(rules.rules[*cur].factor);
  };
  for (std::size_t i = 0; i < rules.rules.size(); ++i) {
    const Rule& r = rules.rules[i];
    if (!r.fires(top, bottom)) continue;
    label.fired.push_back(i);
    if (r.effect == Judgment::bad) {
      if (earlier(clash, i)) clash = i;
    } else if (earlier(highlight, i)) {
      highlight = i;
    }
  }
  const std::optional<std::size_t> decisive = clash ? clash : highlight;
  if (decisive) {
    const Rule& r = rules.rules[*decisive];
    label.judgment = r.effect;
    label.decisive_factor = r.factor;
    label.decisive_rule = decisive;
    label.reason = reason_of(r.factor);
  }
  return label;
}

GenerationConfig GenerationConfig::from_config(const KeyValueConfig& cfg, const std::string& section) {
  const std::string p = section.empty() ? "" : section + ".";
  cfg.reject_unknown({p + "n_train", p + "n_val", p + "n_test", p + "noise", p + "ratio_good", p + "ratio_normal",
                      p + "ratio_bad", p + "ambiguous", p + "confound"},
                     p);
  GenerationConfig c;
  auto count = [&](const char* key, std::size_t& out) {
    if (auto v = cfg.get_int(p + key)) {
      if (*v < 0) throw ParseError("key '" + p + key + "' must be non-negative");
      out = static_cast<std::size_t>(*v);
    }
  };
  count("n_train", c.n_train);
  count("n_val", c.n_val);
  count("n_test", c.n_test);
  if (auto v = cfg.get_double(p + "noise")) c.noise = *v;
  if (auto v = cfg.get_double(p + "ratio_good")) c.ratios[0] = *v;
  if (auto v = cfg.get_double(p + "ratio_normal")) c.ratios[1] = *v;
  if (auto v = cfg.get_double(p + "ratio_bad")) c.ratios[2] = *v;
  if (auto v = cfg.get_bool(p + "ambiguous")) c.ambiguous = *v;
  if (auto v = cfg.get_double(p + "confound")) c.confound = *v;
  validate_generation_config(c);
  return c;
}

void validate_generation_config(const GenerationConfig& c) {
  double total = 0.0;
  for (double r : c.ratios) {
    if (!std::isfinite(r) || r < 0.0) throw Error("infeasible class ratios: each ratio must be in [0, 1]");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw Error("infeasible class ratios: they sum to " + std::to_string(total) + ", expected 1");
  }
  if (!std::isfinite(c.noise) || c.noise < 0.0) throw Error("noise must be a non-negative number");
  if (!(c.confound >= 0.0 && c.confound <= 1.0)) throw Error("confound must be in [0, 1]");
}

std::array<std::size_t, kNumJudgments> class_counts(std::size_t n, const std::array<double, kNumJudgments>& ratios) {
  std::array<std::size_t, kNumJudgments> counts{};
  std::array<double, kNumJudgments> rem{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < kNumJudgments; ++k) {
    const double exact = ratios[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - std::floor(exact);
    assigned += counts[k];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < kNumJudgments; ++k) {
      if (rem[k] > rem[best]) best = k;
    }
    ++counts[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return counts;
}

namespace {

constexpr std::size_t kMaxAttempts = 100000;

struct Sampler {
  const AttributeCatalog& catalog;
  const RuleSet& rules;
  Rng& rng;

  bool factor_fires(Factor f, std::size_t t, std::size_t b) const {
    for (const Rule& r : rules.rules) {
      if (r.factor == f && r.pairs.count({t, b})) return true;
    }
    return false;
  }

  std::pair<std::size_t, std::size_t> quiet_pair(Factor f) {
    const std::size_t n = catalog.size(f);
    for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const std::size_t t = rng.below(n);
      const std::size_t b = rng.below(n);
      if (!factor_fires(f, t, b)) return {t, b};
    }
    throw Error("no rule-free attribute pair for " + std::string(to_string(f)));
  }

  std::pair<std::size_t, std::size_t> random_pair(Factor f) {
    const std::size_t n = catalog.size(f);
    const std::size_t t = rng.below(n);
    return {t, rng.below(n)};
  }

  std::pair<std::size_t, std::size_t> planted_pair(const Rule& r) {
    auto it = r.pairs.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(rng.below(r.pairs.size())));
    return *it;
  }

  /// Rule-free pairs sharing the top or the bottom attribute with a pair of the (f, effect) rule.
  std::pair<std::size_t, std::size_t> near_miss_pair(Factor f, Judgment effect) {
    auto& cache = near_miss_[index_of(f)][effect == Judgment::good ? 0 : 1];
    if (cache.empty()) {
      const Rule& r = rule_for(f, effect);
      const std::size_t n = catalog.size(f);
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t b = 0; b < n; ++b) {
          if (factor_fires(f, t, b)) continue;
          for (const auto& [rt, rb] : r.pairs) {
            if (rt == t || rb == b) {
              cache.push_back({t, b});
              break;
            }
          }
        }
      }
      if (cache.empty()) throw Error("no near-miss pair for " + std::string(to_string(f)));
    }
    return cache[rng.below(cache.size())];
  }

  const Rule& rule_for(Factor f, Judgment effect) const {
    for (const Rule& r : rules.rules) {
      if (r.factor == f && r.effect == effect) return r;
    }
    throw Error("no rule for factor " + std::string(to_string(f)));
  }

  std::array<std::array<std::vector<std::pair<std::size_t, std::size_t>>, 2>, kNumFactors> near_miss_{};
};

std::string attribute_key(Factor f, bool top) { return std::string(to_string(f)) + (top ? "_top" : "_bottom"); }

ColorHistogram synthetic_histogram(std::size_t main, const AttributeCatalog& c, Rng& rng) {
  ColorHistogram hist;
  const std::size_t extra = rng.below(4);
  if (extra == 0) {
    hist[c.palette[main].code] = 1.0;
    return hist;
  }
  const double dominant = rng.uniform(0.55, 0.85);
  hist[c.palette[main].code] = dominant;
  std::vector<double> weights;
  std::vector<std::size_t> others;
  while (others.size() < extra) {
    const std::size_t k = rng.below(c.palette.size());
    if (k == main || std::find(others.begin(), others.end(), k) != others.end()) continue;
    others.push_back(k);
    weights.push_back(rng.uniform(0.2, 1.0));
  }
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  double used = dominant;
  for (std::size_t i = 0; i < others.size(); ++i) {
    const double r = i + 1 == others.size() ? 1.0 - used : (1.0 - dominant) * weights[i] / wsum;
    hist[c.palette[others[i]].code] = r;
    used += r;
  }
  return hist;
}

const RuleSet& standard_rules() {
  static const RuleSet rs = RuleSet::standard(AttributeCatalog::standard());
  return rs;
}

void annotate(OutfitRecord& r, const RuleSet& rules, const OutfitLabel& label) {
  if (!label.decisive_rule) return;
  r.attributes["rule"] = rules.rules[*label.decisive_rule].name;
  if (reason_of(*label.decisive_factor) == Reason::design) {
    r.attributes["design_factor"] = std::string(to_string(*label.decisive_factor));
  }
}

}  // namespace

GarmentFeatures garment_features(const GarmentAttributes& attrs, double noise, Rng& rng) {
  const AttributeCatalog& c = AttributeCatalog::standard();
  GarmentFeatures g;
  g[Factor::color] = build_color_feature(synthetic_histogram(attrs[index_of(Factor::color)], c, rng)).to_vector();
  for (Factor f : kAllFactors) {
    if (f == Factor::color) continue;
    g[f].assign(c.size(f), 0.0);
    g[f][attrs[index_of(f)]] = 1.0;
  }
  if (noise > 0.0) {
    for (Factor f : kAllFactors) {
      for (double& v : g[f]) v += noise * rng.normal();
    }
  }
  return g;
}

std::vector<OutfitRecord> generate_split(const GenerationConfig& config, std::size_t n, const std::string& prefix,
                                         Rng& rng) {
  validate_generation_config(config);
  const AttributeCatalog& catalog = AttributeCatalog::standard();
  const RuleSet& rules = standard_rules();
  Sampler sampler{catalog, rules, rng};

  // Exact class counts, reasons spread evenly within good and bad.
  struct Target {
    Judgment judgment;
    std::optional<Reason> reason;
  };
  std::vector<Target> targets;
  const auto counts = class_counts(n, config.ratios);
  for (Judgment j : kAllJudgments) {
    const std::size_t count = counts[index_of(j)];
    for (std::size_t i = 0; i < count; ++i) {
      targets.push_back({j, j == Judgment::normal ? std::nullopt
                                                  : std::optional<Reason>(kAllReasons[i % kNumReasons])});
    }
  }
  rng.shuffle(targets);

  std::vector<OutfitRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Target& target = targets[i];
    GarmentAttributes top{}, bottom{};
    OutfitLabel label;
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < kMaxAttempts && !accepted; ++attempt) {
      std::optional<Factor> planted;
      if (target.reason) {
        switch (*target.reason) {
          case Reason::color: planted = Factor::color; break;
          case Reason::print: planted = Factor::print; break;
          case Reason::design: {
            static constexpr Factor kDesign[] = {Factor::material, Factor::silhouette, Factor::detail};
            planted = kDesign[rng.below(3)];
            break;
          }
        }
      }
      for (Factor f : kAllFactors) {
        std::pair<std::size_t, std::size_t> p;
        if (planted && f == *planted) {
          p = sampler.planted_pair(sampler.rule_for(f, target.judgment));
        } else if (config.ambiguous && target.judgment != Judgment::normal) {
          p = sampler.random_pair(f);
        } else if (target.judgment != Judgment::normal && rng.uniform() < config.confound) {
          p = sampler.near_miss_pair(f, target.judgment);
        } else {
          p = sampler.quiet_pair(f);
        }
        top[index_of(f)] = p.first;
        bottom[index_of(f)] = p.second;
      }
      label = label_outfit(rules, top, bottom);
      accepted = label.judgment == target.judgment && label.reason == target.reason &&
                 (!planted || label.decisive_factor == planted);
    }
    if (!accepted) throw Error("could not realize a " + std::string(to_string(target.judgment)) + " outfit");

    OutfitRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "%06zu", i);
    r.outfit_id = prefix + id;
    r.top = garment_features(top, config.noise, rng);
    r.bottom = garment_features(bottom, config.noise, rng);
    r.judgment = label.judgment;
    r.reason = label.reason;
    for (Factor f : kAllFactors) {
      r.attributes[attribute_key(f, true)] = catalog.name(f, top[index_of(f)]);
      r.attributes[attribute_key(f, false)] = catalog.name(f, bottom[index_of(f)]);
    }
    annotate(r, rules, label);
    out.push_back(std::move(r));
  }
  return out;
}

Dataset generate_dataset(const GenerationConfig& config, std::uint64_t seed) {
  validate_generation_config(config);
  Rng root(seed);
  Rng train_rng = root.split();
  Rng val_rng = root.split();
  Rng test_rng = root.split();
  const std::string tag = "s" + std::to_string(seed) + "-";
  Dataset d;
  d.train = generate_split(config, config.n_train, tag + "train-", train_rng);
  d.val = generate_split(config, config.n_val, tag + "val-", val_rng);
  d.test = generate_split(config, config.n_test, tag + "test-", test_rng);
  return d;
}

std::pair<GarmentAttributes, GarmentAttributes> record_attributes(const OutfitRecord& record) {
  const AttributeCatalog& c = AttributeCatalog::standard();
  GarmentAttributes top{}, bottom{};
  for (Factor f : kAllFactors) {
    for (bool is_top : {true, false}) {
      const std::string key = attribute_key(f, is_top);
      auto it = record.attributes.find(key);
      if (it == record.attributes.end()) throw ParseError(record.outfit_id + ": missing attribute '" + key + "'");
      (is_top ? top : bottom)[index_of(f)] = c.index_of_name(f, it->second);
    }
  }
  return {top, bottom};
}

std::vector<OutfitRecord> make_test_random(const std::vector<OutfitRecord>& test, std::uint64_t seed) {
  const RuleSet& rules = standard_rules();
  Rng rng(seed);
  std::vector<std::size_t> perm(test.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);

  std::vector<OutfitRecord> out;
  out.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const OutfitRecord& t = test[i];
    const OutfitRecord& b = test[perm[i]];
    const GarmentAttributes top = record_attributes(t).first;
    const GarmentAttributes bottom = record_attributes(b).second;
    const OutfitLabel label = label_outfit(rules, top, bottom);

    OutfitRecord r;
    r.outfit_id = t.outfit_id + "+" + b.outfit_id;
    r.top = t.top;
    r.bottom = b.bottom;
    r.judgment = label.judgment;
    r.reason = label.reason;
    for (Factor f : kAllFactors) {
      r.attributes[attribute_key(f, true)] = t.attributes.at(attribute_key(f, true));
      r.attributes[attribute_key(f, false)] = b.attributes.at(attribute_key(f, false));
    }
    annotate(r, rules, label);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace compat_reason
