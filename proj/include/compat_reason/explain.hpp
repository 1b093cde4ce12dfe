#pragma once

// Sentence templates for explaining a verdict.
//
// A table maps "judgment.reason" (or "normal") to one template. The
// sentence is "This outfit is <judgment>. " followed by the filled template.
//
// Placeholders in braces:
//   {color_t} {color_b} {print_t} ...   attribute "<factor>_top" / "<factor>_bottom"
//   {design_t} {design_b}               same, for the factor named by attribute "design_factor"
//   {design_kind}                       "material", "silhouette" or "design details"
//   {anything_else}                     attribute of that exact name
// Colour values written as FOCO codes, e.g. "(1, 8, 4)", are shown as the
// palette colour name.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "compat_reason/records.hpp"
#include "compat_reason/types.hpp"

namespace compat_reason {

using AttributeSet = std::map<std::string, std::string>;

struct MissingAttributeError : Error {
  using Error::Error;
};

/// "good.color", ..., "bad.design", or "normal".
std::string template_key(Judgment judgment, const std::optional<Reason>& reason);

/// All seven keys in table order.
std::vector<std::string> template_keys();

struct TemplateTable {
  std::map<std::string, std::string> templates;

  static const TemplateTable& standard();
  /// Lines of "key = template"; '#' starts a comment. Must cover every key.
  static TemplateTable parse(const std::string& text, const std::string& origin = "<templates>");
  static TemplateTable load(const std::filesystem::path& path);
  std::string to_text() const;

  /// Throws ParseError on a missing or unknown key, or an unbalanced brace.
  void validate() const;
};

/// Names inside braces, in order of appearance.
std::vector<std::string> placeholders(const std::string& tmpl);

/// Palette name for a FOCO code string, or the value unchanged when it is not one.
std::string display_color(const std::string& value);

std::string generate_explanation(const TemplateTable& table, Judgment judgment, const std::optional<Reason>& reason,
                                 const AttributeSet& attributes);
std::string generate_explanation(Judgment judgment, const std::optional<Reason>& reason,
                                 const AttributeSet& attributes);

}  // namespace compat_reason
