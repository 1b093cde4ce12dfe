#include "compat_reason/types.hpp"

#include <string>

namespace compat_reason {

std::string_view to_string(Judgment j) {
  switch (j) {
    case Judgment::good: return "good";
    case Judgment::normal: return "normal";
    case Judgment::bad: return "bad";
  }
  return "?";
}

std::string_view to_string(Reason r) {
  switch (r) {
    case Reason::color: return "color";
    case Reason::print: return "print";
    case Reason::design: return "design";
  }
  return "?";
}

Judgment parse_judgment(std::string_view s) {
  for (Judgment j : kAllJudgments) {
    if (s == to_string(j)) return j;
  }
  throw ParseError("unknown judgment '" + std::string(s) + "'");
}

Reason parse_reason(std::string_view s) {
  for (Reason r : kAllReasons) {
    if (s == to_string(r)) return r;
  }
  throw ParseError("unknown reason '" + std::string(s) + "'");
}

}  // namespace compat_reason
