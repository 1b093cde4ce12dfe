#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace compat_reason {

// Index order is significant: it is the tie-break order for every argmax.
enum class Judgment : int { good = 0, normal = 1, bad = 2 };
enum class Reason : int { color = 0, print = 1, design = 2 };

inline constexpr std::size_t kNumJudgments = 3;
inline constexpr std::size_t kNumReasons = 3;

inline constexpr std::array<Judgment, kNumJudgments> kAllJudgments{Judgment::good, Judgment::normal,
                                                                  Judgment::bad};
inline constexpr std::array<Reason, kNumReasons> kAllReasons{Reason::color, Reason::print,
                                                             Reason::design};

constexpr std::size_t index_of(Judgment j) { return static_cast<std::size_t>(j); }
constexpr std::size_t index_of(Reason r) { return static_cast<std::size_t>(r); }

std::string_view to_string(Judgment j);
std::string_view to_string(Reason r);

/// Throws ParseError on anything but "good", "normal", "bad".
Judgment parse_judgment(std::string_view s);
/// Throws ParseError on anything but "color", "print", "design".
Reason parse_reason(std::string_view s);

/// A reason exists iff the judgment is not normal.
constexpr bool reason_required(Judgment j) { return j != Judgment::normal; }

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  using Error::Error;
};

struct DimensionError : Error {
  using Error::Error;
};

}  // namespace compat_reason
