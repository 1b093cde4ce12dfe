#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "compat_reason/kvconfig.hpp"

using namespace compat_reason;

TEST_CASE("sections, comments and typed values") {
  const auto cfg = KeyValueConfig::parse(
      "# top comment\n"
      "seed = 3\n"
      "\n"
      "[train]\n"
      "alpha = 1.5   # trailing comment\n"
      "reg = ce\n"
      "[gen]\n"
      "ambiguous = yes\n");
  CHECK(cfg.get_int("seed") == 3);
  CHECK(cfg.get_double("train.alpha") == 1.5);
  CHECK(cfg.get_string("train.reg") == "ce");
  CHECK(cfg.get_bool("gen.ambiguous") == true);
  CHECK_FALSE(cfg.get_double("train.missing").has_value());
  CHECK(cfg.values().size() == 4);
}

TEST_CASE("unused keys are tracked") {
  const auto cfg = KeyValueConfig::parse("a = 1\nb = 2\n[s]\nc = 3\n");
  (void)cfg.get_int("a");
  CHECK(cfg.unused_keys() == std::vector<std::string>{"b", "s.c"});
  CHECK_NOTHROW(cfg.reject_unknown({"s.c"}, "s."));
  CHECK_THROWS_AS(cfg.reject_unknown({"a"}, ""), ParseError);
  CHECK_THROWS_WITH_AS(cfg.reject_unknown({}, "s."), doctest::Contains("s.c"), ParseError);
}

TEST_CASE("malformed input names the line") {
  CHECK_THROWS_WITH_AS(KeyValueConfig::parse("a = 1\nno equals\n", "f.cfg"), doctest::Contains("f.cfg:2"), ParseError);
  CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2\n"), ParseError);
  CHECK_THROWS_AS(KeyValueConfig::parse("[x\n"), ParseError);
  CHECK_THROWS_AS(KeyValueConfig::parse("[]\n"), ParseError);
  CHECK_THROWS_AS(KeyValueConfig::parse(" = 4\n"), ParseError);
  // same key name in two sections is fine
  CHECK_NOTHROW(KeyValueConfig::parse("[a]\nk = 1\n[b]\nk = 2\n"));
}

TEST_CASE("type errors") {
  const auto cfg = KeyValueConfig::parse("x = 1.5x\ny = 2.5\nz = maybe\nw = nan\n");
  CHECK_THROWS_AS(cfg.get_double("x"), ParseError);
  CHECK_THROWS_AS(cfg.get_int("y"), ParseError);
  CHECK_THROWS_AS(cfg.get_bool("z"), ParseError);
  CHECK_THROWS_AS(cfg.get_double("w"), ParseError);
}

TEST_CASE("load from file") {
  const auto path = std::filesystem::temp_directory_path() / "compat_reason_kv_test.cfg";
  {
    std::ofstream out(path);
    out << "[train]\nepochs = 7\n";
  }
  const auto cfg = KeyValueConfig::load(path);
  CHECK(cfg.get_int("train.epochs") == 7);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(KeyValueConfig::load(path), Error);
}
