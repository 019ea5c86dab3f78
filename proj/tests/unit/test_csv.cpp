#include <doctest.h>

#include "asdmeta/csv.hpp"
#include "asdmeta/rng.hpp"
#include "asdmeta/tabular.hpp"

using namespace asdmeta;

TEST_SUITE("csv") {

TEST_CASE("comments, blank lines and BOM are skipped") {
  auto doc = csv::parse("\xEF\xBB\xBF# note\nA, B\n\n1,2\n# mid\n 3 ,4\n");
  REQUIRE(doc.header == std::vector<std::string>{"A", "B"});
  REQUIRE(doc.rows.size() == 2);
  CHECK(doc.rows[0].line == 4);
  CHECK(doc.rows[1].cells == std::vector<std::string>{"3", "4"});
  CHECK(doc.header_line == 2);
}

TEST_CASE("quoted cells") {
  auto doc = csv::parse("A,B\n\"x, y\",\"say \"\"hi\"\"\"\n");
  CHECK(doc.rows[0].cells[0] == "x, y");
  CHECK(doc.rows[0].cells[1] == "say \"hi\"");
}

TEST_CASE("cell count mismatch reports the line") {
  try {
    csv::parse("A,B\n1,2\n3\n");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(csv::parse(""), ValidationError);
  CHECK_THROWS_AS(csv::parse("# only a comment\n"), ValidationError);
}

TEST_CASE("require names the missing column") {
  auto doc = csv::parse("A,B\n1,2\n");
  CHECK(doc.require("B") == 1);
  CHECK_FALSE(doc.find("C"));
  try {
    doc.require("C");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(e.column() == "C");
  }
}

TEST_CASE("escape and parse round-trip random cells") {
  Rng rng(11);
  const std::string alphabet = "ab ,\"x1";
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> cells;
    for (int c = 0; c < 4; ++c) {
      std::string s;
      auto len = rng.below(6);
      for (std::size_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
      // Leading '#' on the first cell would turn the row into a comment.
      cells.push_back("k" + s + "k");
    }
    auto doc = csv::parse("H1,H2,H3,H4\n" + csv::join(cells) + "\n");
    REQUIRE(doc.rows.size() == 1);
    CHECK(doc.rows[0].cells == cells);
  }
}

TEST_CASE("numeric cells parse only when fully consumed") {
  CHECK(csv::parse_double("2.5e-3") == doctest::Approx(2.5e-3));
  CHECK_FALSE(csv::parse_double("2.5x"));
  CHECK_FALSE(csv::parse_double(""));
  CHECK(csv::parse_int("-12") == -12);
  CHECK_FALSE(csv::parse_int("1.0"));
  CHECK(csv::is_na("NA"));
  CHECK(csv::is_na("na"));
  CHECK_FALSE(csv::is_na("N/A"));
}

}
