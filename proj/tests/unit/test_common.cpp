#include "doctest.h"

#include "clinnote/common.hpp"
#include "clinnote/csv.hpp"
#include "clinnote/json_scan.hpp"
#include "clinnote/prompts.hpp"
#include "support.hpp"

using namespace clinnote;

TEST_SUITE("common") {
  TEST_CASE("string helpers") {
    CHECK(trim("  a b \n") == "a b");
    CHECK(to_lower("MiXeD") == "mixed");
    CHECK(split_whitespace(" one  two\tthree\n") == std::vector<std::string>{"one", "two", "three"});
    CHECK(iequals("Heart", "hEART"));
    CHECK_FALSE(iequals("Heart", "Hear"));
    CHECK(contains_digit("no 1 here"));
    CHECK_FALSE(contains_digit("none here"));
    CHECK(replace_all("a-b-c", "-", "+") == "a+b+c");
    CHECK(key_fold("Marital_Status") == "maritalstatus");
    CHECK(key_fold("marital status") == key_fold("MaritalStatus"));
  }

  TEST_CASE("parse_double accepts whole finite numbers only") {
    CHECK(parse_double(" 98.6 ").value() == doctest::Approx(98.6));
    CHECK(parse_double("+5").value() == 5.0);
    CHECK(parse_double("-0.25").value() == -0.25);
    CHECK_FALSE(parse_double("98.6F"));
    CHECK_FALSE(parse_double(""));
    CHECK_FALSE(parse_double("inf"));
    CHECK_FALSE(parse_double("nan"));
  }

  TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("median, mean and rounding") {
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 3, 2}) == 2.5);
    CHECK_THROWS_AS(median({}), InvalidInput);
    CHECK(mean({1, 2, 3, 4}) == 2.5);
    CHECK(round_to(2.345, 2) == doctest::Approx(2.35));
    CHECK(round_to(-2.5, 0) == -3.0);
  }

  TEST_CASE("atomic write then read") {
    testing::TempDir dir("common");
    const auto p = dir / "sub" / "file.txt";
    std::filesystem::create_directories(p.parent_path());
    write_file_atomic(p, "hello\n");
    CHECK(read_file(p) == "hello\n");
    write_file_atomic(p, "replaced");
    CHECK(read_file(p) == "replaced");
    CHECK(sha256_file(p) == sha256_hex("replaced"));
    CHECK_THROWS_AS(read_file(dir / "missing"), IoError);
  }

  TEST_CASE("error carries kind and bare message") {
    const InvalidInput e("bad thing");
    CHECK(e.kind() == "InvalidInput");
    CHECK(e.message() == "bad thing");
    CHECK(std::string(e.what()) == "InvalidInput: bad thing");
  }
}

TEST_SUITE("csv") {
  TEST_CASE("quoted fields, embedded newlines and escaped quotes") {
    const auto t = csv::Table::parse("a,b,c\n1,\"x, y\",\"line1\nline2\"\n2,\"say \"\"hi\"\"\",z\n");
    REQUIRE(t.rows().size() == 2);
    CHECK(t.rows()[0].fields[1] == "x, y");
    CHECK(t.rows()[0].fields[2] == "line1\nline2");
    CHECK(t.rows()[1].fields[1] == "say \"hi\"");
    CHECK(t.rows()[1].line == 4);
  }

  TEST_CASE("short rows and open quotes are rejected, not fatal") {
    const auto t = csv::Table::parse("a,b\n1,2\n3\n4,\"open\n");
    CHECK(t.rows().size() == 1);
    REQUIRE(t.rejects().size() == 2);
    CHECK(t.rejects()[0].line == 3);
  }

  TEST_CASE("column lookup ignores case; missing columns name the table") {
    const auto t = csv::Table::parse("HADM_ID,Value\n1,2\n");
    CHECK(t.column("hadm_id") == 0u);
    CHECK_FALSE(t.column("unit"));
    try {
      t.require_column("unit", "truth.csv");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.message().find("truth.csv") != std::string::npos);
      CHECK(e.message().find("unit") != std::string::npos);
    }
  }

  TEST_CASE("writer output parses back to the same cells") {
    testing::for_all(50, 1, [](testing::Gen& g) {
      std::vector<std::vector<std::string>> rows;
      const std::vector<std::string> specials = {",", "\"", "\n", " ", "x"};
      for (int r = 0; r < g.integer(1, 6); ++r) {
        std::vector<std::string> row;
        for (int c = 0; c < 3; ++c) {
          std::string cell = g.word(0, 4);
          for (int k = 0; k < g.integer(0, 3); ++k) cell += g.pick(specials) + g.word(0, 2);
          row.push_back(cell);
        }
        rows.push_back(row);
      }
      csv::Writer w({"a", "b", "c"});
      for (const auto& r : rows) w.add(r);
      const auto t = csv::Table::parse(w.str());
      REQUIRE(t.rows().size() == rows.size());
      for (size_t i = 0; i < rows.size(); ++i) CHECK(t.rows()[i].fields == rows[i]);
    });
    csv::Writer w({"a", "b"});
    CHECK_THROWS_AS(w.add({"only one"}), InvalidInput);
  }
}

TEST_SUITE("json_scan") {
  TEST_CASE("fenced block wins over surrounding text") {
    auto j = find_json_object("Here you go:\n```json\n{\"a\": 1}\n```\nand {\"b\": 2}");
    REQUIRE(j);
    CHECK((*j)["a"] == 1);
  }

  TEST_CASE("first balanced object, braces inside strings ignored") {
    auto j = find_json_object("noise { not json } then {\"k\": \"va}l{ue\", \"n\": {\"x\": [1,2]}} tail");
    REQUIRE(j);
    CHECK((*j)["k"] == "va}l{ue");
    CHECK((*j)["n"]["x"].size() == 2);
  }

  TEST_CASE("no object gives nullopt; arrays only through find_json_value") {
    CHECK_FALSE(find_json_object("plain text"));
    CHECK_FALSE(find_json_object("[1, 2, 3]"));
    auto v = find_json_value("result: [\"a\", \"b\"]");
    REQUIRE(v);
    CHECK(v->is_array());
  }
}

TEST_SUITE("prompts") {
  TEST_CASE("bundled prompt set loads all six with hashes") {
    const auto set = PromptSet::load(CLINNOTE_PROMPTS_DIR);
    CHECK(set.all().size() == 6);
    for (const char* name : PromptSet::kNames) {
      const auto& p = set.get(name);
      CHECK_FALSE(p.text.empty());
      CHECK(p.sha256 == sha256_hex(p.text));
    }
    CHECK(set.get("summary_no_number").text.find("numbers") != std::string::npos);
  }

  TEST_CASE("missing prompt file is reported") {
    testing::TempDir dir("prompts");
    CHECK_THROWS(PromptSet::load(dir.path()));
  }
}
