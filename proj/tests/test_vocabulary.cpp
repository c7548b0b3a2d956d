#include <doctest.h>

#include <json.hpp>

#include "codesearch/corpus.hpp"
#include "codesearch/vocabulary.hpp"
#include "helpers.hpp"

using namespace codesearch;

TEST_SUITE("vocabulary") {
  TEST_CASE("reserved ids are fixed") {
    const Vocabulary v;
    REQUIRE(v.size() == static_cast<std::size_t>(reserved::count));
    CHECK(v.token(reserved::pad) == "[PAD]");
    CHECK(v.token(reserved::unk) == "[UNK]");
    CHECK(v.token(reserved::cls) == "[CLS]");
    CHECK(v.token(reserved::sep) == "[SEP]");
    CHECK(v.token(reserved::mode_pair) == "[MODE_PAIR]");
    CHECK(v.id("[CLS]") == reserved::cls);
    CHECK(v.id("never-seen") == reserved::unk);
  }

  TEST_CASE("build orders by count, then lexicographically, and honours min_count") {
    std::vector<RawPair> raws = {
        {"a", "beta beta alpha", "gamma", ""},
        {"b", "alpha delta", "gamma gamma", ""},
    };
    const auto v = Vocabulary::build(raws, 2);
    // counts: gamma 3, alpha 2, beta 2, delta 1
    REQUIRE(v.size() == static_cast<std::size_t>(reserved::count) + 3);
    CHECK(v.token(reserved::count) == "gamma");
    CHECK(v.token(reserved::count + 1) == "alpha");
    CHECK(v.token(reserved::count + 2) == "beta");
    CHECK(!v.contains("delta"));
  }

  TEST_CASE("JSON round trip and file round trip") {
    std::vector<RawPair> raws = {{"a", "Read the File", "def readFile(path): pass", ""}};
    const auto v = Vocabulary::build(raws, 1);
    CHECK(Vocabulary::from_json(v.to_json()) == v);
    testutil::TempDir dir("vocab");
    v.save(dir.file("v.json"));
    CHECK(Vocabulary::load(dir.file("v.json")) == v);
  }

  TEST_CASE("malformed vocabulary files are rejected") {
    CHECK_THROWS_AS(Vocabulary::from_json("{not json"), FormatError);
    CHECK_THROWS_AS(Vocabulary::from_json(R"({"format":"other","version":1})"), FormatError);
    const Vocabulary v;
    const auto j = nlohmann::json::parse(v.to_json());
    auto bumped = j;
    bumped["version"] = 9;
    CHECK_THROWS_AS(Vocabulary::from_json(bumped.dump()), FormatError);
    auto dup = j;
    dup["tokens"] = {"x", "x"};
    CHECK_THROWS_AS(Vocabulary::from_json(dup.dump()), FormatError);
  }
}
