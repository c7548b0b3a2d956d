#include <doctest.h>

#include <cctype>

#include <cmath>
#include <map>
#include <set>

#include "codesearch/corpus.hpp"
#include "helpers.hpp"

using namespace codesearch;

namespace {

std::vector<BimodalPair> synth_pairs(std::size_t n, Vocabulary* vocab_out = nullptr) {
  SynthOptions opt;
  opt.n_pairs = n;
  const auto raws = synth_corpus(opt);
  const auto vocab = Vocabulary::build(raws, 1);
  if (vocab_out) *vocab_out = vocab;
  return tokenize_pairs(raws, vocab, SequenceLimits{});
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("JSONL parsing reports bad lines and keeps good ones") {
    const std::string text =
        "{\"id\":\"a\",\"docstring\":\"read file\",\"code\":\"def read(): pass\"}\n"
        "\n"
        "{\"id\":\"b\",\"docstring\":\"missing code\"}\n"
        "not json at all\n"
        "{\"id\":\"c\",\"docstring\":7,\"code\":\"x\"}\n"
        "{\"id\":\"d\",\"docstring\":\"write\",\"code\":\"def write(): pass\",\"lang\":\"python\"}";
    const auto r = parse_jsonl(text);
    REQUIRE(r.records.size() == 2);
    CHECK(r.records[0].id == "a");
    CHECK(r.records[1].lang == "python");
    REQUIRE(r.errors.size() == 3);
    CHECK(r.errors[0].line == 3);
    CHECK(r.errors[0].message.find("code") != std::string::npos);
    CHECK(r.errors[1].line == 4);
    CHECK(r.errors[2].line == 5);
  }

  TEST_CASE("JSONL save and load round trip") {
    testutil::TempDir dir("jsonl");
    std::vector<RawPair> raws = {{"x", "doc \"quoted\"", "code\nline2", "go"}, {"y", "caf\xc3\xa9", "z", ""}};
    save_jsonl(dir.file("a.jsonl"), raws);
    const auto back = load_jsonl(dir.file("a.jsonl"));
    REQUIRE(back.errors.empty());
    REQUIRE(back.records.size() == 2);
    CHECK(back.records[0].code == "code\nline2");
    CHECK(back.records[1].docstring == "caf\xc3\xa9");
    CHECK_THROWS(load_jsonl(dir.file("missing.jsonl")));
  }

  TEST_CASE("records that tokenize to nothing are dropped and listed") {
    const Vocabulary v;
    std::vector<RawPair> raws = {{"ok", "read", "read()", ""}, {"blank", "   ", "x", ""}};
    std::vector<std::string> dropped;
    const auto pairs = tokenize_pairs(raws, v, SequenceLimits{}, &dropped);
    CHECK(pairs.size() == 1);
    CHECK(dropped == std::vector<std::string>{"blank"});
  }

  TEST_CASE("split keeps every gold in the pool and ids disjoint") {
    auto pairs = synth_pairs(400);
    const auto s = split_dataset(pairs, {30, 50, 20}, 3);
    CHECK(s.dev.size() == 30);
    CHECK(s.test.size() == 50);
    CHECK(s.candidates.size() == 100);
    CHECK(s.train.size() == 300);
    CHECK_NOTHROW(validate_split(s));
    std::set<std::string> train_ids;
    for (const auto& p : s.train) train_ids.insert(p.id);
    for (const auto& c : s.candidates) CHECK(train_ids.count(c.id) == 0);
    CHECK_THROWS_AS(split_dataset(pairs, {300, 100, 1}, 3), std::invalid_argument);

    auto broken = s;
    broken.candidates.pop_back();
    broken.candidates.erase(broken.candidates.begin());
    CHECK_THROWS_AS(validate_split(broken), std::invalid_argument);
  }

  TEST_CASE("split is deterministic under its seed") {
    auto pairs = synth_pairs(200);
    const auto a = split_dataset(pairs, {10, 10, 10}, 9);
    const auto b = split_dataset(pairs, {10, 10, 10}, 9);
    const auto c = split_dataset(pairs, {10, 10, 10}, 10);
    auto ids = [](const std::vector<BimodalPair>& v) {
      std::vector<std::string> out;
      for (const auto& p : v) out.push_back(p.id);
      return out;
    };
    CHECK(ids(a.test) == ids(b.test));
    CHECK(ids(a.test) != ids(c.test));
  }

  TEST_CASE("dataset directory round trip") {
    Vocabulary vocab;
    auto pairs = synth_pairs(120, &vocab);
    const auto s = split_dataset(pairs, {10, 10, 5}, 1);
    testutil::TempDir dir("dataset");
    save_dataset(dir.path().string(), s, vocab);
    Vocabulary back_vocab;
    const auto back = load_dataset(dir.path().string(), &back_vocab);
    CHECK(back_vocab == vocab);
    REQUIRE(back.train.size() == s.train.size());
    CHECK(back.train[3].pl_tokens == s.train[3].pl_tokens);
    CHECK(back.candidates.back().pl_raw == s.candidates.back().pl_raw);
    CHECK(corpus_hash(back.candidates) == corpus_hash(s.candidates));
  }

  TEST_CASE("dataset loader rejects out-of-range token ids") {
    Vocabulary vocab;
    auto pairs = synth_pairs(40, &vocab);
    auto s = split_dataset(pairs, {2, 2, 0}, 1);
    s.train[0].nl_tokens[0] = static_cast<TokenId>(vocab.size() + 5);
    testutil::TempDir dir("badtokens");
    save_dataset(dir.path().string(), s, vocab);
    CHECK_THROWS_AS(load_dataset(dir.path().string()), FormatError);
  }

  TEST_CASE("derangements never fix a point; B = 2 is the forced swap") {
    Rng rng(4);
    for (std::size_t n = 2; n < 12; ++n) {
      for (int t = 0; t < 50; ++t) {
        const auto d = random_derangement(n, rng);
        std::set<std::size_t> seen(d.begin(), d.end());
        CHECK(seen.size() == n);
        for (std::size_t i = 0; i < n; ++i) CHECK(d[i] != i);
      }
    }
    CHECK(random_derangement(2, rng) == std::vector<std::size_t>{1, 0});
    CHECK_THROWS_AS(random_derangement(1, rng), std::invalid_argument);
  }

  TEST_CASE("negative assignment is uniform over j != i (chi-square)") {
    // n = 5, row 0: four admissible targets, 8000 draws. Critical value of
    // chi-square with 3 degrees of freedom at p = 0.001 is 16.27.
    Rng rng(11);
    std::map<std::size_t, int> counts;
    const int draws = 8000;
    for (int t = 0; t < draws; ++t) counts[random_derangement(5, rng)[0]]++;
    CHECK(counts.count(0) == 0);
    double chi2 = 0;
    const double expected = draws / 4.0;
    for (std::size_t j = 1; j < 5; ++j) chi2 += std::pow(counts[j] - expected, 2) / expected;
    CHECK(chi2 < 16.27);
  }

  TEST_CASE("batch stream covers the data once and drops a trailing singleton") {
    auto pairs = synth_pairs(11);
    BatchStream stream(pairs, 5, 3);
    CHECK(stream.batch_count() == 2);
    std::set<std::string> seen;
    std::size_t batches = 0;
    while (auto b = stream.next()) {
      ++batches;
      CHECK(b->size() >= 2);
      CHECK(b->negative_for.size() == b->size());
      for (const auto& p : b->pairs) CHECK(seen.insert(p.id).second);
    }
    CHECK(batches == 2);
    CHECK(seen.size() == 10);

    auto twelve = synth_pairs(12);
    CHECK(make_batches(twelve, 5, 3).size() == 3);
    CHECK(make_batches(twelve, 5, 3).back().size() == 2);
    CHECK_THROWS_AS(BatchStream(twelve, 1, 0), std::invalid_argument);
  }

  TEST_CASE("synthetic corpus puts the concept word on both sides") {
    SynthOptions opt;
    opt.n_pairs = 300;
    opt.n_concepts = 40;
    const auto raws = synth_corpus(opt);
    const auto concepts = synth_concept_words(40);
    CHECK(std::set<std::string>(concepts.begin(), concepts.end()).size() == 40);
    for (const auto& r : raws) {
      // The docstring's first letter is capitalised.
      std::string doc = r.docstring;
      doc[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(doc[0])));
      bool found = false;
      for (const auto& c : concepts) {
        if (doc.find(c) != std::string::npos && r.code.find(c) != std::string::npos) found = true;
      }
      CHECK(found);
    }
    const auto again = synth_corpus(opt);
    CHECK(again[17].code == raws[17].code);
    CHECK(again[299].docstring == raws[299].docstring);
  }

  TEST_CASE("synthetic corpus vocabulary does not depend on the seed") {
    SynthOptions a;
    a.n_pairs = 1500;
    SynthOptions b = a;
    b.seed = 99;
    CHECK(Vocabulary::build(synth_corpus(a), 1).size() == Vocabulary::build(synth_corpus(b), 1).size());
  }
}
