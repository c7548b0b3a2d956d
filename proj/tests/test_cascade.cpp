#include <doctest.h>

#include "cascade_props.hpp"
#include "codesearch/index.hpp"
#include "helpers.hpp"

using namespace codesearch;

namespace {

struct Fixture {
  ModelF model;
  std::vector<BimodalPair> cands;
  VectorIndex index;

  explicit Fixture(Variant v = Variant::shared, std::size_t n = 30)
      : model(testutil::tiny_model_f(v, 11)), cands(make(n)), index(build_index(model, cands).index) {}

  static std::vector<BimodalPair> make(std::size_t n) {
    Rng rng(99);
    std::vector<BimodalPair> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(testutil::random_pair(rng, "k" + std::to_string(i)));
    return out;
  }
};

}  // namespace

TEST_SUITE("cascade") {
  TEST_CASE("random cases satisfy every cascade invariant") {
    const auto [failures, first] = props::run_cases(1000, 20240611);
    INFO(first);
    CHECK(failures == 0);
  }

  TEST_CASE("the real searcher respects the invariants") {
    const Fixture f;
    const auto searcher = CascadeSearcher::from_candidates(f.model, f.index, f.cands);
    const TokenSeq q{6, 7, 8, 9};
    const auto fast = searcher.retrieve_fast(q);
    CHECK(fast.entries.size() == f.cands.size());
    for (std::size_t k : {1u, 5u, 30u}) {
      CascadeConfig cfg;
      cfg.k = k;
      const auto cascade = searcher.retrieve(q, cfg);
      CHECK(cascade.stage == Stage::cascade);
      CHECK(cascade.entries.size() == fast.entries.size());
      std::set<std::string> a, b;
      for (std::size_t i = 0; i < k; ++i) {
        a.insert(fast.entries[i].candidate_id);
        b.insert(cascade.entries[i].candidate_id);
      }
      CHECK(a == b);
      if (k == 1) CHECK(cascade.ids() == fast.ids());
    }
    CascadeConfig all;
    all.k = f.cands.size();
    CHECK(searcher.retrieve(q, all).ids() == searcher.retrieve_slow_full(q).ids());
    CascadeConfig b1 = all, b7 = all;
    b1.rerank_batch_size = 1;
    b7.rerank_batch_size = 7;
    CHECK(searcher.retrieve(q, b1).ids() == searcher.retrieve(q, b7).ids());
  }

  TEST_CASE("rerank scores are classifier probabilities") {
    const Fixture f;
    const auto searcher = CascadeSearcher::from_candidates(f.model, f.index, f.cands);
    const TokenSeq q{10, 11, 12};
    CascadeConfig cfg;
    cfg.k = 4;
    const auto r = searcher.retrieve(q, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto& e = r.entries[i];
      REQUIRE(e.rerank_score.has_value());
      CHECK(*e.rerank_score == f.model.classify(q, searcher.code_tokens(e.row)));
      CHECK(*e.fast_score == doctest::Approx(f.index.similarities(f.model.encode(q, TextMode::nl))(static_cast<Eigen::Index>(e.row))));
    }
  }

  TEST_CASE("result_size truncates after the rerank") {
    const Fixture f;
    const auto searcher = CascadeSearcher::from_candidates(f.model, f.index, f.cands);
    const TokenSeq q{6, 30, 31};
    CascadeConfig full;
    full.k = 10;
    const auto whole = searcher.retrieve(q, full);
    for (std::size_t size : {3u, 10u, 15u}) {
      CascadeConfig cut = full;
      cut.result_size = size;
      const auto r = searcher.retrieve(q, cut);
      REQUIRE(r.entries.size() == size);
      for (std::size_t i = 0; i < size; ++i) CHECK(r.entries[i].candidate_id == whole.entries[i].candidate_id);
    }
    CascadeConfig fast;
    fast.mode = RetrievalMode::fast;
    fast.result_size = 5;
    CHECK(searcher.retrieve(q, fast).entries.size() == 5);
    CascadeConfig slow;
    slow.mode = RetrievalMode::slow_full;
    slow.result_size = 2;
    CHECK(searcher.retrieve(q, slow).entries.size() == 2);
    CHECK(searcher.retrieve(q, slow).stage == Stage::slow);
  }

  TEST_CASE("timings are recorded per stage") {
    const Fixture f;
    const auto searcher = CascadeSearcher::from_candidates(f.model, f.index, f.cands);
    CascadeConfig cfg;
    cfg.k = 8;
    const auto r = searcher.retrieve(TokenSeq{6, 7}, cfg);
    CHECK(r.timing.encode_ms > 0);
    CHECK(r.timing.lookup_ms >= 0);
    CHECK(r.timing.rerank_ms > 0);
    CHECK(r.timing.total_ms >= r.timing.encode_ms + r.timing.lookup_ms + r.timing.rerank_ms - 1e-6);
    cfg.mode = RetrievalMode::fast;
    CHECK(searcher.retrieve(TokenSeq{6, 7}, cfg).timing.rerank_ms == 0);
  }

  TEST_CASE("fast_only models cannot rerank") {
    const Fixture f(Variant::fast_only);
    const auto searcher = CascadeSearcher::from_candidates(f.model, f.index, f.cands);
    CHECK_NOTHROW(searcher.retrieve_fast(TokenSeq{6}));
    CascadeConfig cfg;
    CHECK_THROWS_AS(searcher.retrieve(TokenSeq{6}, cfg), std::logic_error);
    cfg.mode = RetrievalMode::slow_full;
    CHECK_THROWS_AS(searcher.retrieve(TokenSeq{6}, cfg), std::logic_error);
  }

  TEST_CASE("argument validation") {
    const Fixture f;
    CHECK_THROWS_AS(CascadeSearcher::from_candidates(f.model, f.index, Fixture::make(5)), std::invalid_argument);
    CHECK_THROWS_AS(CascadeSearcher(f.model, f.index, std::vector<TokenSeq>(3)), std::invalid_argument);
    CascadeConfig cfg;
    cfg.k = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.k = 1;
    cfg.rerank_batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK(parse_retrieval_mode("slow") == RetrievalMode::slow_full);
    CHECK(parse_retrieval_mode(to_string(RetrievalMode::cascade)) == RetrievalMode::cascade);
    CHECK_THROWS_AS(parse_retrieval_mode("medium"), std::invalid_argument);
    RankedList empty;
    CHECK_THROWS_AS(rerank_with(empty, 1, 1, [](const std::vector<std::size_t>& r) { return std::vector<float>(r.size()); }),
                    std::invalid_argument);
  }
}
