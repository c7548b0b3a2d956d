#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "codesearch/index.hpp"
#include "helpers.hpp"

using namespace codesearch;

namespace {

MatF random_unit(Rng& rng, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<float> g;
  MatF m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  m.rowwise().normalize();
  return m;
}

std::vector<std::string> numbered_ids(std::size_t n, const std::string& prefix = "c") {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

// Full sort of every row by (score desc, id asc).
std::vector<std::string> brute_force(const VectorIndex& index, const RowVec<float>& q, std::size_t k) {
  const Eigen::VectorXf s = index.embeddings() * q.transpose();
  std::vector<std::size_t> rows(index.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    if (s(static_cast<Eigen::Index>(a)) != s(static_cast<Eigen::Index>(b))) return s(static_cast<Eigen::Index>(a)) > s(static_cast<Eigen::Index>(b));
    return index.id(a) < index.id(b);
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, rows.size()); ++i) out.push_back(index.id(rows[i]));
  return out;
}

}  // namespace

TEST_SUITE("index") {
  TEST_CASE("top_k equals a brute-force full sort") {
    Rng rng(1);
    const VectorIndex index(numbered_ids(300), random_unit(rng, 300, 12), {});
    const MatF queries = random_unit(rng, 40, 12);
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
      for (std::size_t k : {1u, 3u, 10u, 300u, 1000u}) {
        const auto got = index.top_k(queries.row(q), k);
        CHECK(got.ids() == brute_force(index, queries.row(q), k));
        CHECK(got.stage == Stage::fast);
        for (std::size_t i = 0; i < got.entries.size(); ++i) {
          CHECK(got.entries[i].final_rank == i + 1);
          CHECK(got.entries[i].fast_score.has_value());
          CHECK_FALSE(got.entries[i].rerank_score.has_value());
          if (i) CHECK(*got.entries[i - 1].fast_score >= *got.entries[i].fast_score);
        }
      }
    }
  }

  TEST_CASE("ties are broken by ascending id, not by row") {
    MatF e(4, 2);
    e << 1, 0, 0, 1, 1, 0, 1, 0;
    const VectorIndex index({"d", "z", "b", "c"}, e, {});
    RowVec<float> q(2);
    q << 1, 0;
    CHECK(index.top_k(q, 4).ids() == std::vector<std::string>{"b", "c", "d", "z"});
    CHECK(index.top_k(q, 2).ids() == std::vector<std::string>{"b", "c"});
  }

  TEST_CASE("singleton index") {
    MatF e(1, 3);
    e << 0, 1, 0;
    const VectorIndex index({"only"}, e, {});
    CHECK(index.size() == 1);
    CHECK(index.row_of("only") == 0u);
    CHECK_FALSE(index.row_of("other").has_value());
    RowVec<float> q(3);
    q << 1, 0, 0;
    const auto r = index.top_k(q, 5);
    REQUIRE(r.entries.size() == 1);
    CHECK(r.entries[0].candidate_id == "only");
  }

  TEST_CASE("construction and query validation") {
    Rng rng(2);
    const auto e = random_unit(rng, 3, 4);
    CHECK_THROWS_AS(VectorIndex({"a", "a", "b"}, e, {}), std::invalid_argument);
    CHECK_THROWS_AS(VectorIndex({"a", "b"}, e, {}), std::invalid_argument);
    MatF loose = e;
    loose.row(1) *= 1.1f;
    CHECK_THROWS_AS(VectorIndex({"a", "b", "c"}, loose, {}), std::invalid_argument);
    const VectorIndex index({"a", "b", "c"}, e, {});
    CHECK_THROWS_AS(index.top_k(RowVec<float>::Zero(5), 1), std::invalid_argument);
    CHECK_THROWS_AS(index.top_k(e.row(0), 0), std::invalid_argument);
  }

  TEST_CASE("persistence round trip is bit-identical") {
    Rng rng(3);
    const VectorIndex index(numbered_ids(50, "id-\xc3\xa9-"), random_unit(rng, 50, 8), {0x1234, 0xabcd});
    testutil::TempDir dir("index");
    index.save(dir.file("i.csix"));
    const auto back = VectorIndex::load(dir.file("i.csix"), 8);
    CHECK(back.ids() == index.ids());
    CHECK(back.embeddings() == index.embeddings());
    CHECK(back.provenance() == index.provenance());
    const auto q = random_unit(rng, 1, 8);
    const auto a = index.top_k(q.row(0), 10), b = back.top_k(q.row(0), 10);
    CHECK(a.ids() == b.ids());
    for (std::size_t i = 0; i < 10; ++i) CHECK(*a.entries[i].fast_score == *b.entries[i].fast_score);
  }

  TEST_CASE("corrupted index files are rejected") {
    Rng rng(4);
    const VectorIndex index(numbered_ids(5), random_unit(rng, 5, 4), {});
    const auto good = index.serialize();
    CHECK_NOTHROW(VectorIndex::deserialize(good));
    auto magic = good;
    magic[1] = 'Q';
    CHECK_THROWS_AS(VectorIndex::deserialize(magic), FormatError);
    auto version = good;
    version[4] = 2;
    CHECK_THROWS_AS(VectorIndex::deserialize(version), FormatError);
    CHECK_THROWS_AS(VectorIndex::deserialize(good.substr(0, good.size() - 1)), FormatError);
    CHECK_THROWS_AS(VectorIndex::deserialize(good + "!"), FormatError);
    CHECK_THROWS_AS(VectorIndex::deserialize(good, 16), FormatError);
    CHECK_THROWS(VectorIndex::load("/nonexistent/dir/i.csix"));
  }

  TEST_CASE("build_index encodes candidates and is batch-size invariant") {
    Rng rng(5);
    const auto model = testutil::tiny_model_f();
    std::vector<BimodalPair> cands;
    for (int i = 0; i < 40; ++i) cands.push_back(testutil::random_pair(rng, "cand" + std::to_string(i)));
    const auto one = build_index(model, cands, 1);
    const auto many = build_index(model, cands, 32);
    CHECK(one.index.size() == 40);
    CHECK(one.skipped.empty());
    CHECK(one.index.embeddings() == many.index.embeddings());
    CHECK(one.index.provenance().model_config_hash == model.config().hash());
    CHECK(one.index.provenance().corpus_hash == corpus_hash(cands));
    CHECK(one.build_seconds >= 0);
    CHECK(one.index.embeddings().row(7) == model.encode(cands[7].pl_tokens, TextMode::pl));

    cands[3].pl_tokens = TokenSeq(100, 6);  // longer than max_positions
    const auto partial = build_index(model, cands);
    CHECK(partial.skipped == std::vector<std::string>{"cand3"});
    CHECK(partial.index.size() == 39);
  }

  TEST_CASE("provenance warning appears only for a different config") {
    const auto model = testutil::tiny_model_f();
    std::vector<BimodalPair> cands;
    Rng rng(6);
    cands.push_back(testutil::random_pair(rng, "x"));
    const auto built = build_index(model, cands);
    CHECK_FALSE(provenance_warning(built.index, model.config()).has_value());
    auto other = model.config();
    other.hidden_dim = 32;
    CHECK(provenance_warning(built.index, other).has_value());
  }
}
