#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "codesearch/corpus.hpp"
#include "codesearch/encoder.hpp"

namespace testutil {

using namespace codesearch;

inline ModelConfig tiny_config(Variant v = Variant::shared, std::uint32_t vocab = 40) {
  ModelConfig c;
  c.num_layers = 2;
  c.hidden_dim = 16;
  c.num_heads = 2;
  c.ff_dim = 32;
  c.vocab_size = vocab;
  c.max_positions = 48;
  c.head_hidden = 8;
  c.variant = v;
  return c;
}

// Weights larger than the production init so activations are far from the
// near-linear regime and the tests exercise every nonlinearity.
inline ModelD tiny_model_d(Variant v = Variant::shared, std::uint64_t seed = 1) {
  return ModelD::random(tiny_config(v), seed, 0.3);
}

inline ModelF tiny_model_f(Variant v = Variant::shared, std::uint64_t seed = 1) {
  return ModelF::random(tiny_config(v), seed, 0.3);
}

inline TokenSeq random_tokens(Rng& rng, std::size_t len, TokenId vocab = 40) {
  std::uniform_int_distribution<TokenId> d(reserved::count, vocab - 1);
  TokenSeq s(len);
  for (auto& t : s) t = d(rng);
  return s;
}

inline BimodalPair random_pair(Rng& rng, const std::string& id, TokenId vocab = 40) {
  std::uniform_int_distribution<std::size_t> len(2, 8);
  BimodalPair p;
  p.id = id;
  p.nl_raw = "doc " + id;
  p.pl_raw = "code " + id;
  p.nl_tokens = random_tokens(rng, len(rng), vocab);
  p.pl_tokens = random_tokens(rng, len(rng) + 2, vocab);
  return p;
}

inline TrainBatch random_batch(std::size_t b, std::uint64_t seed, TokenId vocab = 40) {
  Rng rng(seed);
  TrainBatch batch;
  for (std::size_t i = 0; i < b; ++i) batch.pairs.push_back(random_pair(rng, "p" + std::to_string(i), vocab));
  batch.negative_for = random_derangement(b, rng);
  return batch;
}

// Unique directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("codesearch-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
