#pragma once

#include <cstdint>
#include <string>

#include "codesearch/tokenizer.hpp"

namespace codesearch {

// How the fast (embedding) and slow (pair classification) modes are backed.
enum class Variant : std::uint8_t {
  fast_only = 0,  // one tower, no classifier head
  shared = 1,     // one tower serves both modes; only the head is exclusive
  separate = 2,   // independent fast and slow towers, head on the slow one
};

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  std::uint32_t num_layers = 2;
  std::uint32_t hidden_dim = 64;
  std::uint32_t num_heads = 4;
  std::uint32_t ff_dim = 256;
  std::uint32_t vocab_size = 0;
  std::uint32_t max_positions = 256;
  std::uint32_t head_hidden = 64;
  bool mode_embeddings = true;
  Variant variant = Variant::shared;
  float temperature = 0.07f;
  float dropout = 0.1f;

  /// Throws std::invalid_argument on a broken configuration.
  void validate() const;

  /// Hash over the serialized config block (the same bytes the model file holds).
  std::uint64_t hash() const;

  bool operator==(const ModelConfig&) const = default;

  /// 12 layers × 768, 12 heads, ff 3072: the RoBERTa-base geometry. Recorded
  /// for reference; far beyond what the desk-scale tests train.
  static ModelConfig roberta_base(std::uint32_t vocab_size);
};

/// Fixed-layout serialization of the config block (little-endian).
std::string serialize_config(const ModelConfig& c);

}  // namespace codesearch
