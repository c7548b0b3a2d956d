#include "codesearch/model_config.hpp"

#include <cmath>
#include <stdexcept>

#include "codesearch/binary_io.hpp"

namespace codesearch {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::fast_only: return "fast_only";
    case Variant::shared: return "shared";
    case Variant::separate: return "separate";
  }
  return "unknown";
}

Variant parse_variant(const std::string& s) {
  if (s == "fast_only") return Variant::fast_only;
  if (s == "shared") return Variant::shared;
  if (s == "separate") return Variant::separate;
  throw std::invalid_argument("unknown model variant '" + s + "' (expected fast_only|shared|separate)");
}

void ModelConfig::validate() const {
  if (hidden_dim == 0 || num_heads == 0 || hidden_dim % num_heads != 0) {
    throw std::invalid_argument("model config: hidden_dim must be a positive multiple of num_heads");
  }
  if (vocab_size == 0) throw std::invalid_argument("model config: vocab_size must be positive");
  if (ff_dim == 0 || head_hidden == 0) throw std::invalid_argument("model config: ff_dim and head_hidden must be positive");
  if (max_positions < 3) throw std::invalid_argument("model config: max_positions too small");
  if (!(temperature > 0.0f) || !std::isfinite(temperature)) {
    throw std::invalid_argument("model config: temperature must be positive");
  }
  if (!(dropout >= 0.0f && dropout < 1.0f)) throw std::invalid_argument("model config: dropout must be in [0, 1)");
  if (static_cast<std::uint8_t>(variant) > 2) throw std::invalid_argument("model config: bad variant");
}

std::string serialize_config(const ModelConfig& c) {
  ByteWriter w;
  w.u32(c.num_layers);
  w.u32(c.hidden_dim);
  w.u32(c.num_heads);
  w.u32(c.ff_dim);
  w.u32(c.vocab_size);
  w.u32(c.max_positions);
  w.u32(c.head_hidden);
  w.u8(c.mode_embeddings ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(c.variant));
  w.f32(c.temperature);
  w.f32(c.dropout);
  return w.buffer();
}

std::uint64_t ModelConfig::hash() const {
  Fnv1a h;
  h.update(serialize_config(*this));
  return h.digest();
}

ModelConfig ModelConfig::roberta_base(std::uint32_t vocab_size) {
  ModelConfig c;
  c.num_layers = 12;
  c.hidden_dim = 768;
  c.num_heads = 12;
  c.ff_dim = 3072;
  c.head_hidden = 768;
  c.max_positions = 514;
  c.vocab_size = vocab_size;
  return c;
}

}  // namespace codesearch
