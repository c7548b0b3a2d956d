#include "codesearch/model_io.hpp"

#include "codesearch/binary_io.hpp"

namespace codesearch {

namespace {

constexpr std::string_view kMagic = "CSMD";
constexpr std::size_t kConfigBlockBytes = 7 * 4 + 2 + 2 * 4;

ModelConfig read_config(ByteReader& r) {
  ModelConfig c;
  c.num_layers = r.u32();
  c.hidden_dim = r.u32();
  c.num_heads = r.u32();
  c.ff_dim = r.u32();
  c.vocab_size = r.u32();
  c.max_positions = r.u32();
  c.head_hidden = r.u32();
  const auto mode = r.u8();
  const auto variant = r.u8();
  if (mode > 1) throw FormatError("CSMD model: bad mode_embeddings flag " + std::to_string(mode));
  if (variant > 2) throw FormatError("CSMD model: unknown variant " + std::to_string(variant));
  c.mode_embeddings = mode == 1;
  c.variant = static_cast<Variant>(variant);
  c.temperature = r.f32();
  c.dropout = r.f32();
  return c;
}

}  // namespace

std::string serialize_model(const ModelF& model) {
  const auto& c = model.config();
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kModelFormatVersion);
  w.bytes(serialize_config(c));
  w.u64(c.hash());
  w.u64(model.params().tensors().size());
  model.params().for_each([&](const std::string&, const MatF& t) {
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) w.f32(t.data()[i]);
  });
  return w.buffer();
}

ModelF deserialize_model(std::string_view bytes) {
  ByteReader r(bytes, "CSMD model");
  if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw FormatError("not a CSMD model file (bad magic bytes)");
  }
  const auto version = r.u32();
  if (version != kModelFormatVersion) {
    throw FormatError("CSMD model: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kModelFormatVersion) + ")");
  }
  if (r.remaining() < kConfigBlockBytes) throw FormatError("CSMD model: truncated file (config block)");
  const ModelConfig config = read_config(r);
  const auto stored_hash = r.u64();
  if (stored_hash != config.hash()) {
    throw FormatError("CSMD model: config hash mismatch (file says " + hex64(stored_hash) + ", config block hashes to " +
                      hex64(config.hash()) + ")");
  }
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("CSMD model: ") + e.what());
  }

  // The layout comes from the config; values are overwritten below.
  Parameters<float> params;
  {
    Rng rng(0);
    params.fast = detail::init_tower<float>(config, rng, 0.0);
    if (config.variant == Variant::separate) params.slow = detail::init_tower<float>(config, rng, 0.0);
    if (config.variant != Variant::fast_only) {
      HeadParams<float> h;
      h.w1 = MatF::Zero(config.hidden_dim, config.head_hidden);
      h.b1 = MatF::Zero(1, config.head_hidden);
      h.w2 = MatF::Zero(config.head_hidden, 1);
      h.b2 = MatF::Zero(1, 1);
      params.head = std::move(h);
    }
  }
  auto tensors = params.tensors();
  const auto names = params.names();
  const auto count = r.u64();
  if (count != tensors.size()) {
    throw FormatError("CSMD model: " + std::to_string(count) + " tensors in file, config needs " +
                      std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (rows != tensors[i]->rows() || cols != tensors[i]->cols()) {
      throw FormatError("CSMD model: tensor " + names[i] + " is " + std::to_string(rows) + "x" + std::to_string(cols) +
                        ", expected " + std::to_string(tensors[i]->rows()) + "x" + std::to_string(tensors[i]->cols()));
    }
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    if (r.remaining() < n * 4) throw FormatError("CSMD model: truncated file (tensor " + names[i] + ")");
    for (std::size_t k = 0; k < n; ++k) tensors[i]->data()[k] = r.f32();
  }
  if (r.remaining() != 0) {
    throw FormatError("CSMD model: " + std::to_string(r.remaining()) + " trailing bytes after the last tensor");
  }
  return ModelF(config, std::move(params));
}

void save_model(const std::string& path, const ModelF& model) { write_file_atomic(path, serialize_model(model)); }

ModelF load_model(const std::string& path) { return deserialize_model(read_file(path)); }

std::string default_vocab_path(const std::string& model_path) { return model_path + ".vocab.json"; }

}  // namespace codesearch
