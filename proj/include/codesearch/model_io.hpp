#pragma once

#include <string>
#include <string_view>

#include "codesearch/encoder.hpp"

namespace codesearch {

/// Model file layout (little-endian):
///   "CSMD" | u32 version | config block | u64 config hash | u64 tensor count |
///   per tensor: u32 rows, u32 cols, rows×cols f32 row-major
/// Tensors appear in Parameters::for_each order.
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::string serialize_model(const ModelF& model);
ModelF deserialize_model(std::string_view bytes);

void save_model(const std::string& path, const ModelF& model);

/// Throws FormatError on bad magic, unsupported version, a config hash that
/// does not match the config block, tensor shape mismatches, truncation or
/// trailing bytes.
ModelF load_model(const std::string& path);

/// `<model path>.vocab.json`, where the CLI keeps the model's vocabulary.
std::string default_vocab_path(const std::string& model_path);

}  // namespace codesearch
