#include "codesearch/vocabulary.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "codesearch/binary_io.hpp"
#include "codesearch/corpus.hpp"
#include "codesearch/tokenizer.hpp"

namespace codesearch {

std::vector<std::string_view> reserved_token_names() {
  return {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MODE_NL]", "[MODE_PL]", "[MODE_PAIR]"};
}

Vocabulary::Vocabulary() {
  for (auto name : reserved_token_names()) append(std::string(name));
}

void Vocabulary::append(std::string token) {
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? reserved::unk : it->second;
}

Vocabulary Vocabulary::build(const std::vector<RawPair>& pairs, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : pairs) {
    for (auto& t : split_tokens(p.docstring, TextMode::nl)) ++counts[std::move(t)];
    for (auto& t : split_tokens(p.code, TextMode::pl)) ++counts[std::move(t)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= std::max<std::size_t>(min_count, 1)) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (auto& [tok, n] : ranked) {
    if (!v.contains(tok)) v.append(tok);
  }
  return v;
}

std::string Vocabulary::to_json() const {
  nlohmann::json reserved_map = nlohmann::json::object();
  const auto names = reserved_token_names();
  for (std::size_t i = 0; i < names.size(); ++i) reserved_map[std::string(names[i])] = i;
  nlohmann::json j;
  j["format"] = "codesearch-vocab";
  j["version"] = kFormatVersion;
  j["reserved"] = reserved_map;
  j["tokens"] = std::vector<std::string>(tokens_.begin() + reserved::count, tokens_.end());
  return j.dump(1);
}

Vocabulary Vocabulary::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vocabulary: invalid JSON: ") + e.what());
  }
  if (j.value("format", "") != "codesearch-vocab") throw FormatError("vocabulary: not a codesearch-vocab file");
  if (j.value("version", -1) != kFormatVersion) {
    throw FormatError("vocabulary: unsupported version " + j.value("version", nlohmann::json(-1)).dump());
  }
  const auto names = reserved_token_names();
  const auto& res = j.at("reserved");
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!res.contains(std::string(names[i])) || res.at(std::string(names[i])).get<std::size_t>() != i) {
      throw FormatError("vocabulary: reserved id table differs from this build");
    }
  }
  Vocabulary v;
  for (const auto& t : j.at("tokens")) {
    auto s = t.get<std::string>();
    if (v.contains(s)) throw FormatError("vocabulary: duplicate token '" + s + "'");
    v.append(std::move(s));
  }
  return v;
}

void Vocabulary::save(const std::string& path) const { write_file_atomic(path, to_json()); }

Vocabulary Vocabulary::load(const std::string& path) { return from_json(read_file(path)); }

}  // namespace codesearch
