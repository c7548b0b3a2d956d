#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "codesearch/common.hpp"

namespace codesearch {

struct RawPair;

// Reserved ids are fixed across every vocabulary and file version.
namespace reserved {
inline constexpr TokenId pad = 0;
inline constexpr TokenId unk = 1;
inline constexpr TokenId cls = 2;
inline constexpr TokenId sep = 3;
inline constexpr TokenId mode_nl = 4;
inline constexpr TokenId mode_pl = 5;
inline constexpr TokenId mode_pair = 6;
inline constexpr TokenId count = 7;
}  // namespace reserved

class Vocabulary {
 public:
  static constexpr int kFormatVersion = 1;

  /// Reserved tokens only.
  Vocabulary();

  /// Reserved tokens, then every token seen at least `min_count` times over
  /// the docstring and code sides, by descending count, ties lexicographic.
  static Vocabulary build(const std::vector<RawPair>& pairs, std::size_t min_count);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

  std::string to_json() const;
  static Vocabulary from_json(std::string_view json);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void append(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

std::vector<std::string_view> reserved_token_names();

}  // namespace codesearch
