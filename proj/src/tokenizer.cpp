#include "codesearch/tokenizer.hpp"

#include <stdexcept>

#include "codesearch/vocabulary.hpp"

namespace codesearch {
namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(unsigned char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_word(unsigned char c) { return is_upper(c) || is_lower(c) || is_digit(c) || c >= 0x80; }

// Splits one maximal run of word characters on camelCase boundaries.
void split_word(std::string_view word, std::vector<std::string>& out) {
  std::size_t start = 0;
  for (std::size_t i = 1; i < word.size(); ++i) {
    const auto prev = static_cast<unsigned char>(word[i - 1]);
    const auto cur = static_cast<unsigned char>(word[i]);
    bool boundary = false;
    if ((is_lower(prev) || is_digit(prev)) && is_upper(cur)) {
      boundary = true;
    } else if (is_upper(prev) && is_upper(cur) && i + 1 < word.size() &&
               is_lower(static_cast<unsigned char>(word[i + 1]))) {
      boundary = true;
    }
    if (boundary) {
      out.emplace_back(word.substr(start, i - start));
      start = i;
    }
  }
  out.emplace_back(word.substr(start));
}

}  // namespace

std::vector<std::string> split_tokens(std::string_view text, TextMode mode) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c) || c == '_') {
      ++i;
    } else if (is_word(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word(static_cast<unsigned char>(text[j]))) ++j;
      split_word(text.substr(i, j - i), out);
      i = j;
    } else {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    }
  }
  if (mode == TextMode::nl) {
    for (auto& tok : out) {
      for (auto& ch : tok) {
        if (is_upper(static_cast<unsigned char>(ch))) ch = static_cast<char>(ch - 'A' + 'a');
      }
    }
  }
  return out;
}

TokenSeq tokenize(std::string_view text, TextMode mode, const Vocabulary& vocab, const SequenceLimits& limits) {
  bool blank = true;
  for (unsigned char c : text) {
    if (!is_space(c)) {
      blank = false;
      break;
    }
  }
  if (blank) throw std::invalid_argument("tokenize: empty input");

  const auto parts = split_tokens(text, mode);
  if (parts.empty()) throw std::invalid_argument("tokenize: no tokens produced");

  const std::size_t cap = mode == TextMode::nl ? limits.nl : limits.pl;
  TokenSeq ids;
  ids.reserve(std::min(cap, parts.size()));
  for (const auto& p : parts) {
    if (ids.size() == cap) break;
    ids.push_back(vocab.id(p));
  }
  return ids;
}

}  // namespace codesearch
