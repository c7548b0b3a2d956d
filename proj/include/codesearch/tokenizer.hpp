#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "codesearch/common.hpp"

namespace codesearch {

enum class TextMode { nl, pl };

// Per-mode truncation limits. A pair sequence is CLS + NL + SEP + PL and is
// cut to `pair` positions in total by shortening the PL side.
struct SequenceLimits {
  std::size_t nl = 64;
  std::size_t pl = 192;
  std::size_t pair = 256;
};

class Vocabulary;

/// Splits raw text into surface tokens.
///
/// Rules, applied left to right over UTF-8 bytes:
///   - whitespace separates tokens and is dropped;
///   - every ASCII punctuation character except `_` is its own token;
///   - `_` separates identifier parts and is dropped (snake_case);
///   - within a word, a lower→Upper transition and the last capital of an
///     acronym followed by a lowercase letter start a new part (camelCase,
///     HTTPServer → HTTP, Server); digits stay attached to their part;
///   - bytes ≥ 0x80 are treated as word characters, so non-ASCII letters are
///     never split apart;
///   - NL tokens are lowercased (ASCII) after splitting; PL keeps case.
std::vector<std::string> split_tokens(std::string_view text, TextMode mode);

/// split_tokens + vocabulary lookup + truncation to the mode's limit.
/// Throws std::invalid_argument when the text is blank or yields no tokens.
TokenSeq tokenize(std::string_view text, TextMode mode, const Vocabulary& vocab,
                  const SequenceLimits& limits = {});

}  // namespace codesearch
