#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "codeprobe/common.hpp"

namespace codeprobe {

struct Token {
  ByteRange range;
  std::string text;

  /// Begin/end markers carry no source bytes.
  bool is_sentinel() const { return range.empty(); }
};

/// Model-tokenizer output for one source, with byte offsets.
struct TokenizedSource {
  std::string source_id;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  std::vector<std::size_t> specials() const;
  /// Throws AlignmentError unless non-sentinel ranges are ascending and
  /// non-overlapping.
  void validate() const;
};

/// Half-open token interval [start, end).
struct TokenSpan {
  std::uint32_t start = 0;
  std::uint32_t end = 0;
  std::int64_t origin = -1;  // AST node or graph node id

  std::uint32_t length() const { return end - start; }
  friend bool operator==(const TokenSpan& a, const TokenSpan& b) {
    return a.start == b.start && a.end == b.end;
  }
};

/// Smallest run of non-sentinel tokens covering every byte of `range` that
/// any token covers; tokens straddling a boundary are included whole.
/// Throws AlignmentError when no token overlaps the range.
TokenSpan align_span(ByteRange range, const TokenizedSource& tok, std::int64_t origin = -1);

enum class AlignStatus { Ok, Empty, OutOfWindow };

struct AlignResult {
  AlignStatus status = AlignStatus::Ok;
  TokenSpan span;
};

/// Like align_span, but reports instead of throwing. OutOfWindow means some
/// non-whitespace byte of the range lies past the last token, i.e. the
/// tokenizer truncated the source before the range ended.
AlignResult try_align_span(ByteRange range, const TokenizedSource& tok, std::string_view source,
                           std::int64_t origin = -1);

/// A deterministic stand-in for a subword tokenizer: words, numbers and
/// punctuation become tokens, words longer than `max_piece` bytes are cut
/// into pieces, and empty begin/end sentinels wrap the sequence.
TokenizedSource subword_tokenize(std::string_view source, std::string source_id, std::size_t max_piece = 4);

}  // namespace codeprobe
