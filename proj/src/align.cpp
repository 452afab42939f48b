#include "codeprobe/align.hpp"

#include <algorithm>
#include <cctype>

namespace codeprobe {

std::vector<std::size_t> TokenizedSource::specials() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].is_sentinel()) out.push_back(i);
  }
  return out;
}

void TokenizedSource::validate() const {
  std::uint32_t last_end = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& r = tokens[i].range;
    if (r.start > r.end) throw AlignmentError("token " + std::to_string(i) + " has an inverted range");
    if (tokens[i].is_sentinel()) continue;
    if (r.start < last_end) {
      throw AlignmentError(source_id + ": token " + std::to_string(i) + " overlaps or precedes its predecessor");
    }
    last_end = r.end;
  }
}

TokenSpan align_span(ByteRange range, const TokenizedSource& tok, std::int64_t origin) {
  std::size_t first = tok.size();
  std::size_t last = 0;
  for (std::size_t i = 0; i < tok.size(); ++i) {
    const auto& t = tok.tokens[i];
    if (t.is_sentinel() || !t.range.overlaps(range)) continue;
    first = std::min(first, i);
    last = i;
  }
  if (first == tok.size()) {
    throw AlignmentError(tok.source_id + ": byte range [" + std::to_string(range.start) + ", " +
                         std::to_string(range.end) + ") covers no token");
  }
  // A sentinel can only sit inside the interval if the tokenizer placed one
  // mid-sequence; spans must not include it.
  for (std::size_t i = first; i <= last; ++i) {
    if (tok.tokens[i].is_sentinel()) throw AlignmentError(tok.source_id + ": span would include a sentinel token");
  }
  return {static_cast<std::uint32_t>(first), static_cast<std::uint32_t>(last + 1), origin};
}

AlignResult try_align_span(ByteRange range, const TokenizedSource& tok, std::string_view source,
                           std::int64_t origin) {
  std::uint32_t window_end = 0;
  for (const auto& t : tok.tokens) {
    if (!t.is_sentinel()) window_end = std::max(window_end, t.range.end);
  }
  for (std::uint32_t b = std::max(window_end, range.start); b < range.end && b < source.size(); ++b) {
    if (!std::isspace(static_cast<unsigned char>(source[b]))) return {AlignStatus::OutOfWindow, {}};
  }
  try {
    return {AlignStatus::Ok, align_span(range, tok, origin)};
  } catch (const AlignmentError&) {
    return {AlignStatus::Empty, {}};
  }
}

TokenizedSource subword_tokenize(std::string_view source, std::string source_id, std::size_t max_piece) {
  if (max_piece == 0) throw ConfigError("max_piece must be positive");
  TokenizedSource out;
  out.source_id = std::move(source_id);
  out.tokens.push_back({{0, 0}, "<s>"});
  auto is_word = [](unsigned char c) { return std::isalnum(c) || c == '_'; };
  std::size_t i = 0;
  while (i < source.size()) {
    const auto c = static_cast<unsigned char>(source[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (is_word(c)) {
      while (j < source.size() && is_word(static_cast<unsigned char>(source[j]))) ++j;
    }
    for (std::size_t p = i; p < j; p += max_piece) {
      const std::size_t q = std::min(j, p + max_piece);
      out.tokens.push_back({{static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(q)},
                            std::string(source.substr(p, q - p))});
    }
    i = j;
  }
  const auto n = static_cast<std::uint32_t>(source.size());
  out.tokens.push_back({{n, n}, "</s>"});
  return out;
}

}  // namespace codeprobe
