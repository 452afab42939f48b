#include <doctest.h>

#include <cctype>

#include "codeprobe/align.hpp"

using namespace codeprobe;

namespace {

TokenizedSource manual(std::vector<ByteRange> ranges) {
  TokenizedSource t{"m", {{{0, 0}, "<s>"}}};
  std::uint32_t end = 0;
  for (auto r : ranges) {
    t.tokens.push_back({r, "t"});
    end = std::max(end, r.end);
  }
  t.tokens.push_back({{end, end}, "</s>"});
  return t;
}

}  // namespace

TEST_CASE("exact and straddling hits") {
  // "int x" as [int][x] plus "=0" split badly as [=0]
  const auto tok = manual({{0, 3}, {4, 5}, {6, 8}});
  CHECK(align_span({0, 3}, tok) == TokenSpan{1, 2});
  CHECK(align_span({4, 5}, tok) == TokenSpan{2, 3});
  CHECK(align_span({0, 5}, tok) == TokenSpan{1, 3});
  // a range ending mid-token takes the whole token
  CHECK(align_span({6, 7}, tok) == TokenSpan{3, 4});
  CHECK(align_span({1, 2}, tok) == TokenSpan{1, 2});
  // whitespace alone covers nothing
  CHECK_THROWS_AS(align_span({3, 4}, tok), AlignmentError);
  CHECK(align_span({0, 8}, tok, 17).origin == 17);
}

TEST_CASE("full source covers every content token") {
  const std::string src = "for (int i = 0; i < n; i++) { s += i; }";
  const auto tok = subword_tokenize(src, "f", 3);
  const auto span = align_span({0, static_cast<std::uint32_t>(src.size())}, tok);
  CHECK(span.start == 1);
  CHECK(span.end == tok.size() - 1);
}

TEST_CASE("minimal cover matches brute force") {
  const std::string src = "ab cdefg  hi+jk_lm;";
  for (std::size_t piece : {1u, 2u, 3u, 8u}) {
    const auto tok = subword_tokenize(src, "s", piece);
    for (std::uint32_t s = 0; s < src.size(); ++s) {
      for (std::uint32_t e = s + 1; e <= src.size(); ++e) {
        CAPTURE(piece);
        CAPTURE(s);
        CAPTURE(e);
        std::vector<std::size_t> hit;
        for (std::size_t i = 0; i < tok.size(); ++i) {
          const auto& r = tok.tokens[i].range;
          if (!r.empty() && r.start < e && s < r.end) hit.push_back(i);
        }
        if (hit.empty()) {
          CHECK_THROWS_AS(align_span({s, e}, tok), AlignmentError);
          CHECK(try_align_span({s, e}, tok, src).status == AlignStatus::Empty);
          continue;
        }
        const auto span = align_span({s, e}, tok);
        CHECK(span.start == hit.front());
        CHECK(span.end == hit.back() + 1);
        // sentinels never land inside a span
        for (auto i = span.start; i < span.end; ++i) CHECK_FALSE(tok.tokens[i].is_sentinel());
        const auto r = try_align_span({s, e}, tok, src);
        CHECK(r.status == AlignStatus::Ok);
        CHECK(r.span == span);
      }
    }
  }
}

TEST_CASE("truncated tokenization is out of window") {
  const std::string src = "alpha beta gamma";
  auto tok = subword_tokenize(src, "t", 8);
  REQUIRE(tok.size() == 5);
  // drop "gamma": the window now ends at byte 10
  tok.tokens.erase(tok.tokens.begin() + 3);
  CHECK(try_align_span({11, 16}, tok, src).status == AlignStatus::OutOfWindow);
  CHECK(try_align_span({6, 16}, tok, src).status == AlignStatus::OutOfWindow);
  CHECK(try_align_span({6, 11}, tok, src).status == AlignStatus::Ok);
  CHECK(try_align_span({10, 11}, tok, src).status == AlignStatus::Empty);
}

TEST_CASE("subword tokenizer") {
  const std::string src = "  count_total = value1 +  foo(x);\n";
  for (std::size_t piece : {1u, 2u, 4u, 100u}) {
    const auto tok = subword_tokenize(src, "x", piece);
    CAPTURE(piece);
    tok.validate();
    CHECK(tok.tokens.front().is_sentinel());
    CHECK(tok.tokens.back().is_sentinel());
    CHECK(tok.specials() == std::vector<std::size_t>{0, tok.size() - 1});
    std::string joined, expected;
    for (const auto& t : tok.tokens) {
      if (t.is_sentinel()) continue;
      CHECK(t.range.length() <= piece);
      CHECK(t.text == src.substr(t.range.start, t.range.length()));
      joined += t.text;
    }
    for (char c : src) {
      if (!std::isspace(static_cast<unsigned char>(c))) expected += c;
    }
    CHECK(joined == expected);
  }
  CHECK(subword_tokenize(src, "x", 4).size() == 2 + 3 + 1 + 2 + 1 + 1 + 1 + 1 + 1 + 1);
  CHECK_THROWS_AS(subword_tokenize(src, "x", 0), ConfigError);
}

TEST_CASE("token validation") {
  CHECK_NOTHROW(manual({{0, 2}, {2, 4}}).validate());
  CHECK_THROWS_AS(manual({{0, 3}, {2, 4}}).validate(), AlignmentError);
  CHECK_THROWS_AS(manual({{4, 6}, {0, 2}}).validate(), AlignmentError);
}
