#include "minilang_parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

namespace codeprobe::detail {
namespace {

enum class TokKind { Ident, Number, String, Char, Punct, Include, SysLib, End };

struct Tok {
  TokKind kind;
  std::string_view text;
  ByteRange range;
};

struct SyntaxFailure {
  std::string message;
  std::uint32_t offset;
};

constexpr std::array<std::string_view, 38> kPunct = {
    ">>>=", "<<=", ">>=", ">>>", "->", "++", "--", "&&", "||", "==", "!=", "<=", ">=",
    "+=",   "-=",  "*=",  "/=",  "%=", "&=", "|=", "^=", "<<", ">>", "(",  ")",  "{",
    "}",    "[",   "]",   ";",   ",",  ".",  "=",  "<",  ">",  "+",  "-",  "*"};
constexpr std::string_view kSinglePunct = "/%!~?:&|^";

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Tok> run() {
    std::vector<Tok> out;
    while (true) {
      skip_trivia();
      if (pos_ >= src_.size()) break;
      out.push_back(next());
      if (out.back().kind == TokKind::Include) lex_include_target(out);
    }
    const auto end = static_cast<std::uint32_t>(src_.size());
    out.push_back({TokKind::End, {}, {end, end}});
    return out;
  }

 private:
  void skip_trivia() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (src_.substr(pos_, 2) == "//") {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else if (src_.substr(pos_, 2) == "/*") {
        const auto close = src_.find("*/", pos_ + 2);
        if (close == std::string_view::npos) throw SyntaxFailure{"unterminated comment", u32(pos_)};
        pos_ = close + 2;
      } else {
        return;
      }
    }
  }

  static std::uint32_t u32(std::size_t v) { return static_cast<std::uint32_t>(v); }

  Tok make(TokKind kind, std::size_t start) {
    return {kind, src_.substr(start, pos_ - start), {u32(start), u32(pos_)}};
  }

  Tok next() {
    const std::size_t start = pos_;
    const char c = src_[pos_];
    if (ident_start(c)) {
      while (pos_ < src_.size() && ident_char(src_[pos_])) ++pos_;
      return make(TokKind::Ident, start);
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      const bool hex = src_.substr(pos_, 2) == "0x" || src_.substr(pos_, 2) == "0X";
      while (pos_ < src_.size()) {
        const char d = src_[pos_];
        if (ident_char(d) || d == '.') {
          ++pos_;
        } else if ((d == '+' || d == '-') && !hex && (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E')) {
          ++pos_;
        } else {
          break;
        }
      }
      return make(TokKind::Number, start);
    }
    if (c == '"' || c == '\'') {
      ++pos_;
      while (pos_ < src_.size() && src_[pos_] != c) {
        if (src_[pos_] == '\n') throw SyntaxFailure{"unterminated literal", u32(start)};
        if (src_[pos_] == '\\') ++pos_;
        ++pos_;
      }
      if (pos_ >= src_.size()) throw SyntaxFailure{"unterminated literal", u32(start)};
      ++pos_;
      return make(c == '"' ? TokKind::String : TokKind::Char, start);
    }
    if (c == '#') {
      ++pos_;
      while (pos_ < src_.size() && ident_char(src_[pos_])) ++pos_;
      if (src_.substr(start, pos_ - start) != "#include") {
        throw SyntaxFailure{"unsupported preprocessor directive", u32(start)};
      }
      return make(TokKind::Include, start);
    }
    for (auto p : kPunct) {
      if (src_.substr(pos_, p.size()) == p) {
        pos_ += p.size();
        return make(TokKind::Punct, start);
      }
    }
    if (kSinglePunct.find(c) != std::string_view::npos) {
      ++pos_;
      return make(TokKind::Punct, start);
    }
    throw SyntaxFailure{std::string("unexpected character '") + c + "'", u32(start)};
  }

  void lex_include_target(std::vector<Tok>& out) {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) ++pos_;
    const std::size_t start = pos_;
    if (pos_ < src_.size() && src_[pos_] == '<') {
      const auto close = src_.find('>', pos_);
      if (close == std::string_view::npos) throw SyntaxFailure{"bad #include", u32(start)};
      pos_ = close + 1;
      out.push_back(make(TokKind::SysLib, start));
    } else if (pos_ < src_.size() && src_[pos_] == '"') {
      out.push_back(next());
    } else {
      throw SyntaxFailure{"bad #include", u32(start)};
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

struct PNode {
  std::string kind;
  ByteRange range;
  std::vector<PNode> kids;
};

PNode node(std::string kind, std::vector<PNode> kids) {
  ByteRange r{kids.front().range.start, kids.back().range.end};
  return {std::move(kind), r, std::move(kids)};
}

PNode leaf(std::string kind, ByteRange r) { return {std::move(kind), r, {}}; }

const std::set<std::string_view> kJavaKeywords = {
    "class",  "public", "private", "protected", "static", "final",  "void",  "int",
    "long",   "short",  "byte",    "char",      "float",  "double", "boolean", "if",
    "else",   "while",  "for",     "return",    "break",  "continue", "new", "true",
    "false",  "null",   "this"};
const std::set<std::string_view> kCKeywords = {
    "int",  "char", "float",  "double", "void",   "bool",   "long",     "short",  "unsigned",
    "signed", "size_t", "if", "else",   "while",  "for",    "return",   "break",  "continue",
    "sizeof", "true", "false", "NULL"};

class Parser {
 public:
  Parser(std::string_view src, Language lang, std::vector<Tok> toks)
      : src_(src), lang_(lang), toks_(std::move(toks)) {}

  PNode parse_root() {
    std::vector<PNode> items;
    while (!at_end()) {
      const std::size_t mark = pos_;
      try {
        items.push_back(lang_ == Language::Java ? java_top_level() : c_top_level());
      } catch (const SyntaxFailure&) {
        pos_ = mark;
        items.push_back(recover());
      }
    }
    const auto len = static_cast<std::uint32_t>(src_.size());
    PNode root{java() ? "program" : "translation_unit", {0, len}, std::move(items)};
    if (!root.kids.empty()) root.range.start = root.kids.front().range.start;
    return root;
  }

 private:
  bool java() const { return lang_ == Language::Java; }

  // --- token helpers -------------------------------------------------------
  const Tok& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  bool at_end() const { return peek().kind == TokKind::End; }
  bool at(std::string_view text, std::size_t ahead = 0) const {
    const auto& t = peek(ahead);
    return (t.kind == TokKind::Punct || t.kind == TokKind::Ident) && t.text == text;
  }
  bool keyword(std::string_view text) const {
    return java() ? kJavaKeywords.count(text) > 0 : kCKeywords.count(text) > 0;
  }
  bool at_identifier(std::size_t ahead = 0) const {
    const auto& t = peek(ahead);
    return t.kind == TokKind::Ident && !keyword(t.text);
  }
  [[noreturn]] void fail(std::string message) const {
    throw SyntaxFailure{std::move(message), peek().range.start};
  }
  PNode take_leaf() {
    const Tok& t = peek();
    if (t.kind == TokKind::End) fail("unexpected end of input");
    ++pos_;
    return leaf(std::string(t.text), t.range);
  }
  PNode expect(std::string_view text) {
    if (!at(text)) fail("expected '" + std::string(text) + "'");
    return take_leaf();
  }
  PNode identifier(std::string kind = "identifier") {
    if (!at_identifier()) fail("expected identifier");
    const Tok& t = peek();
    ++pos_;
    return leaf(std::move(kind), t.range);
  }

  // Consumes to the end of the current statement and wraps it in ERROR.
  PNode recover() {
    std::vector<PNode> kids;
    int depth = 0;
    while (!at_end()) {
      if (at("}") && depth == 0) break;
      if (at("{")) ++depth;
      if (at("}")) --depth;
      kids.push_back(generic_leaf());
      if (depth == 0 && (kids.back().kind == ";" || kids.back().kind == "}")) break;
    }
    if (depth != 0) throw SyntaxFailure{"unbalanced braces", peek().range.start};
    if (kids.empty()) fail("cannot recover");
    return node("ERROR", std::move(kids));
  }

  PNode generic_leaf() {
    const Tok& t = peek();
    switch (t.kind) {
      case TokKind::Ident:
        if (!keyword(t.text)) {
          ++pos_;
          return leaf("identifier", t.range);
        }
        return take_leaf();
      case TokKind::Number:
        return number();
      case TokKind::String:
        return string_literal();
      case TokKind::Char:
        return char_literal();
      default:
        return take_leaf();
    }
  }

  // --- types ---------------------------------------------------------------
  static bool java_integral(std::string_view s) {
    return s == "int" || s == "long" || s == "short" || s == "byte" || s == "char";
  }
  static bool java_primitive(std::string_view s) {
    return java_integral(s) || s == "float" || s == "double" || s == "boolean" || s == "void";
  }
  static bool c_primitive(std::string_view s) {
    return s == "int" || s == "char" || s == "float" || s == "double" || s == "void" ||
           s == "bool" || s == "size_t";
  }
  static bool c_size_modifier(std::string_view s) {
    return s == "unsigned" || s == "signed" || s == "long" || s == "short";
  }

  bool at_java_type_start() const {
    const auto& t = peek();
    if (t.kind != TokKind::Ident) return false;
    if (java_primitive(t.text)) return true;
    if (!at_identifier()) return false;
    if (at_identifier(1)) return true;  // Foo x
    return at("[", 1) && at("]", 2);    // Foo[] x
  }
  bool at_c_type_start() const {
    const auto& t = peek();
    return t.kind == TokKind::Ident && (c_primitive(t.text) || c_size_modifier(t.text));
  }

  PNode java_type() {
    const Tok& t = peek();
    PNode base;
    if (t.kind != TokKind::Ident) fail("expected type");
    if (java_integral(t.text)) {
      base = node("integral_type", {take_leaf()});
    } else if (t.text == "float" || t.text == "double") {
      base = node("floating_point_type", {take_leaf()});
    } else if (t.text == "boolean") {
      ++pos_;
      base = leaf("boolean_type", t.range);
    } else if (t.text == "void") {
      ++pos_;
      base = leaf("void_type", t.range);
    } else {
      base = identifier("type_identifier");
    }
    if (at("[") && at("]", 1)) {
      std::vector<PNode> dims;
      while (at("[") && at("]", 1)) {
        dims.push_back(take_leaf());
        dims.push_back(take_leaf());
      }
      base = node("array_type", {std::move(base), node("dimensions", std::move(dims))});
    }
    return base;
  }

  PNode c_type() {
    if (c_size_modifier(peek().text)) {
      std::vector<PNode> kids;
      while (c_size_modifier(peek().text)) kids.push_back(take_leaf());
      if (peek().kind == TokKind::Ident && c_primitive(peek().text) && peek().text != "void") {
        const Tok& t = peek();
        ++pos_;
        kids.push_back(leaf("primitive_type", t.range));
      }
      return node("sized_type_specifier", std::move(kids));
    }
    if (peek().kind == TokKind::Ident && c_primitive(peek().text)) {
      const Tok& t = peek();
      ++pos_;
      return leaf("primitive_type", t.range);
    }
    fail("expected type");
  }

  // --- top level -----------------------------------------------------------
  PNode java_modifiers() {
    std::vector<PNode> kids;
    while (at("public") || at("private") || at("protected") || at("static") || at("final")) {
      kids.push_back(take_leaf());
    }
    return node("modifiers", std::move(kids));
  }
  bool at_modifier() const {
    return at("public") || at("private") || at("protected") || at("static") || at("final");
  }

  PNode java_top_level() {
    std::size_t look = 0;
    while (at("public", look) || at("private", look) || at("protected", look) ||
           at("static", look) || at("final", look)) {
      ++look;
    }
    if (at("class", look)) return java_class();
    if (at_modifier() || java_method_ahead()) return java_member(false);
    return statement();
  }

  bool java_method_ahead() const {
    // type identifier '(' with optional array dims on the type
    if (!at_java_type_start()) return false;
    std::size_t i = 1;
    while (at("[", i) && at("]", i + 1)) i += 2;
    return at_identifier(i) && at("(", i + 1);
  }

  PNode java_class() {
    std::vector<PNode> kids;
    if (at_modifier()) kids.push_back(java_modifiers());
    kids.push_back(expect("class"));
    kids.push_back(identifier());
    std::vector<PNode> body;
    body.push_back(expect("{"));
    while (!at("}")) {
      if (at_end()) fail("unterminated class body");
      body.push_back(java_member(true));
    }
    body.push_back(expect("}"));
    kids.push_back(node("class_body", std::move(body)));
    return node("class_declaration", std::move(kids));
  }

  PNode java_member(bool in_class) {
    std::vector<PNode> kids;
    if (at_modifier()) kids.push_back(java_modifiers());
    kids.push_back(java_type());
    if (at_identifier() && at("(", 1)) {
      kids.push_back(identifier());
      kids.push_back(java_formal_parameters());
      kids.push_back(block());
      return node("method_declaration", std::move(kids));
    }
    if (!in_class) fail("expected method declaration");
    declarators(kids);
    kids.push_back(expect(";"));
    return node("field_declaration", std::move(kids));
  }

  PNode java_formal_parameters() {
    std::vector<PNode> kids;
    kids.push_back(expect("("));
    if (!at(")")) {
      while (true) {
        std::vector<PNode> param;
        param.push_back(java_type());
        param.push_back(identifier());
        kids.push_back(node("formal_parameter", std::move(param)));
        if (!at(",")) break;
        kids.push_back(take_leaf());
      }
    }
    kids.push_back(expect(")"));
    return node("formal_parameters", std::move(kids));
  }

  PNode c_top_level() {
    if (peek().kind == TokKind::Include) {
      const Tok& hash = peek();
      ++pos_;
      std::vector<PNode> kids{leaf("#include", hash.range)};
      if (peek().kind == TokKind::SysLib) {
        const Tok& lib = peek();
        ++pos_;
        kids.push_back(leaf("system_lib_string", lib.range));
      } else {
        kids.push_back(string_literal());
      }
      PNode inc = node("preproc_include", std::move(kids));
      // the directive owns its terminating newline
      std::uint32_t end = inc.range.end;
      while (end < src_.size() && src_[end] != '\n') ++end;
      if (end < src_.size()) ++end;
      inc.range.end = end;
      return inc;
    }
    if (!at_c_type_start()) return statement();
    const std::size_t mark = pos_;
    PNode type = c_type();
    if (at_identifier() && at("(", 1)) {
      std::vector<PNode> decl_kids;
      decl_kids.push_back(identifier());
      decl_kids.push_back(c_parameter_list());
      PNode declarator = node("function_declarator", std::move(decl_kids));
      // push_back, not a braced list: a throwing block() must not leak the
      // already-built elements
      std::vector<PNode> kids;
      kids.push_back(std::move(type));
      kids.push_back(std::move(declarator));
      if (at(";")) {
        kids.push_back(take_leaf());
        return node("declaration", std::move(kids));
      }
      kids.push_back(block());
      return node("function_definition", std::move(kids));
    }
    pos_ = mark;
    return declaration();
  }

  PNode c_parameter_list() {
    std::vector<PNode> kids;
    kids.push_back(expect("("));
    if (!at(")")) {
      while (true) {
        std::vector<PNode> param;
        param.push_back(c_type());
        if (!at(",") && !at(")")) param.push_back(c_declarator());
        kids.push_back(node("parameter_declaration", std::move(param)));
        if (!at(",")) break;
        kids.push_back(take_leaf());
      }
    }
    kids.push_back(expect(")"));
    return node("parameter_list", std::move(kids));
  }

  PNode c_declarator() {
    if (at("*")) {
      std::vector<PNode> kids;
      kids.push_back(take_leaf());
      kids.push_back(c_declarator());
      return node("pointer_declarator", std::move(kids));
    }
    PNode d = identifier();
    while (at("[")) {
      std::vector<PNode> kids;
      kids.push_back(std::move(d));
      kids.push_back(take_leaf());
      if (!at("]")) kids.push_back(assignment());
      kids.push_back(expect("]"));
      d = node("array_declarator", std::move(kids));
    }
    return d;
  }

  // --- statements ----------------------------------------------------------
  PNode block() {
    std::vector<PNode> kids;
    kids.push_back(expect("{"));
    while (!at("}")) {
      if (at_end()) throw SyntaxFailure{"unterminated block", peek().range.start};
      const std::size_t mark = pos_;
      try {
        kids.push_back(statement());
      } catch (const SyntaxFailure&) {
        pos_ = mark;
        kids.push_back(recover());
      }
    }
    kids.push_back(expect("}"));
    return node(java() ? "block" : "compound_statement", std::move(kids));
  }

  bool at_declaration() const { return java() ? at_java_type_start() : at_c_type_start(); }

  PNode statement() {
    if (at("{")) return block();
    if (at("if")) return if_statement();
    if (at("while")) {
      std::vector<PNode> kids;
      kids.push_back(take_leaf());
      kids.push_back(parenthesized());
      kids.push_back(statement());
      return node("while_statement", std::move(kids));
    }
    if (at("for")) return for_statement();
    if (at("return")) {
      std::vector<PNode> kids;
      kids.push_back(take_leaf());
      if (!at(";")) kids.push_back(expression());
      kids.push_back(expect(";"));
      return node("return_statement", std::move(kids));
    }
    if (at("break") || at("continue")) {
      const std::string kind = at("break") ? "break_statement" : "continue_statement";
      std::vector<PNode> kids;
      kids.push_back(take_leaf());
      kids.push_back(expect(";"));
      return node(kind, std::move(kids));
    }
    if (at(";")) {
      PNode semi = take_leaf();
      if (java()) return semi;
      return node("expression_statement", {std::move(semi)});
    }
    if (at_declaration()) return declaration();
    std::vector<PNode> kids;
    kids.push_back(expression());
    kids.push_back(expect(";"));
    return node("expression_statement", std::move(kids));
  }

  PNode if_statement() {
    std::vector<PNode> kids;
    kids.push_back(expect("if"));
    kids.push_back(parenthesized());
    kids.push_back(statement());
    if (at("else")) {
      if (java()) {
        kids.push_back(take_leaf());
        kids.push_back(statement());
      } else {
        std::vector<PNode> clause;
        clause.push_back(take_leaf());
        clause.push_back(statement());
        kids.push_back(node("else_clause", std::move(clause)));
      }
    }
    return node("if_statement", std::move(kids));
  }

  PNode for_statement() {
    std::vector<PNode> kids;
    kids.push_back(expect("for"));
    kids.push_back(expect("("));
    if (at_declaration()) {
      kids.push_back(declaration());
    } else {
      if (!at(";")) comma_items(kids);
      kids.push_back(expect(";"));
    }
    if (!at(";")) kids.push_back(expression());
    kids.push_back(expect(";"));
    if (!at(")")) comma_items(kids);
    kids.push_back(expect(")"));
    kids.push_back(statement());
    return node("for_statement", std::move(kids));
  }

  // Java for-clauses list their expressions flat; C wraps them in comma_expression.
  void comma_items(std::vector<PNode>& kids) {
    if (java()) {
      kids.push_back(assignment());
      while (at(",")) {
        kids.push_back(take_leaf());
        kids.push_back(assignment());
      }
    } else {
      kids.push_back(expression());
    }
  }

  // Declarations are emitted flat: the declarator wrapper is spliced away so
  // the type, declared name and '=' are siblings.
  PNode declaration() {
    std::vector<PNode> kids;
    kids.push_back(java() ? java_type() : c_type());
    declarators(kids);
    kids.push_back(expect(";"));
    return node(java() ? "local_variable_declaration" : "declaration", std::move(kids));
  }

  void declarators(std::vector<PNode>& kids) {
    while (true) {
      kids.push_back(java() ? identifier() : c_declarator());
      if (at("=")) {
        kids.push_back(take_leaf());
        kids.push_back(at("{") ? initializer_list() : assignment());
      }
      if (!at(",")) break;
      kids.push_back(take_leaf());
    }
  }

  PNode initializer_list() {
    std::vector<PNode> kids;
    kids.push_back(expect("{"));
    while (!at("}")) {
      kids.push_back(at("{") ? initializer_list() : assignment());
      if (!at(",")) break;
      kids.push_back(take_leaf());
    }
    kids.push_back(expect("}"));
    return node(java() ? "array_initializer" : "initializer_list", std::move(kids));
  }

  // --- expressions ---------------------------------------------------------
  PNode parenthesized() {
    std::vector<PNode> kids;
    kids.push_back(expect("("));
    kids.push_back(expression());
    kids.push_back(expect(")"));
    return node("parenthesized_expression", std::move(kids));
  }

  PNode expression() {
    PNode first = assignment();
    if (java() || !at(",")) return first;
    std::vector<PNode> kids;
    kids.push_back(std::move(first));
    kids.push_back(take_leaf());
    kids.push_back(expression());
    return node("comma_expression", std::move(kids));
  }

  static bool assignment_op(std::string_view s) {
    return s == "=" || s == "+=" || s == "-=" || s == "*=" || s == "/=" || s == "%=" ||
           s == "&=" || s == "|=" || s == "^=" || s == "<<=" || s == ">>=" || s == ">>>=";
  }

  PNode assignment() {
    PNode lhs = ternary();
    if (peek().kind == TokKind::Punct && assignment_op(peek().text)) {
      std::vector<PNode> kids;
      kids.push_back(std::move(lhs));
      kids.push_back(take_leaf());
      kids.push_back(assignment());
      return node("assignment_expression", std::move(kids));
    }
    return lhs;
  }

  PNode ternary() {
    PNode cond = binary(0);
    if (!at("?")) return cond;
    std::vector<PNode> kids;
    kids.push_back(std::move(cond));
    kids.push_back(take_leaf());
    kids.push_back(assignment());
    kids.push_back(expect(":"));
    kids.push_back(assignment());
    return node(java() ? "ternary_expression" : "conditional_expression", std::move(kids));
  }

  static constexpr std::size_t kLevels = 10;
  static bool binary_op_at_level(std::string_view s, std::size_t level) {
    switch (level) {
      case 0: return s == "||";
      case 1: return s == "&&";
      case 2: return s == "|";
      case 3: return s == "^";
      case 4: return s == "&";
      case 5: return s == "==" || s == "!=";
      case 6: return s == "<" || s == ">" || s == "<=" || s == ">=";
      case 7: return s == "<<" || s == ">>" || s == ">>>";
      case 8: return s == "+" || s == "-";
      case 9: return s == "*" || s == "/" || s == "%";
      default: return false;
    }
  }

  PNode binary(std::size_t level) {
    if (level == kLevels) return unary();
    PNode left = binary(level + 1);
    while (peek().kind == TokKind::Punct && binary_op_at_level(peek().text, level)) {
      std::vector<PNode> kids;
      kids.push_back(std::move(left));
      kids.push_back(take_leaf());
      kids.push_back(binary(level + 1));
      left = node("binary_expression", std::move(kids));
    }
    return left;
  }

  bool cast_ahead() const {
    if (!at("(")) return false;
    if (java()) {
      std::size_t i = 1;
      if (!(peek(1).kind == TokKind::Ident && java_primitive(peek(1).text))) return false;
      ++i;
      while (at("[", i) && at("]", i + 1)) i += 2;
      return at(")", i);
    }
    std::size_t i = 1;
    bool saw = false;
    while (peek(i).kind == TokKind::Ident && (c_primitive(peek(i).text) || c_size_modifier(peek(i).text))) {
      ++i;
      saw = true;
    }
    while (at("*", i)) ++i;
    return saw && at(")", i);
  }

  PNode c_type_descriptor() {
    std::vector<PNode> kids;
    kids.push_back(c_type());
    if (at("*")) {
      std::vector<PNode> ptr;
      while (at("*")) ptr.push_back(take_leaf());
      kids.push_back(node("abstract_pointer_declarator", std::move(ptr)));
    }
    return node("type_descriptor", std::move(kids));
  }

  PNode unary() {
    const Tok& t = peek();
    if (t.kind == TokKind::Punct) {
      if (!java() && t.text == "-" && peek(1).kind == TokKind::Number &&
          peek(1).range.start == t.range.end) {
        const ByteRange r{t.range.start, peek(1).range.end};
        pos_ += 2;
        return leaf("number_literal", r);
      }
      if (t.text == "!" || t.text == "~" || t.text == "-" || t.text == "+") {
        std::vector<PNode> kids;
        kids.push_back(take_leaf());
        kids.push_back(unary());
        return node("unary_expression", std::move(kids));
      }
      if (t.text == "++" || t.text == "--") {
        std::vector<PNode> kids;
        kids.push_back(take_leaf());
        kids.push_back(unary());
        return node("update_expression", std::move(kids));
      }
      if (!java() && (t.text == "&" || t.text == "*")) {
        std::vector<PNode> kids;
        kids.push_back(take_leaf());
        kids.push_back(unary());
        return node("pointer_expression", std::move(kids));
      }
      if (cast_ahead()) {
        std::vector<PNode> kids;
        kids.push_back(take_leaf());
        kids.push_back(java() ? java_type() : c_type_descriptor());
        kids.push_back(expect(")"));
        kids.push_back(unary());
        return node("cast_expression", std::move(kids));
      }
    }
    if (!java() && at("sizeof")) {
      std::vector<PNode> kids;
      kids.push_back(take_leaf());
      if (at("(") && peek(1).kind == TokKind::Ident &&
          (c_primitive(peek(1).text) || c_size_modifier(peek(1).text))) {
        kids.push_back(take_leaf());
        kids.push_back(c_type_descriptor());
        kids.push_back(expect(")"));
      } else {
        kids.push_back(unary());
      }
      return node("sizeof_expression", std::move(kids));
    }
    return postfix();
  }

  PNode argument_list() {
    std::vector<PNode> kids;
    kids.push_back(expect("("));
    if (!at(")")) {
      while (true) {
        kids.push_back(assignment());
        if (!at(",")) break;
        kids.push_back(take_leaf());
      }
    }
    kids.push_back(expect(")"));
    return node("argument_list", std::move(kids));
  }

  PNode postfix() {
    PNode e = primary();
    while (true) {
      if (at("(") && (!java() || e.kind == "identifier")) {
        std::vector<PNode> kids;
        kids.push_back(std::move(e));
        kids.push_back(argument_list());
        e = node(java() ? "method_invocation" : "call_expression", std::move(kids));
      } else if (java() && at(".")) {
        std::vector<PNode> kids;
        kids.push_back(std::move(e));
        kids.push_back(take_leaf());
        kids.push_back(identifier());
        if (at("(")) {
          kids.push_back(argument_list());
          e = node("method_invocation", std::move(kids));
        } else {
          e = node("field_access", std::move(kids));
        }
      } else if (!java() && (at(".") || at("->"))) {
        std::vector<PNode> kids;
        kids.push_back(std::move(e));
        kids.push_back(take_leaf());
        kids.push_back(identifier("field_identifier"));
        e = node("field_expression", std::move(kids));
      } else if (at("[")) {
        std::vector<PNode> kids;
        kids.push_back(std::move(e));
        kids.push_back(take_leaf());
        kids.push_back(expression());
        kids.push_back(expect("]"));
        e = node(java() ? "array_access" : "subscript_expression", std::move(kids));
      } else if (at("++") || at("--")) {
        std::vector<PNode> kids;
        kids.push_back(std::move(e));
        kids.push_back(take_leaf());
        e = node("update_expression", std::move(kids));
      } else {
        return e;
      }
    }
  }

  PNode number() {
    const Tok& t = peek();
    ++pos_;
    if (!java()) return leaf("number_literal", t.range);
    const std::string_view s = t.text;
    if (s.size() > 1 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
      return leaf("hex_integer_literal", t.range);
    }
    const bool floating = s.find('.') != std::string_view::npos ||
                          s.find_first_of("eE") != std::string_view::npos ||
                          s.back() == 'f' || s.back() == 'F' || s.back() == 'd' || s.back() == 'D';
    return leaf(floating ? "decimal_floating_point_literal" : "decimal_integer_literal", t.range);
  }

  // Splits "...\n..." into quote / fragment / escape_sequence leaves.
  PNode string_literal() {
    const Tok& t = peek();
    if (t.kind != TokKind::String) fail("expected string literal");
    ++pos_;
    const std::string fragment = java() ? "string_fragment" : "string_content";
    std::vector<PNode> kids;
    const std::uint32_t base = t.range.start;
    kids.push_back(leaf("\"", {base, base + 1}));
    std::uint32_t i = 1;
    const auto last = static_cast<std::uint32_t>(t.text.size() - 1);
    std::uint32_t run = i;
    while (i < last) {
      if (t.text[i] == '\\') {
        if (run < i) kids.push_back(leaf(fragment, {base + run, base + i}));
        const std::uint32_t esc = i;
        i = escape_end(t.text, i);
        kids.push_back(leaf("escape_sequence", {base + esc, base + i}));
        run = i;
      } else {
        ++i;
      }
    }
    if (run < last) kids.push_back(leaf(fragment, {base + run, base + last}));
    kids.push_back(leaf("\"", {base + last, base + last + 1}));
    return node("string_literal", std::move(kids));
  }

  static std::uint32_t escape_end(std::string_view text, std::uint32_t i) {
    const auto limit = static_cast<std::uint32_t>(text.size() - 1);
    std::uint32_t j = i + 1;  // past the backslash
    if (j >= limit) return limit;
    const char c = text[j];
    auto take_while = [&](auto pred, std::uint32_t max) {
      std::uint32_t k = 0;
      while (j < limit && k < max && pred(text[j])) {
        ++j;
        ++k;
      }
    };
    auto is_hex = [](char ch) { return std::isxdigit(static_cast<unsigned char>(ch)) != 0; };
    if (c == 'x') {
      ++j;
      take_while(is_hex, 2);
    } else if (c == 'u') {
      ++j;
      take_while(is_hex, 4);
    } else if (c >= '0' && c <= '7') {
      take_while([](char ch) { return ch >= '0' && ch <= '7'; }, 3);
    } else {
      ++j;
    }
    return j;
  }

  PNode char_literal() {
    const Tok& t = peek();
    ++pos_;
    if (java()) return leaf("character_literal", t.range);
    const std::uint32_t base = t.range.start;
    const auto last = static_cast<std::uint32_t>(t.text.size() - 1);
    std::vector<PNode> kids;
    kids.push_back(leaf("'", {base, base + 1}));
    if (last > 1) {
      const bool esc = t.text[1] == '\\';
      kids.push_back(leaf(esc ? "escape_sequence" : "character", {base + 1, base + last}));
    }
    kids.push_back(leaf("'", {base + last, base + last + 1}));
    return node("char_literal", std::move(kids));
  }

  PNode primary() {
    const Tok& t = peek();
    switch (t.kind) {
      case TokKind::Number:
        return number();
      case TokKind::String:
        return string_literal();
      case TokKind::Char:
        return char_literal();
      case TokKind::Ident:
        break;
      default:
        if (at("(")) return parenthesized();
        fail("expected expression");
    }
    if (at_identifier()) return identifier();
    if (t.text == "true" || t.text == "false" || (java() && t.text == "this")) return take_leaf();
    if (java() && t.text == "null") {
      ++pos_;
      return leaf("null_literal", t.range);
    }
    if (!java() && t.text == "NULL") return node("null", {take_leaf()});
    if (java() && t.text == "new") return java_new();
    fail("unexpected keyword '" + std::string(t.text) + "'");
  }

  PNode java_new() {
    std::vector<PNode> kids;
    kids.push_back(expect("new"));
    const Tok& t = peek();
    PNode type;
    if (t.kind == TokKind::Ident && java_integral(t.text)) {
      type = node("integral_type", {take_leaf()});
    } else if (t.text == "float" || t.text == "double") {
      type = node("floating_point_type", {take_leaf()});
    } else if (t.text == "boolean") {
      ++pos_;
      type = leaf("boolean_type", t.range);
    } else {
      type = identifier("type_identifier");
    }
    kids.push_back(std::move(type));
    if (at("(")) {
      kids.push_back(argument_list());
      return node("object_creation_expression", std::move(kids));
    }
    if (!at("[")) fail("expected array dimensions");
    while (at("[") && !at("]", 1)) {
      std::vector<PNode> dim;
      dim.push_back(take_leaf());
      dim.push_back(expression());
      dim.push_back(expect("]"));
      kids.push_back(node("dimensions_expr", std::move(dim)));
    }
    if (at("[") && at("]", 1)) {
      std::vector<PNode> dims;
      while (at("[") && at("]", 1)) {
        dims.push_back(take_leaf());
        dims.push_back(take_leaf());
      }
      kids.push_back(node("dimensions", std::move(dims)));
    }
    return node("array_creation_expression", std::move(kids));
  }

  std::string_view src_;
  Language lang_;
  std::vector<Tok> toks_;
  std::size_t pos_ = 0;
};

void flatten(PNode& p, NodeId parent, AstTree& tree) {
  const auto id = static_cast<NodeId>(tree.nodes.size());
  tree.nodes.push_back(AstNode{id, std::move(p.kind), p.range, {}, parent});
  for (auto& kid : p.kids) {
    const auto child_id = static_cast<NodeId>(tree.nodes.size());
    tree.nodes[static_cast<std::size_t>(id)].children.push_back(child_id);
    flatten(kid, id, tree);
  }
}

}  // namespace

AstTree parse_minilang(std::string_view code, Language language, std::string source_id) {
  PNode root;
  try {
    Parser parser(code, language, Lexer(code).run());
    root = parser.parse_root();
  } catch (const SyntaxFailure& f) {
    throw ParseError("parse error at byte " + std::to_string(f.offset) + ": " + f.message);
  }
  AstTree tree;
  tree.language = language;
  tree.source_id = std::move(source_id);
  flatten(root, kNoNode, tree);
  tree.root = 0;
  return tree;
}

}  // namespace codeprobe::detail
