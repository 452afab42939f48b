#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "codeprobe/common.hpp"

namespace codeprobe {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

/// One node of a concrete parse tree, kinds follow tree-sitter naming
/// ("if_statement", "identifier", anonymous tokens such as "(").
struct AstNode {
  NodeId id = kNoNode;
  std::string kind;
  ByteRange range;
  std::vector<NodeId> children;
  NodeId parent = kNoNode;

  bool is_leaf() const { return children.empty(); }
};

/// Parse tree with node ids equal to pre-order positions.
struct AstTree {
  Language language = Language::Java;
  std::string source_id;
  NodeId root = kNoNode;
  std::vector<AstNode> nodes;

  const AstNode& node(NodeId id) const { return nodes.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes.size(); }

  /// Leaves in source order.
  std::vector<NodeId> leaves() const;

  /// Throws ImportError when a structural invariant is violated.
  void validate(std::size_t source_length) const;
};

struct EmbeddedProvider {};
struct ImportProvider {
  std::string document;
};
using AstProvider = std::variant<EmbeddedProvider, ImportProvider>;

/// Parses `code` into a tree. The embedded provider covers the MiniLang
/// subset; the import provider reads a parse-tree document produced by an
/// external grammar (see write_tree_document for the format).
AstTree parse_source(std::string_view code, Language language,
                     const AstProvider& provider = EmbeddedProvider{},
                     std::string source_id = {});

/// `id<TAB>parent<TAB>kind<TAB>start<TAB>end` per node, pre-order, root parent -1.
std::string write_tree_document(const AstTree& tree);
AstTree read_tree_document(std::string_view document, std::size_t source_length,
                           Language language, std::string source_id = {});

/// An internal node together with its direct children.
struct SyntaxUnit {
  std::size_t unit_id = 0;
  NodeId root_node = kNoNode;
  std::vector<NodeId> member_nodes;  // sorted ascending

  bool contains(NodeId id) const;
};

/// One unit per internal node, ordered by (root start, longer first, id).
std::vector<SyntaxUnit> split_syntax_units(const AstTree& tree);

struct TagLabel {
  std::string name;
  Language language = Language::Java;

  bool is_other() const { return name == kOther; }
  friend bool operator==(const TagLabel&, const TagLabel&) = default;

  static constexpr std::string_view kOther = "OTHER";
};

/// Fixed tagging vocabulary per language (36 Java kinds, 33 C kinds).
const std::vector<std::string>& tag_vocabulary(Language language);
bool in_tag_vocabulary(Language language, std::string_view kind);

/// Short display name used in figures ("PE" for parenthesized_expression);
/// falls back to the kind itself.
std::string tag_abbreviation(std::string_view kind);

/// Each leaf is labeled with the kind of its nearest strict ancestor that is
/// in the vocabulary, or OTHER.
std::vector<std::pair<NodeId, TagLabel>> tag_tokens(const AstTree& tree);

/// Labels with count >= threshold.
std::set<std::string> filter_rare_labels(const std::map<std::string, std::size_t>& counts,
                                         std::size_t threshold = 200);

}  // namespace codeprobe
