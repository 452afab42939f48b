#include "codeprobe/ast.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <unordered_map>

#include "minilang_parser.hpp"

namespace codeprobe {

std::vector<NodeId> AstTree::leaves() const {
  std::vector<NodeId> out;
  if (root == kNoNode) return out;
  std::vector<NodeId> stack{root};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    const auto& n = node(id);
    if (n.is_leaf()) {
      out.push_back(id);
    } else {
      for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
    }
  }
  return out;
}

void AstTree::validate(std::size_t source_length) const {
  if (nodes.empty() || root == kNoNode) throw ImportError("tree has no root");
  std::size_t roots = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.id != static_cast<NodeId>(i)) throw ImportError("node ids must equal positions");
    if (n.range.start > n.range.end || n.range.end > source_length) {
      throw ImportError("node " + std::to_string(i) + " range outside source");
    }
    if (n.parent == kNoNode) ++roots;
    const AstNode* prev = nullptr;
    for (NodeId c : n.children) {
      if (c < 0 || static_cast<std::size_t>(c) >= nodes.size()) throw ImportError("dangling child");
      const auto& child = nodes[static_cast<std::size_t>(c)];
      if (child.parent != n.id) throw ImportError("parent link mismatch at node " + std::to_string(c));
      if (!n.range.contains(child.range)) {
        throw ImportError("node " + std::to_string(c) + " not contained in its parent");
      }
      if (prev && prev->range.end > child.range.start) {
        throw ImportError("children of node " + std::to_string(i) + " overlap or are unordered");
      }
      prev = &child;
    }
  }
  if (roots != 1 || nodes[static_cast<std::size_t>(root)].parent != kNoNode) {
    throw ImportError("tree must have exactly one root");
  }
}

namespace {

template <typename Int>
Int parse_int(std::string_view field, std::size_t line_no) {
  Int value{};
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw ImportError("line " + std::to_string(line_no) + ": bad integer '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

AstTree read_tree_document(std::string_view document, std::size_t source_length,
                           Language language, std::string source_id) {
  struct Row {
    long long id;
    long long parent;
    std::string kind;
    ByteRange range;
    std::size_t order;
  };
  std::vector<Row> rows;
  std::unordered_map<long long, std::size_t> by_id;
  std::size_t line_no = 0;
  for (auto line : split(document, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 5) {
      throw ImportError("line " + std::to_string(line_no) + ": expected 5 tab-separated fields");
    }
    Row row{parse_int<long long>(fields[0], line_no), parse_int<long long>(fields[1], line_no),
            std::string(fields[2]),
            {parse_int<std::uint32_t>(fields[3], line_no), parse_int<std::uint32_t>(fields[4], line_no)},
            rows.size()};
    if (row.kind.empty()) throw ImportError("line " + std::to_string(line_no) + ": empty kind");
    if (!by_id.emplace(row.id, rows.size()).second) {
      throw ImportError("duplicate node id " + std::to_string(row.id));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ImportError("empty parse-tree document");

  std::vector<std::vector<std::size_t>> kids(rows.size());
  std::size_t root = rows.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].parent == -1) {
      if (root != rows.size()) throw ImportError("multiple roots");
      root = i;
      continue;
    }
    auto it = by_id.find(rows[i].parent);
    if (it == by_id.end()) throw ImportError("node " + std::to_string(rows[i].id) + " has unknown parent");
    kids[it->second].push_back(i);
  }
  if (root == rows.size()) throw ImportError("no root node");

  // Renumber in pre-order with children sorted by position (stable on ties).
  AstTree tree;
  tree.language = language;
  tree.source_id = std::move(source_id);
  tree.root = 0;
  std::vector<std::pair<std::size_t, NodeId>> stack{{root, kNoNode}};
  std::vector<bool> seen(rows.size(), false);
  while (!stack.empty()) {
    auto [row_index, parent] = stack.back();
    stack.pop_back();
    if (seen[row_index]) throw ImportError("cycle in parent links");
    seen[row_index] = true;
    const auto id = static_cast<NodeId>(tree.nodes.size());
    tree.nodes.push_back(AstNode{id, rows[row_index].kind, rows[row_index].range, {}, parent});
    if (parent != kNoNode) tree.nodes[static_cast<std::size_t>(parent)].children.push_back(id);
    auto& order = kids[row_index];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return rows[a].range.start < rows[b].range.start;
    });
    for (auto it = order.rbegin(); it != order.rend(); ++it) stack.emplace_back(*it, id);
  }
  if (tree.nodes.size() != rows.size()) throw ImportError("nodes unreachable from root");
  tree.validate(source_length);
  return tree;
}

std::string write_tree_document(const AstTree& tree) {
  std::ostringstream out;
  for (const auto& n : tree.nodes) {
    out << n.id << '\t' << n.parent << '\t' << n.kind << '\t' << n.range.start << '\t'
        << n.range.end << '\n';
  }
  return out.str();
}

AstTree parse_source(std::string_view code, Language language, const AstProvider& provider,
                     std::string source_id) {
  if (const auto* imported = std::get_if<ImportProvider>(&provider)) {
    return read_tree_document(imported->document, code.size(), language, std::move(source_id));
  }
  AstTree tree = detail::parse_minilang(code, language, std::move(source_id));
  tree.validate(code.size());
  return tree;
}

bool SyntaxUnit::contains(NodeId id) const {
  return std::binary_search(member_nodes.begin(), member_nodes.end(), id);
}

std::vector<SyntaxUnit> split_syntax_units(const AstTree& tree) {
  std::vector<NodeId> roots;
  for (const auto& n : tree.nodes) {
    if (!n.is_leaf()) roots.push_back(n.id);
  }
  std::sort(roots.begin(), roots.end(), [&](NodeId a, NodeId b) {
    const auto& ra = tree.node(a).range;
    const auto& rb = tree.node(b).range;
    if (ra.start != rb.start) return ra.start < rb.start;
    if (ra.length() != rb.length()) return ra.length() > rb.length();
    return a < b;
  });
  std::vector<SyntaxUnit> units;
  units.reserve(roots.size());
  for (NodeId r : roots) {
    SyntaxUnit unit{units.size(), r, {r}};
    const auto& kids = tree.node(r).children;
    unit.member_nodes.insert(unit.member_nodes.end(), kids.begin(), kids.end());
    std::sort(unit.member_nodes.begin(), unit.member_nodes.end());
    units.push_back(std::move(unit));
  }
  return units;
}

const std::vector<std::string>& tag_vocabulary(Language language) {
  static const std::vector<std::string> java = {
      "modifiers",          "local_variable_declaration", "variable_declarator",
      "formal_parameters",  "array_type",                 "dimensions",
      "formal_parameter",   "block",                      "object_creation_expression",
      "argument_list",      "field_access",               "integral_type",
      "method_invocation",  "while_statement",            "parenthesized_expression",
      "if_statement",       "expression_statement",       "break_statement",
      "update_expression",  "assignment_expression",      "identifier",
      "for_statement",      "binary_expression",          "return_statement",
      "array_creation_expression", "dimensions_expr",     "array_access",
      "ERROR",              "unary_expression",           "throw_statement",
      "enhanced_for_statement", "ternary_expression",     "cast_expression",
      "generic_type",       "type_arguments",             "array_initializer"};
  static const std::vector<std::string> c = {
      "declaration",        "array_declarator",      "function_definition",
      "parameter_list",     "parameter_declaration", "compound_statement",
      "for_statement",      "assignment_expression", "binary_expression",
      "update_expression",  "subscript_expression",  "expression_statement",
      "if_statement",       "parenthesized_expression", "return_statement",
      "call_expression",    "argument_list",         "string_literal",
      "pointer_expression", "init_declarator",       "function_declarator",
      "cast_expression",    "type_descriptor",       "break_statement",
      "comma_expression",   "initializer_list",      "char_literal",
      "pointer_declarator", "continue_statement",    "while_statement",
      "field_expression",   "sizeof_expression",     "case_statement"};
  return language == Language::Java ? java : c;
}

bool in_tag_vocabulary(Language language, std::string_view kind) {
  const auto& vocab = tag_vocabulary(language);
  return std::find(vocab.begin(), vocab.end(), kind) != vocab.end();
}

std::string tag_abbreviation(std::string_view kind) {
  static const std::unordered_map<std::string_view, std::string_view> abbrev = {
      {"parenthesized_expression", "PE"}, {"binary_expression", "BE"},
      {"block", "B"},                     {"field_access", "FA"},
      {"method_invocation", "MI"},        {"argument_list", "AL"},
      {"expression_statement", "ES"}};
  auto it = abbrev.find(kind);
  return std::string(it == abbrev.end() ? kind : it->second);
}

std::vector<std::pair<NodeId, TagLabel>> tag_tokens(const AstTree& tree) {
  std::vector<std::pair<NodeId, TagLabel>> out;
  for (NodeId leaf : tree.leaves()) {
    TagLabel label{std::string(TagLabel::kOther), tree.language};
    for (NodeId up = tree.node(leaf).parent; up != kNoNode; up = tree.node(up).parent) {
      if (in_tag_vocabulary(tree.language, tree.node(up).kind)) {
        label.name = tree.node(up).kind;
        break;
      }
    }
    out.emplace_back(leaf, std::move(label));
  }
  return out;
}

std::set<std::string> filter_rare_labels(const std::map<std::string, std::size_t>& counts,
                                         std::size_t threshold) {
  std::set<std::string> kept;
  for (const auto& [name, count] : counts) {
    if (count >= threshold) kept.insert(name);
  }
  return kept;
}

}  // namespace codeprobe
