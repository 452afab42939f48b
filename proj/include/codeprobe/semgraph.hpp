#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "codeprobe/ast.hpp"

namespace codeprobe {

enum class GraphKind { CDG, DDG, CFG };

std::string_view to_string(GraphKind kind);
GraphKind graph_kind_from_string(std::string_view name);

enum class SemNodeKind { Statement, Predicate, Entry, Exit };

using SemNodeId = std::int32_t;

struct SemNode {
  SemNodeId id = -1;
  ByteRange code_range;
  std::string code_text;
  SemNodeKind kind = SemNodeKind::Statement;

  bool is_sentinel() const { return kind == SemNodeKind::Entry || kind == SemNodeKind::Exit; }
};

struct SemEdge {
  SemNodeId src = -1;
  SemNodeId dst = -1;
  std::string variable;  // DDG only; empty otherwise

  friend auto operator<=>(const SemEdge&, const SemEdge&) = default;
};

/// Statement-level program graph. Nodes are kept sorted by id, edges sorted
/// and unique.
struct SemanticGraph {
  GraphKind kind = GraphKind::CFG;
  std::string source_id;
  std::vector<SemNode> nodes;
  std::vector<SemEdge> edges;

  const SemNode* find(SemNodeId id) const;
  std::optional<SemNodeId> entry() const;
  std::optional<SemNodeId> exit() const;

  std::vector<SemNodeId> successors(SemNodeId id) const;
  std::vector<SemNodeId> predecessors(SemNodeId id) const;
  /// Adjacent in either direction, excluding `id` itself.
  std::vector<SemNodeId> neighbors(SemNodeId id) const;
  /// Distinct (src, dst) pairs, ignoring DDG variable annotations.
  std::set<std::pair<SemNodeId, SemNodeId>> edge_pairs() const;

  /// Sorts nodes/edges and drops duplicate edges.
  void normalize();
};

/// Statement-level graphs for the single function in `tree` (or the root's
/// statement list when the tree has no function). Node ids are shared by all
/// three builders: 0 is entry, 1 is exit, statements follow in source order.
/// Statements unreachable from entry are omitted from all three graphs.
SemanticGraph build_cfg(const AstTree& tree, std::string_view source);
SemanticGraph build_cdg(const AstTree& tree, std::string_view source);
SemanticGraph build_ddg(const AstTree& tree, std::string_view source);

/// Syntax-directed control dependence: statements directly inside an if arm
/// or loop body depend on that construct's predicate, everything else on
/// entry. Coincides with build_cdg only for programs without
/// break/continue/early return.
SemanticGraph build_structural_cdg(const AstTree& tree, std::string_view source);

/// Control dependence computed from a CFG via its post-dominator tree
/// (entry->exit augmented). Self-dependences are dropped.
SemanticGraph control_dependence_from_cfg(const SemanticGraph& cfg);

/// Variables defined and used by one statement node of the graphs above.
struct DefUse {
  std::set<std::string> defs;
  std::set<std::string> uses;
};
std::vector<std::pair<SemNodeId, DefUse>> statement_def_use(const AstTree& tree, std::string_view source);

/// Text document with `NODES` (`id start end`) and `EDGES`
/// (`src dst kind [variable]`) sections, tab separated.
std::string export_graph(const SemanticGraph& graph);
/// Keeps the edges tagged `kind`; empty-range nodes become entry/exit.
SemanticGraph import_graph(std::string_view document, GraphKind kind, std::string_view source,
                           std::string source_id = {});

/// Repeatedly folds a node into an adjacent node whose range contains it.
SemanticGraph merge_redundant_nodes(const SemanticGraph& graph);

/// Throws Error when the kind-specific invariants do not hold.
void validate_graph(const SemanticGraph& graph);

}  // namespace codeprobe
