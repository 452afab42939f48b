#include "codeprobe/semgraph.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <map>
#include <sstream>

namespace codeprobe {

std::string_view to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::CDG: return "CDG";
    case GraphKind::DDG: return "DDG";
    case GraphKind::CFG: return "CFG";
  }
  return "?";
}

GraphKind graph_kind_from_string(std::string_view name) {
  if (name == "CDG" || name == "cdg") return GraphKind::CDG;
  if (name == "DDG" || name == "ddg") return GraphKind::DDG;
  if (name == "CFG" || name == "cfg") return GraphKind::CFG;
  throw ConfigError("unknown graph kind: " + std::string(name));
}

const SemNode* SemanticGraph::find(SemNodeId id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const SemNode& n, SemNodeId v) { return n.id < v; });
  return (it != nodes.end() && it->id == id) ? &*it : nullptr;
}

std::optional<SemNodeId> SemanticGraph::entry() const {
  for (const auto& n : nodes) {
    if (n.kind == SemNodeKind::Entry) return n.id;
  }
  return std::nullopt;
}

std::optional<SemNodeId> SemanticGraph::exit() const {
  for (const auto& n : nodes) {
    if (n.kind == SemNodeKind::Exit) return n.id;
  }
  return std::nullopt;
}

std::vector<SemNodeId> SemanticGraph::successors(SemNodeId id) const {
  std::vector<SemNodeId> out;
  for (const auto& e : edges) {
    if (e.src == id) out.push_back(e.dst);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<SemNodeId> SemanticGraph::predecessors(SemNodeId id) const {
  std::vector<SemNodeId> out;
  for (const auto& e : edges) {
    if (e.dst == id) out.push_back(e.src);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<SemNodeId> SemanticGraph::neighbors(SemNodeId id) const {
  std::vector<SemNodeId> out;
  for (const auto& e : edges) {
    if (e.src == id && e.dst != id) out.push_back(e.dst);
    if (e.dst == id && e.src != id) out.push_back(e.src);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::set<std::pair<SemNodeId, SemNodeId>> SemanticGraph::edge_pairs() const {
  std::set<std::pair<SemNodeId, SemNodeId>> out;
  for (const auto& e : edges) out.emplace(e.src, e.dst);
  return out;
}

void SemanticGraph::normalize() {
  std::sort(nodes.begin(), nodes.end(), [](const SemNode& a, const SemNode& b) { return a.id < b.id; });
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

namespace {

constexpr SemNodeId kEntry = 0;
constexpr SemNodeId kExit = 1;

struct GrammarKinds {
  std::string_view function;
  std::string_view block;
  std::string_view declaration;
};

GrammarKinds kinds_for(Language lang) {
  if (lang == Language::Java) return {"method_declaration", "block", "local_variable_declaration"};
  return {"function_definition", "compound_statement", "declaration"};
}

struct StmtNode {
  SemNodeId id;
  ByteRange range;
  SemNodeKind kind;
  std::vector<NodeId> ast_roots;
};

// Walks the function body once and records everything the three graph
// builders need: statement nodes, CFG edges and syntactic control parents.
class StatementWalker {
 public:
  StatementWalker(const AstTree& tree, std::string_view source)
      : tree_(tree), source_(source), kinds_(kinds_for(tree.language)) {
    nodes_.push_back({kEntry, {}, SemNodeKind::Entry, {}});
    nodes_.push_back({kExit, {}, SemNodeKind::Exit, {}});
    const NodeId body = locate_body();
    auto exits = build_sequence(statement_children(body), {kEntry}, kEntry);
    for (SemNodeId s : exits) cfg_.emplace(s, kExit);
    compute_reachable();
  }

  const std::vector<StmtNode>& nodes() const { return nodes_; }
  const std::set<std::pair<SemNodeId, SemNodeId>>& cfg_edges() const { return cfg_; }
  const std::set<std::pair<SemNodeId, SemNodeId>>& structural_cd() const { return structural_; }
  const std::set<std::string>& parameters() const { return params_; }
  bool reachable(SemNodeId id) const { return reachable_[static_cast<std::size_t>(id)]; }

  SemanticGraph skeleton(GraphKind kind) const {
    SemanticGraph g;
    g.kind = kind;
    g.source_id = tree_.source_id;
    for (const auto& s : nodes_) {
      if (!reachable(s.id)) continue;
      g.nodes.push_back({s.id, s.range, std::string(source_.substr(s.range.start, s.range.length())), s.kind});
    }
    return g;
  }

 private:
  const AstNode& n(NodeId id) const { return tree_.node(id); }

  NodeId locate_body() {
    std::vector<NodeId> functions;
    for (const auto& node : tree_.nodes) {
      if (node.kind == kinds_.function) functions.push_back(node.id);
    }
    if (functions.size() > 1) throw UnsupportedConstruct("more than one function in source");
    if (functions.empty()) return tree_.root;  // bare statement list
    const auto& fn = n(functions.front());
    NodeId body = kNoNode;
    for (NodeId c : fn.children) {
      if (n(c).kind == kinds_.block) body = c;
      collect_parameters(c);
    }
    if (body == kNoNode) throw UnsupportedConstruct("function without body");
    return body;
  }

  void collect_parameters(NodeId id) {
    const auto& node = n(id);
    if (node.kind == "formal_parameter" || node.kind == "parameter_declaration") {
      for (NodeId c : node.children) {
        if (auto name = declarator_name(c)) params_.insert(*name);
      }
      return;
    }
    if (node.kind == "function_declarator" || node.kind == "parameter_list" ||
        node.kind == "formal_parameters") {
      for (NodeId c : node.children) collect_parameters(c);
    }
  }

  std::optional<std::string> declarator_name(NodeId id) const {
    const auto& node = n(id);
    if (node.kind == "identifier") return text(id);
    if (node.kind == "array_declarator" || node.kind == "pointer_declarator") {
      for (NodeId c : node.children) {
        if (auto name = declarator_name(c)) return name;
      }
    }
    return std::nullopt;
  }

  std::string text(NodeId id) const {
    const auto& r = n(id).range;
    return std::string(source_.substr(r.start, r.length()));
  }

  std::vector<NodeId> statement_children(NodeId block) const {
    std::vector<NodeId> out;
    for (NodeId c : n(block).children) {
      const auto& k = n(c).kind;
      if (k == "{" || k == "}" || k == ";") continue;
      out.push_back(c);
    }
    return out;
  }

  SemNodeId add_node(ByteRange range, SemNodeKind kind, std::vector<NodeId> roots, SemNodeId control) {
    const auto id = static_cast<SemNodeId>(nodes_.size());
    nodes_.push_back({id, range, kind, std::move(roots)});
    structural_.emplace(control, id);
    return id;
  }

  void link(const std::vector<SemNodeId>& preds, SemNodeId target) {
    for (SemNodeId p : preds) cfg_.emplace(p, target);
  }

  std::vector<SemNodeId> build_sequence(const std::vector<NodeId>& stmts, std::vector<SemNodeId> preds,
                                        SemNodeId control) {
    for (NodeId s : stmts) preds = build(s, std::move(preds), control);
    return preds;
  }

  struct Loop {
    SemNodeId continue_target;
    std::vector<SemNodeId> breaks;
  };

  std::vector<SemNodeId> build(NodeId stmt, std::vector<SemNodeId> preds, SemNodeId control) {
    const auto& node = n(stmt);
    const std::string& k = node.kind;
    if (k == kinds_.block) return build_sequence(statement_children(stmt), std::move(preds), control);
    if (k == ";" || (k == "expression_statement" && node.children.size() == 1 &&
                     n(node.children[0]).kind == ";")) {
      return preds;
    }
    if (k == "expression_statement" || k == kinds_.declaration) {
      const SemNodeId s = add_node(node.range, SemNodeKind::Statement, {stmt}, control);
      link(preds, s);
      return {s};
    }
    if (k == "if_statement") return build_if(stmt, std::move(preds), control);
    if (k == "while_statement") return build_while(stmt, std::move(preds), control);
    if (k == "for_statement") return build_for(stmt, std::move(preds), control);
    if (k == "return_statement") {
      const SemNodeId s = add_node(node.range, SemNodeKind::Statement, {stmt}, control);
      link(preds, s);
      cfg_.emplace(s, kExit);
      return {};
    }
    if (k == "break_statement" || k == "continue_statement") {
      if (loops_.empty()) throw UnsupportedConstruct(k + " outside of a loop");
      const SemNodeId s = add_node(node.range, SemNodeKind::Statement, {stmt}, control);
      link(preds, s);
      if (k == "break_statement") {
        loops_.back().breaks.push_back(s);
      } else {
        cfg_.emplace(s, loops_.back().continue_target);
      }
      return {};
    }
    throw UnsupportedConstruct("statement kind '" + k + "' is outside the supported subset");
  }

  // (cond) -> cond, the parenthesized wrapper is not part of the predicate
  NodeId condition_of(NodeId paren) const {
    const auto& p = n(paren);
    if (p.kind != "parenthesized_expression" || p.children.size() != 3) {
      throw UnsupportedConstruct("unexpected condition shape");
    }
    return p.children[1];
  }

  std::vector<SemNodeId> build_if(NodeId stmt, std::vector<SemNodeId> preds, SemNodeId control) {
    const auto& kids = n(stmt).children;
    const NodeId cond = condition_of(kids.at(1));
    const SemNodeId p = add_node(n(cond).range, SemNodeKind::Predicate, {cond}, control);
    link(preds, p);
    auto exits = build(kids.at(2), {p}, p);
    std::vector<SemNodeId> else_exits{p};
    if (kids.size() > 3) {
      NodeId else_stmt = kids.back();
      if (n(kids[3]).kind == "else_clause") else_stmt = n(kids[3]).children.back();
      else_exits = build(else_stmt, {p}, p);
    }
    exits.insert(exits.end(), else_exits.begin(), else_exits.end());
    return exits;
  }

  std::vector<SemNodeId> build_while(NodeId stmt, std::vector<SemNodeId> preds, SemNodeId control) {
    const auto& kids = n(stmt).children;
    const NodeId cond = condition_of(kids.at(1));
    const SemNodeId p = add_node(n(cond).range, SemNodeKind::Predicate, {cond}, control);
    link(preds, p);
    loops_.push_back({p, {}});
    auto body_exits = build(kids.at(2), {p}, p);
    link(body_exits, p);
    std::vector<SemNodeId> exits{p};
    exits.insert(exits.end(), loops_.back().breaks.begin(), loops_.back().breaks.end());
    loops_.pop_back();
    return exits;
  }

  static ByteRange span_of(const std::vector<NodeId>& ids, const AstTree& tree) {
    return {tree.node(ids.front()).range.start, tree.node(ids.back()).range.end};
  }

  std::vector<SemNodeId> build_for(NodeId stmt, std::vector<SemNodeId> preds, SemNodeId control) {
    const auto& kids = n(stmt).children;
    std::array<std::vector<NodeId>, 3> parts;
    std::size_t section = 0;
    for (std::size_t i = 2; i + 1 < kids.size(); ++i) {
      const auto& k = n(kids[i]).kind;
      if (k == ")") break;
      if (k == ";") {
        ++section;
      } else if (k == ",") {
        continue;
      } else if (section == 0 && k == kinds_.declaration) {
        parts[0].push_back(kids[i]);
        ++section;  // the declaration owns its ';'
      } else if (section < 3) {
        parts[section].push_back(kids[i]);
      }
    }
    if (parts[1].empty()) throw UnsupportedConstruct("for loop without condition");
    if (!parts[0].empty()) {
      const SemNodeId init = add_node(span_of(parts[0], tree_), SemNodeKind::Statement, parts[0], control);
      link(preds, init);
      preds = {init};
    }
    const SemNodeId p = add_node(span_of(parts[1], tree_), SemNodeKind::Predicate, parts[1], control);
    link(preds, p);
    SemNodeId update = -1;
    if (!parts[2].empty()) {
      update = add_node(span_of(parts[2], tree_), SemNodeKind::Statement, parts[2], p);
      cfg_.emplace(update, p);
    }
    const SemNodeId head = update >= 0 ? update : p;
    loops_.push_back({head, {}});
    auto body_exits = build(kids.back(), {p}, p);
    link(body_exits, head);
    std::vector<SemNodeId> exits{p};
    exits.insert(exits.end(), loops_.back().breaks.begin(), loops_.back().breaks.end());
    loops_.pop_back();
    return exits;
  }

  void compute_reachable() {
    reachable_.assign(nodes_.size(), false);
    std::map<SemNodeId, std::vector<SemNodeId>> succ;
    for (auto [a, b] : cfg_) succ[a].push_back(b);
    std::deque<SemNodeId> queue{kEntry};
    reachable_[kEntry] = true;
    while (!queue.empty()) {
      const SemNodeId u = queue.front();
      queue.pop_front();
      for (SemNodeId v : succ[u]) {
        if (!reachable_[static_cast<std::size_t>(v)]) {
          reachable_[static_cast<std::size_t>(v)] = true;
          queue.push_back(v);
        }
      }
    }
    // an empty function still flows entry -> exit
    reachable_[kExit] = true;
    std::erase_if(cfg_, [&](const auto& e) { return !reachable(e.first) || !reachable(e.second); });
    std::erase_if(structural_, [&](const auto& e) { return !reachable(e.first) || !reachable(e.second); });
  }

  const AstTree& tree_;
  std::string_view source_;
  GrammarKinds kinds_;
  std::vector<StmtNode> nodes_;
  std::set<std::pair<SemNodeId, SemNodeId>> cfg_;
  std::set<std::pair<SemNodeId, SemNodeId>> structural_;
  std::set<std::string> params_;
  std::vector<Loop> loops_;
  std::vector<bool> reachable_;
};

class DefUseCollector {
 public:
  DefUseCollector(const AstTree& tree, std::string_view source) : tree_(tree), source_(source) {}

  DefUse collect(const std::vector<NodeId>& roots) {
    out_ = {};
    for (NodeId r : roots) visit(r);
    return std::move(out_);
  }

 private:
  const AstNode& n(NodeId id) const { return tree_.node(id); }
  std::string text(NodeId id) const {
    const auto& r = n(id).range;
    return std::string(source_.substr(r.start, r.length()));
  }

  void visit(NodeId id) {
    const auto& node = n(id);
    const std::string& k = node.kind;
    if (k == "identifier") {
      out_.uses.insert(text(id));
    } else if (k == "assignment_expression") {
      const bool compound = n(node.children[1]).kind != "=";
      target(node.children[0], compound);
      visit(node.children[2]);
    } else if (k == "update_expression") {
      for (NodeId c : node.children) {
        const auto& ck = n(c).kind;
        if (ck == "++" || ck == "--") continue;
        target(c, true);
      }
    } else if (k == "method_invocation") {
      // name(args) or object.name(args): the method name is not a variable
      if (node.children.size() == 2) {
        visit(node.children[1]);
      } else {
        visit(node.children.front());
        visit(node.children.back());
      }
    } else if (k == "call_expression") {
      if (n(node.children[0]).kind != "identifier") visit(node.children[0]);
      visit(node.children[1]);
    } else if (k == "field_access" || k == "field_expression") {
      visit(node.children.front());
    } else if (k == "local_variable_declaration" || k == "declaration" || k == "field_declaration") {
      declaration(node);
    } else {
      for (NodeId c : node.children) visit(c);
    }
  }

  // Writes through arrays, fields and pointers count as uses of the base.
  void target(NodeId lhs, bool also_use) {
    if (n(lhs).kind == "identifier") {
      out_.defs.insert(text(lhs));
      if (also_use) out_.uses.insert(text(lhs));
    } else {
      visit(lhs);
    }
  }

  void declaration(const AstNode& decl) {
    const auto& kids = decl.children;
    std::size_t i = 1;  // skip the type
    while (i < kids.size()) {
      const auto& k = n(kids[i]).kind;
      if (k == "," || k == ";") {
        ++i;
        continue;
      }
      const NodeId declarator = kids[i];
      const std::optional<std::string> name = base_name(declarator);
      visit_declarator_extras(declarator);
      if (i + 2 < kids.size() && n(kids[i + 1]).kind == "=") {
        if (name) out_.defs.insert(*name);
        visit(kids[i + 2]);
        i += 3;
      } else {
        i += 1;
      }
    }
  }

  std::optional<std::string> base_name(NodeId id) const {
    const auto& node = n(id);
    if (node.kind == "identifier") return text(id);
    if (node.kind == "array_declarator" || node.kind == "pointer_declarator") {
      for (NodeId c : node.children) {
        if (auto name = base_name(c)) return name;
      }
    }
    return std::nullopt;
  }

  // array sizes inside declarators are ordinary uses
  void visit_declarator_extras(NodeId id) {
    const auto& node = n(id);
    if (node.kind == "array_declarator") {
      visit_declarator_extras(node.children.front());
      for (std::size_t i = 1; i < node.children.size(); ++i) {
        const auto& k = n(node.children[i]).kind;
        if (k != "[" && k != "]") visit(node.children[i]);
      }
    } else if (node.kind == "pointer_declarator") {
      visit_declarator_extras(node.children.back());
    }
  }

  const AstTree& tree_;
  std::string_view source_;
  DefUse out_;
};

}  // namespace

SemanticGraph build_cfg(const AstTree& tree, std::string_view source) {
  StatementWalker walker(tree, source);
  SemanticGraph g = walker.skeleton(GraphKind::CFG);
  for (auto [a, b] : walker.cfg_edges()) g.edges.push_back({a, b, {}});
  if (walker.cfg_edges().empty()) g.edges.push_back({kEntry, kExit, {}});
  g.normalize();
  return g;
}

SemanticGraph control_dependence_from_cfg(const SemanticGraph& cfg) {
  const auto entry = cfg.entry();
  const auto exit = cfg.exit();
  if (!entry || !exit) throw Error("control dependence needs entry and exit nodes");

  std::map<SemNodeId, std::vector<SemNodeId>> preds;
  const auto pairs = cfg.edge_pairs();
  std::vector<std::pair<SemNodeId, SemNodeId>> edges(pairs.begin(), pairs.end());
  edges.emplace_back(*entry, *exit);
  for (auto [a, b] : edges) preds[b].push_back(a);

  // Post-order of the reverse CFG rooted at exit.
  std::vector<SemNodeId> order;
  std::map<SemNodeId, int> po_index;
  {
    std::set<SemNodeId> seen{*exit};
    std::vector<std::pair<SemNodeId, std::size_t>> stack{{*exit, 0}};
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      const auto& ps = preds[v];
      if (next < ps.size()) {
        const SemNodeId w = ps[next++];
        if (seen.insert(w).second) stack.emplace_back(w, 0);
      } else {
        po_index[v] = static_cast<int>(order.size());
        order.push_back(v);
        stack.pop_back();
      }
    }
  }
  std::map<SemNodeId, std::vector<SemNodeId>> succ;
  for (auto [a, b] : edges) succ[a].push_back(b);

  // Cooper-Harvey-Kennedy on the reversed graph.
  std::map<SemNodeId, SemNodeId> ipdom{{*exit, *exit}};
  auto intersect = [&](SemNodeId a, SemNodeId b) {
    while (a != b) {
      while (po_index[a] < po_index[b]) a = ipdom[a];
      while (po_index[b] < po_index[a]) b = ipdom[b];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const SemNodeId v = *it;
      if (v == *exit) continue;
      std::optional<SemNodeId> candidate;
      for (SemNodeId s : succ[v]) {
        if (!ipdom.count(s)) continue;
        candidate = candidate ? intersect(*candidate, s) : s;
      }
      if (candidate && (!ipdom.count(v) || ipdom[v] != *candidate)) {
        ipdom[v] = *candidate;
        changed = true;
      }
    }
  }

  SemanticGraph cdg;
  cdg.kind = GraphKind::CDG;
  cdg.source_id = cfg.source_id;
  cdg.nodes = cfg.nodes;
  for (auto [a, b] : edges) {
    if (!ipdom.count(a) || !ipdom.count(b)) continue;
    for (SemNodeId runner = b; runner != ipdom[a]; runner = ipdom[runner]) {
      if (runner != a && runner != *exit) cdg.edges.push_back({a, runner, {}});
      if (runner == *exit) break;
    }
  }
  cdg.normalize();
  return cdg;
}

SemanticGraph build_cdg(const AstTree& tree, std::string_view source) {
  return control_dependence_from_cfg(build_cfg(tree, source));
}

SemanticGraph build_structural_cdg(const AstTree& tree, std::string_view source) {
  StatementWalker walker(tree, source);
  SemanticGraph g = walker.skeleton(GraphKind::CDG);
  for (auto [a, b] : walker.structural_cd()) {
    if (a != b) g.edges.push_back({a, b, {}});
  }
  g.normalize();
  return g;
}

std::vector<std::pair<SemNodeId, DefUse>> statement_def_use(const AstTree& tree, std::string_view source) {
  StatementWalker walker(tree, source);
  DefUseCollector collector(tree, source);
  std::vector<std::pair<SemNodeId, DefUse>> out;
  for (const auto& s : walker.nodes()) {
    if (!walker.reachable(s.id)) continue;
    if (s.kind == SemNodeKind::Entry) {
      out.emplace_back(s.id, DefUse{walker.parameters(), {}});
    } else {
      out.emplace_back(s.id, collector.collect(s.ast_roots));
    }
  }
  return out;
}

SemanticGraph build_ddg(const AstTree& tree, std::string_view source) {
  StatementWalker walker(tree, source);
  SemanticGraph g = walker.skeleton(GraphKind::DDG);
  const auto def_use = statement_def_use(tree, source);
  std::map<SemNodeId, const DefUse*> du;
  for (const auto& [id, d] : def_use) du[id] = &d;

  using Def = std::pair<SemNodeId, std::string>;
  std::map<SemNodeId, std::set<Def>> in, out;
  std::map<SemNodeId, std::vector<SemNodeId>> preds;
  for (auto [a, b] : walker.cfg_edges()) preds[b].push_back(a);

  // Iterative reaching definitions; node ids are already in a good order.
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& node : g.nodes) {
      std::set<Def> reaching;
      for (SemNodeId p : preds[node.id]) reaching.insert(out[p].begin(), out[p].end());
      std::set<Def> result;
      const auto& defs = du[node.id]->defs;
      for (const auto& d : reaching) {
        if (!defs.count(d.second)) result.insert(d);
      }
      for (const auto& v : defs) result.emplace(node.id, v);
      in[node.id] = std::move(reaching);
      if (result != out[node.id]) {
        out[node.id] = std::move(result);
        changed = true;
      }
    }
  }
  for (const auto& node : g.nodes) {
    for (const auto& [def_node, var] : in[node.id]) {
      if (def_node != node.id && du[node.id]->uses.count(var)) {
        g.edges.push_back({def_node, node.id, var});
      }
    }
  }
  g.normalize();
  return g;
}

std::string export_graph(const SemanticGraph& graph) {
  std::ostringstream out;
  out << "NODES\n";
  for (const auto& n : graph.nodes) {
    out << n.id << '\t' << n.code_range.start << '\t' << n.code_range.end << '\n';
  }
  out << "EDGES\n";
  for (const auto& e : graph.edges) {
    out << e.src << '\t' << e.dst << '\t' << to_string(graph.kind);
    if (!e.variable.empty()) out << '\t' << e.variable;
    out << '\n';
  }
  return out.str();
}

namespace {

long long import_int(std::string_view field, std::size_t line_no) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ImportError("line " + std::to_string(line_no) + ": bad integer '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

SemanticGraph import_graph(std::string_view document, GraphKind kind, std::string_view source,
                           std::string source_id) {
  SemanticGraph g;
  g.kind = kind;
  g.source_id = std::move(source_id);
  enum class Section { None, Nodes, Edges } section = Section::None;
  std::size_t line_no = 0;
  std::set<SemNodeId> ids;
  for (auto line : split(document, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    if (line == "NODES") {
      section = Section::Nodes;
      continue;
    }
    if (line == "EDGES") {
      section = Section::Edges;
      continue;
    }
    const auto f = split(line, '\t');
    if (section == Section::Nodes) {
      if (f.size() != 3) throw ImportError("line " + std::to_string(line_no) + ": node needs id, start, end");
      const auto id = static_cast<SemNodeId>(import_int(f[0], line_no));
      const long long start = import_int(f[1], line_no);
      const long long end = import_int(f[2], line_no);
      if (start < 0 || end < start || static_cast<std::size_t>(end) > source.size()) {
        throw ImportError("line " + std::to_string(line_no) + ": node range outside source");
      }
      if (!ids.insert(id).second) throw ImportError("duplicate node id " + std::to_string(id));
      const ByteRange r{static_cast<std::uint32_t>(start), static_cast<std::uint32_t>(end)};
      g.nodes.push_back({id, r, std::string(source.substr(r.start, r.length())), SemNodeKind::Statement});
    } else if (section == Section::Edges) {
      if (f.size() != 3 && f.size() != 4) {
        throw ImportError("line " + std::to_string(line_no) + ": edge needs src, dst, kind");
      }
      const auto src = static_cast<SemNodeId>(import_int(f[0], line_no));
      const auto dst = static_cast<SemNodeId>(import_int(f[1], line_no));
      if (!ids.count(src) || !ids.count(dst)) {
        throw ImportError("line " + std::to_string(line_no) + ": edge endpoint is not a declared node");
      }
      GraphKind edge_kind;
      try {
        edge_kind = graph_kind_from_string(f[2]);
      } catch (const ConfigError&) {
        throw ImportError("line " + std::to_string(line_no) + ": unknown edge kind");
      }
      if (edge_kind != kind) continue;
      g.edges.push_back({src, dst, f.size() == 4 ? std::string(f[3]) : std::string()});
    } else {
      throw ImportError("line " + std::to_string(line_no) + ": content before NODES section");
    }
  }
  g.normalize();
  // Empty-range nodes carry no code: the first one without predecessors is
  // the entry, any other is an exit.
  bool have_entry = false;
  for (auto& node : g.nodes) {
    if (!node.code_range.empty()) continue;
    if (!have_entry && g.predecessors(node.id).empty()) {
      node.kind = SemNodeKind::Entry;
      have_entry = true;
    } else {
      node.kind = SemNodeKind::Exit;
    }
  }
  return g;
}

SemanticGraph merge_redundant_nodes(const SemanticGraph& graph) {
  SemanticGraph g = graph;
  std::erase_if(g.edges, [](const SemEdge& e) { return e.src == e.dst; });
  g.normalize();
  while (true) {
    std::vector<const SemNode*> order;
    for (const auto& node : g.nodes) {
      if (!node.is_sentinel()) order.push_back(&node);
    }
    std::sort(order.begin(), order.end(), [](const SemNode* a, const SemNode* b) {
      if (a->code_range.start != b->code_range.start) return a->code_range.start < b->code_range.start;
      if (a->code_range.length() != b->code_range.length()) return a->code_range.length() < b->code_range.length();
      return a->id < b->id;
    });
    std::optional<std::pair<SemNodeId, SemNodeId>> fold;  // (absorbed, absorber)
    for (const SemNode* u : order) {
      const SemNode* best = nullptr;
      for (SemNodeId vid : g.neighbors(u->id)) {
        const SemNode* v = g.find(vid);
        if (v->is_sentinel() || !v->code_range.contains(u->code_range)) continue;
        // tightest container first, then position, then id
        const auto key = [](const SemNode* s) {
          return std::make_tuple(s->code_range.length(), s->code_range.start, s->id);
        };
        if (!best || key(v) < key(best)) best = v;
      }
      if (best) {
        fold.emplace(u->id, best->id);
        break;
      }
    }
    if (!fold) break;
    const auto [gone, keep] = *fold;
    for (auto& e : g.edges) {
      if (e.src == gone) e.src = keep;
      if (e.dst == gone) e.dst = keep;
    }
    std::erase_if(g.edges, [](const SemEdge& e) { return e.src == e.dst; });
    std::erase_if(g.nodes, [gone = gone](const SemNode& node) { return node.id == gone; });
    g.normalize();
  }
  return g;
}

void validate_graph(const SemanticGraph& graph) {
  for (const auto& e : graph.edges) {
    if (!graph.find(e.src) || !graph.find(e.dst)) throw Error("edge endpoint missing");
    // an empty loop body is a real CFG self-loop
    if (e.src == e.dst && graph.kind != GraphKind::CFG) throw Error("self-loop on node " + std::to_string(e.src));
  }
  for (const auto& node : graph.nodes) {
    if (node.is_sentinel() && !node.code_range.empty()) throw Error("sentinel with code range");
  }
  if (graph.kind != GraphKind::CFG) return;
  const auto entry = graph.entry();
  const auto exit = graph.exit();
  if (!entry || !exit) throw Error("CFG needs entry and exit");
  auto reach = [&](SemNodeId start, bool forward) {
    std::set<SemNodeId> seen{start};
    std::vector<SemNodeId> stack{start};
    while (!stack.empty()) {
      const SemNodeId u = stack.back();
      stack.pop_back();
      for (SemNodeId v : forward ? graph.successors(u) : graph.predecessors(u)) {
        if (seen.insert(v).second) stack.push_back(v);
      }
    }
    return seen;
  };
  const auto from_entry = reach(*entry, true);
  const auto to_exit = reach(*exit, false);
  for (const auto& node : graph.nodes) {
    if (!from_entry.count(node.id)) throw Error("CFG node " + std::to_string(node.id) + " unreachable from entry");
    if (!to_exit.count(node.id)) throw Error("CFG node " + std::to_string(node.id) + " cannot reach exit");
  }
}

}  // namespace codeprobe
