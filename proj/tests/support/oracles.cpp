#include "oracles.hpp"

#include <algorithm>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace codeprobe::testing {

namespace {

enum class Flow { Normal, Break, Continue, Return };

// Replays one decision prefix; unseen decision points default to false and
// queue the alternative prefix.
class TraceRun {
 public:
  TraceRun(const std::vector<bool>& prefix, int max_decisions, std::vector<std::vector<bool>>& pending)
      : prefix_(prefix), max_(max_decisions), pending_(pending) {}

  std::vector<int> execute(const std::vector<GenStmt>& body) {
    trace_.push_back(kOracleEntry);
    block(body);
    trace_.push_back(kOracleExit);
    return trace_;
  }

 private:
  bool choose() {
    const std::size_t at = decisions_.size();
    bool d = false;
    if (at < prefix_.size()) {
      d = prefix_[at];
    } else if (static_cast<int>(at) < max_) {
      auto alt = decisions_;
      alt.push_back(true);
      pending_.push_back(std::move(alt));
    }
    decisions_.push_back(d);
    return d;
  }

  Flow block(const std::vector<GenStmt>& stmts) {
    for (const auto& s : stmts) {
      const Flow f = stmt(s);
      if (f != Flow::Normal) return f;
    }
    return Flow::Normal;
  }

  Flow loop_body(const std::vector<GenStmt>& body, bool& leave) {
    const Flow f = block(body);
    leave = f == Flow::Break || f == Flow::Return;
    return f == Flow::Return ? Flow::Return : Flow::Normal;
  }

  Flow stmt(const GenStmt& s) {
    using K = GenStmt::Kind;
    switch (s.kind) {
      case K::Return:
        trace_.push_back(s.node);
        return Flow::Return;
      case K::Break:
        trace_.push_back(s.node);
        return Flow::Break;
      case K::Continue:
        trace_.push_back(s.node);
        return Flow::Continue;
      case K::If:
        trace_.push_back(s.node);
        if (choose()) return block(s.body);
        return s.has_else ? block(s.orelse) : Flow::Normal;
      case K::While:
        for (;;) {
          trace_.push_back(s.node);
          if (!choose()) return Flow::Normal;
          bool leave = false;
          const Flow f = loop_body(s.body, leave);
          if (leave) return f;
        }
      case K::For:
        if (s.init >= 0) trace_.push_back(s.init);
        for (;;) {
          trace_.push_back(s.node);
          if (!choose()) return Flow::Normal;
          bool leave = false;
          const Flow f = loop_body(s.body, leave);
          if (leave) return f;
          if (s.update >= 0) trace_.push_back(s.update);
        }
      default:
        trace_.push_back(s.node);
        return Flow::Normal;
    }
  }

  const std::vector<bool>& prefix_;
  int max_;
  std::vector<std::vector<bool>>& pending_;
  std::vector<bool> decisions_;
  std::vector<int> trace_;
};

std::map<int, std::vector<int>> successor_map(const EdgeSet& cfg) {
  std::map<int, std::vector<int>> succ;
  for (auto [a, b] : cfg) succ[a].push_back(b);
  return succ;
}

}  // namespace

EdgeSet oracle_cfg(const GenProgram& program, int max_decisions) {
  EdgeSet edges;
  std::vector<std::vector<bool>> pending{{}};
  while (!pending.empty()) {
    const auto prefix = std::move(pending.back());
    pending.pop_back();
    const auto trace = TraceRun(prefix, max_decisions, pending).execute(program.body);
    for (std::size_t i = 0; i + 1 < trace.size(); ++i) edges.emplace(trace[i], trace[i + 1]);
  }
  return edges;
}

EdgeSet oracle_cdg(const EdgeSet& cfg) {
  EdgeSet aug = cfg;
  aug.emplace(kOracleEntry, kOracleExit);
  std::set<int> nodes;
  for (auto [a, b] : aug) {
    nodes.insert(a);
    nodes.insert(b);
  }
  const auto succ = successor_map(aug);
  std::map<int, std::set<int>> pdom;
  for (int n : nodes) pdom[n] = n == kOracleExit ? std::set<int>{n} : nodes;
  for (bool changed = true; changed;) {
    changed = false;
    for (int n : nodes) {
      if (n == kOracleExit) continue;
      std::set<int> acc;
      bool first = true;
      for (int s : succ.at(n)) {
        if (first) {
          acc = pdom[s];
          first = false;
        } else {
          std::set<int> meet;
          std::set_intersection(acc.begin(), acc.end(), pdom[s].begin(), pdom[s].end(),
                                std::inserter(meet, meet.begin()));
          acc = std::move(meet);
        }
      }
      acc.insert(n);
      if (acc != pdom[n]) {
        pdom[n] = std::move(acc);
        changed = true;
      }
    }
  }
  // immediate post-dominator: the strict post-dominator with the largest set
  std::map<int, int> ipdom;
  for (int n : nodes) {
    if (n == kOracleExit) continue;
    for (int d : pdom[n]) {
      if (d != n && pdom[d].size() + 1 == pdom[n].size()) ipdom[n] = d;
    }
  }
  EdgeSet cdg;
  for (auto [a, b] : aug) {
    if (pdom[a].count(b)) continue;
    const int stop = ipdom.at(a);
    for (int m = b; m != stop && m != kOracleExit; m = ipdom.at(m)) {
      if (m != a) cdg.emplace(a, m);
    }
  }
  return cdg;
}

DataEdgeSet oracle_ddg(const GenProgram& program, const EdgeSet& cfg) {
  const auto succ = successor_map(cfg);
  auto defs = [&](int n) -> std::set<std::string> {
    if (n == kOracleEntry) return {program.params.begin(), program.params.end()};
    if (n == kOracleExit) return {};
    return program.nodes[static_cast<std::size_t>(n)].defs;
  };
  auto uses = [&](int n) -> std::set<std::string> {
    if (n < 0) return {};
    return program.nodes[static_cast<std::size_t>(n)].uses;
  };
  std::set<int> nodes;
  for (auto [a, b] : cfg) {
    nodes.insert(a);
    nodes.insert(b);
  }
  DataEdgeSet out;
  for (int d : nodes) {
    for (const auto& v : defs(d)) {
      std::set<int> on_path{d};
      std::function<void(int)> walk = [&](int u) {
        auto it = succ.find(u);
        if (it == succ.end()) return;
        for (int s : it->second) {
          if (on_path.count(s)) continue;
          if (uses(s).count(v)) out.emplace(d, s, v);
          if (defs(s).count(v)) continue;
          on_path.insert(s);
          walk(s);
          on_path.erase(s);
        }
      };
      walk(d);
    }
  }
  return out;
}

std::map<int, SemNodeId> oracle_to_graph_ids(const GenProgram& program, const SemanticGraph& graph) {
  std::map<int, SemNodeId> ids{{kOracleEntry, *graph.entry()}, {kOracleExit, *graph.exit()}};
  for (const auto& n : graph.nodes) {
    if (n.is_sentinel()) continue;
    bool found = false;
    for (std::size_t i = 0; i < program.nodes.size(); ++i) {
      if (program.nodes[i].range == n.code_range) {
        ids[static_cast<int>(i)] = n.id;
        found = true;
      }
    }
    if (!found) throw std::runtime_error("graph node " + std::to_string(n.id) + " has no generator counterpart");
  }
  return ids;
}

namespace {

int to_oracle(SemNodeId id, const std::map<int, SemNodeId>& ids) {
  for (const auto& [o, g] : ids) {
    if (g == id) return o;
  }
  throw std::runtime_error("graph id " + std::to_string(id) + " is not mapped");
}

}  // namespace

EdgeSet graph_edges_as_oracle(const SemanticGraph& graph, const std::map<int, SemNodeId>& ids) {
  EdgeSet out;
  for (auto [a, b] : graph.edge_pairs()) out.emplace(to_oracle(a, ids), to_oracle(b, ids));
  return out;
}

DataEdgeSet graph_data_edges_as_oracle(const SemanticGraph& graph, const std::map<int, SemNodeId>& ids) {
  DataEdgeSet out;
  for (const auto& e : graph.edges) out.emplace(to_oracle(e.src, ids), to_oracle(e.dst, ids), e.variable);
  return out;
}

SemanticGraph random_range_graph(Rng& rng) {
  SemanticGraph g;
  g.kind = GraphKind::CFG;
  g.nodes.push_back({0, {0, 0}, "", SemNodeKind::Entry});
  g.nodes.push_back({1, {100, 100}, "", SemNodeKind::Exit});
  const int n = 2 + static_cast<int>(rng.uniform_index(9));
  for (int i = 0; i < n; ++i) {
    const auto s = static_cast<std::uint32_t>(rng.uniform_index(90));
    const auto len = static_cast<std::uint32_t>(1 + rng.uniform_index(10));
    g.nodes.push_back({2 + i, {s, s + len}, "", SemNodeKind::Statement});
  }
  const int total = n + 2;
  const int m = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(3 * total)));
  for (int e = 0; e < m; ++e) {
    const auto a = static_cast<SemNodeId>(rng.uniform_index(static_cast<std::size_t>(total)));
    const auto b = static_cast<SemNodeId>(rng.uniform_index(static_cast<std::size_t>(total)));
    if (a != b && a != 1 && b != 0) g.edges.push_back({a, b, ""});
  }
  g.normalize();
  return g;
}

std::string describe(const EdgeSet& edges) {
  std::ostringstream s;
  for (auto [a, b] : edges) s << a << "->" << b << ' ';
  return s.str();
}

std::string describe(const DataEdgeSet& edges) {
  std::ostringstream s;
  for (const auto& [a, b, v] : edges) s << a << "->" << b << ':' << v << ' ';
  return s.str();
}

}  // namespace codeprobe::testing
