#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "codeprobe/align.hpp"
#include "codeprobe/ast.hpp"
#include "codeprobe/semgraph.hpp"

namespace codeprobe {

enum class TaskKind { AstPair, Tagging, Relation, InGraph };

struct Task {
  TaskKind kind = TaskKind::AstPair;
  GraphKind graph = GraphKind::CFG;  // Relation and InGraph only

  bool is_binary() const { return kind != TaskKind::Tagging; }
  bool has_pair() const { return kind != TaskKind::Tagging; }
  /// ast_pair, tagging, relation_cdg, ingraph_ddg, ...
  std::string name() const;
  /// "AST" for the syntax tasks, else the graph kind.
  std::string graph_name() const;
  static Task parse(std::string_view name);
  static std::vector<Task> all();

  friend bool operator==(const Task& a, const Task& b) {
    return a.kind == b.kind && (!a.has_graph() || a.graph == b.graph);
  }
  bool has_graph() const { return kind == TaskKind::Relation || kind == TaskKind::InGraph; }
};

struct ProbingExample {
  Task task;
  std::string source_id;
  TokenSpan a;
  std::optional<TokenSpan> b;  // absent for Tagging
  int label = 0;
};

struct SkipEntry {
  std::string source_id;
  std::string task;
  std::string reason;
  std::size_t count = 0;
};

struct BuildResult {
  std::vector<ProbingExample> examples;
  std::vector<SkipEntry> skips;
};

/// Positives: unordered pairs of nodes that share a syntax unit. Negatives:
/// pairs no unit contains together, sampled to negative_ratio x positives.
BuildResult build_ast_pairs(const AstTree& tree, const std::vector<SyntaxUnit>& units, const TokenizedSource& tok,
                            std::string_view source, std::uint64_t seed, double negative_ratio = 1.0);

/// One example per leaf whose label is in `retained`; label = index into it.
BuildResult build_tagging(const AstTree& tree, const std::vector<std::pair<NodeId, TagLabel>>& tags,
                          const std::vector<std::string>& retained, const TokenizedSource& tok,
                          std::string_view source);

/// Positives: directed edges (src, dst). Negatives: ordered node pairs with
/// no edge in either direction.
BuildResult build_relation(const SemanticGraph& graph, const TokenizedSource& tok, std::string_view source,
                           std::uint64_t seed, double negative_ratio = 1.0);

/// Nodes incident to an edge between two non-sentinel nodes.
std::set<SemNodeId> graph_members(const SemanticGraph& graph);

/// Positives: unordered pairs of statements both in `graph`. Negatives: one
/// statement in, one out. Statements are matched to graph nodes by range
/// containment; the two pools are balanced by down-sampling the larger.
BuildResult build_ingraph(const SemanticGraph& graph, const std::vector<SemNode>& statements,
                          const TokenizedSource& tok, std::string_view source, std::uint64_t seed);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

enum class SplitPart { Train = 0, Valid = 1, Test = 2 };

/// Program-level assignment: ids are sorted, shuffled with `seed`, then cut
/// into test, valid and train. Throws InsufficientData for < 3 programs.
std::map<std::string, SplitPart> assign_programs(std::vector<std::string> program_ids, const SplitRatios& ratios,
                                                 std::uint64_t seed);

struct DatasetSplit {
  std::vector<ProbingExample> train, valid, test;
  std::uint64_t seed = 0;

  std::vector<ProbingExample>& part(SplitPart p);
  const std::vector<ProbingExample>& part(SplitPart p) const;
  std::map<int, std::size_t> label_counts(SplitPart p) const;
};

/// Distributes examples by program and, for binary tasks, down-samples the
/// majority label within each part. Throws InsufficientData when a part ends
/// up empty.
DatasetSplit split_dataset(const std::vector<ProbingExample>& examples,
                           const std::map<std::string, SplitPart>& assignment, std::uint64_t seed);
DatasetSplit split_dataset(const std::vector<ProbingExample>& examples, const SplitRatios& ratios,
                           std::uint64_t seed);

/// One JSON object per line: task, source_id, a, b ([start,end] or class
/// name), label.
std::string to_jsonl(const std::vector<ProbingExample>& examples, const std::vector<std::string>& class_names = {});
std::vector<ProbingExample> from_jsonl(std::string_view text);

/// CSV with header source_id,task,reason,count.
std::string skip_report_csv(const std::vector<SkipEntry>& skips);

}  // namespace codeprobe
