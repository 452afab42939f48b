#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "codeprobe/align.hpp"
#include "codeprobe/semgraph.hpp"
#include "codeprobe/store.hpp"

namespace codeprobe {

struct HeadId {
  int layer = 1;  // 1..L
  int head = 0;   // 0..H-1

  friend auto operator<=>(const HeadId&, const HeadId&) = default;
};

/// Token partition for one graph node: its own span, R1 (tokens of adjacent
/// nodes in either direction) and R0 (every other non-sentinel token).
struct NodePartition {
  std::string source_id;
  SemNodeId node = -1;
  TokenSpan span;
  std::vector<std::uint32_t> r1;
  std::vector<std::uint32_t> r0;
};

/// One partition per non-sentinel node that has at least one aligned
/// neighbour token. Throws AlignmentError when a node cannot be aligned.
std::vector<NodePartition> partition_nodes(const SemanticGraph& graph, const TokenizedSource& tok);

struct HeadSample {
  std::string source_id;
  SemNodeId node = -1;
  HeadId head;
  double w1_sum = 0.0;
  double w0_sum = 0.0;
  std::size_t span_tokens = 0;
  std::size_t r1_tokens = 0;
  std::size_t r0_tokens = 0;

  /// w1 - w0, or the difference of per-token means when `normalized`.
  double difference(bool normalized = false) const;
};

/// Attention mass from the rows of each partition's span into R1 and R0, for
/// every head of every layer. All partitions must come from one source.
std::vector<HeadSample> collect_head_samples(const RepresentationStore& store,
                                             const std::vector<NodePartition>& partitions);
/// Convenience overload: partitions every node of `graph`.
std::vector<HeadSample> collect_head_samples(const RepresentationStore& store, const SemanticGraph& graph);

/// Seeded choice of at most `cap` partitions; keeps the input order.
std::vector<NodePartition> cap_partitions(std::vector<NodePartition> partitions, std::size_t cap, std::uint64_t seed);

struct TTestResult {
  std::size_t n = 0;
  double mean_diff = 0.0;
  double t = 0.0;
  double p = 1.0;  // one-sided, H1: mean > 0
  bool significant = false;
};

/// One-sided paired t-test on differences; n - 1 degrees of freedom. Zero
/// variance gives p = 0 for a positive mean, 1 for a negative one and 0.5 for
/// a zero mean.
/// Throws InsufficientSamples for n < 2.
TTestResult paired_t_test(const std::vector<double>& differences, double alpha = 0.01);

struct HeadTestResult {
  HeadId head;
  GraphKind graph = GraphKind::CFG;
  TTestResult test;
};

struct HeadTestOptions {
  double alpha = 0.01;
  bool normalized = false;
  bool bonferroni = false;
};

/// Groups samples by head and tests each; heads with fewer than two samples
/// are omitted. Results are ordered by (layer, head).
std::vector<HeadTestResult> test_heads(const std::vector<HeadSample>& samples, GraphKind graph,
                                       const HeadTestOptions& options = {});

std::set<HeadId> significant_heads(const std::vector<HeadTestResult>& results);

/// counts[store label][graph kind] = number of significant heads.
using HeadCounts = std::map<std::string, std::map<GraphKind, std::size_t>>;
HeadCounts count_semantic_heads(const std::map<std::string, std::vector<HeadTestResult>>& results_by_store);

struct OverlapRatios {
  std::optional<double> r_a;  // |A n B| / |A|
  std::optional<double> r_b;  // |A n B| / |B|
};
OverlapRatios overlap_ratios(const std::set<HeadId>& a, const std::set<HeadId>& b);

/// layer, head, graph, n, mean_diff, t, p, significant
std::string heads_csv(const std::vector<HeadTestResult>& results);
/// Rows are graph kinds, columns are stores.
std::string counts_csv(const HeadCounts& counts);
/// Two rows (r_<label_a>, r_<label_b>); one column per (model, graph kind);
/// undefined ratios are written as "-".
std::string overlap_csv(const std::string& label_a, const std::string& label_b,
                        const std::map<std::string, std::map<GraphKind, OverlapRatios>>& by_model);

}  // namespace codeprobe
