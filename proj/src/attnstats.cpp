#include "codeprobe/attnstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

namespace codeprobe {

std::vector<NodePartition> partition_nodes(const SemanticGraph& graph, const TokenizedSource& tok) {
  std::map<SemNodeId, TokenSpan> spans;
  for (const auto& n : graph.nodes) {
    if (!n.is_sentinel()) spans[n.id] = align_span(n.code_range, tok, n.id);
  }
  std::vector<NodePartition> out;
  for (const auto& [id, span] : spans) {
    std::vector<char> role(tok.size(), 0);  // 0: R0, 1: R1, 2: own span or sentinel
    for (std::uint32_t t = span.start; t < span.end; ++t) role[t] = 2;
    for (std::size_t t = 0; t < tok.size(); ++t) {
      if (tok.tokens[t].is_sentinel()) role[t] = 2;
    }
    bool any = false;
    for (SemNodeId nb : graph.neighbors(id)) {
      auto it = spans.find(nb);
      if (it == spans.end()) continue;
      for (std::uint32_t t = it->second.start; t < it->second.end; ++t) {
        if (role[t] == 0) {
          role[t] = 1;
          any = true;
        }
      }
    }
    if (!any) continue;
    NodePartition p{graph.source_id, id, span, {}, {}};
    for (std::uint32_t t = 0; t < tok.size(); ++t) {
      if (role[t] == 1) p.r1.push_back(t);
      if (role[t] == 0) p.r0.push_back(t);
    }
    out.push_back(std::move(p));
  }
  return out;
}

double HeadSample::difference(bool normalized) const {
  if (!normalized) return w1_sum - w0_sum;
  const double m1 = r1_tokens ? w1_sum / double(r1_tokens) : 0.0;
  const double m0 = r0_tokens ? w0_sum / double(r0_tokens) : 0.0;
  return m1 - m0;
}

std::vector<HeadSample> collect_head_samples(const RepresentationStore& store,
                                             const std::vector<NodePartition>& partitions) {
  std::vector<HeadSample> out;
  if (partitions.empty()) return out;
  const std::string& source_id = partitions.front().source_id;
  const auto& m = store.manifest();
  for (int layer = 1; layer <= m.layers; ++layer) {
    const auto heads = store.read_attention_heads(source_id, layer);
    for (int h = 0; h < m.heads; ++h) {
      const auto& att = heads[static_cast<std::size_t>(h)];
      for (const auto& p : partitions) {
        if (p.source_id != source_id) throw Error("partitions from several sources in one call");
        const Eigen::RowVectorXd mass =
            att.middleRows(p.span.start, p.span.length()).cast<double>().colwise().sum();
        HeadSample s{source_id, p.node, {layer, h}, 0.0, 0.0, p.span.length(), p.r1.size(), p.r0.size()};
        for (auto t : p.r1) s.w1_sum += mass(t);
        for (auto t : p.r0) s.w0_sum += mass(t);
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

std::vector<HeadSample> collect_head_samples(const RepresentationStore& store, const SemanticGraph& graph) {
  return collect_head_samples(store, partition_nodes(graph, store.tokens(graph.source_id)));
}

std::vector<NodePartition> cap_partitions(std::vector<NodePartition> partitions, std::size_t cap, std::uint64_t seed) {
  if (partitions.size() <= cap) return partitions;
  Rng rng(derive_seed(seed, "attention-cap"));
  auto keep = rng.sample_without_replacement(partitions.size(), cap);
  std::sort(keep.begin(), keep.end());
  std::vector<NodePartition> out;
  out.reserve(cap);
  for (auto i : keep) out.push_back(std::move(partitions[i]));
  return out;
}

TTestResult paired_t_test(const std::vector<double>& differences, double alpha) {
  const std::size_t n = differences.size();
  if (n < 2) throw InsufficientSamples("paired t-test needs at least 2 samples, got " + std::to_string(n));
  TTestResult r;
  r.n = n;
  double mean = 0.0;
  for (double d : differences) mean += d;
  mean /= double(n);
  double ss = 0.0;
  for (double d : differences) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / double(n - 1));
  r.mean_diff = mean;
  // Spread below rounding noise of the mean counts as zero variance.
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (mean > 0) {
      r.t = inf;
      r.p = 0.0;
      r.significant = true;
    } else if (mean < 0) {
      r.t = -inf;
      r.p = 1.0;
    } else {
      r.t = 0.0;
      r.p = 0.5;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(double(n)));
  const boost::math::students_t dist(double(n - 1));
  r.p = boost::math::cdf(boost::math::complement(dist, r.t));
  r.significant = r.p < alpha && mean > 0;
  return r;
}

std::vector<HeadTestResult> test_heads(const std::vector<HeadSample>& samples, GraphKind graph,
                                       const HeadTestOptions& options) {
  std::map<HeadId, std::vector<double>> diffs;
  for (const auto& s : samples) diffs[s.head].push_back(s.difference(options.normalized));
  std::size_t testable = 0;
  for (const auto& [_, d] : diffs) testable += d.size() >= 2 ? 1 : 0;
  const double alpha = options.bonferroni && testable > 0 ? options.alpha / double(testable) : options.alpha;
  std::vector<HeadTestResult> out;
  for (const auto& [head, d] : diffs) {
    if (d.size() < 2) continue;
    out.push_back({head, graph, paired_t_test(d, alpha)});
  }
  return out;
}

std::set<HeadId> significant_heads(const std::vector<HeadTestResult>& results) {
  std::set<HeadId> out;
  for (const auto& r : results) {
    if (r.test.significant) out.insert(r.head);
  }
  return out;
}

HeadCounts count_semantic_heads(const std::map<std::string, std::vector<HeadTestResult>>& results_by_store) {
  HeadCounts counts;
  for (const auto& [store, results] : results_by_store) {
    auto& row = counts[store];
    for (const auto& r : results) {
      auto& c = row[r.graph];
      if (r.test.significant) ++c;
    }
  }
  return counts;
}

OverlapRatios overlap_ratios(const std::set<HeadId>& a, const std::set<HeadId>& b) {
  std::size_t shared = 0;
  for (const auto& h : a) shared += b.count(h);
  OverlapRatios r;
  if (!a.empty()) r.r_a = double(shared) / double(a.size());
  if (!b.empty()) r.r_b = double(shared) / double(b.size());
  return r;
}

std::string heads_csv(const std::vector<HeadTestResult>& results) {
  std::ostringstream out;
  out << "layer,head,graph,n,mean_diff,t,p,significant\n";
  for (const auto& r : results) {
    out << r.head.layer << ',' << r.head.head << ',' << to_string(r.graph) << ',' << r.test.n << ','
        << format_fixed(r.test.mean_diff) << ',' << format_fixed(r.test.t) << ',' << format_fixed(r.test.p, 8) << ','
        << (r.test.significant ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string counts_csv(const HeadCounts& counts) {
  std::ostringstream out;
  out << "graph";
  for (const auto& [store, _] : counts) out << ',' << csv_field(store);
  out << '\n';
  for (GraphKind g : {GraphKind::CDG, GraphKind::CFG, GraphKind::DDG}) {
    out << to_string(g);
    for (const auto& [_, row] : counts) {
      auto it = row.find(g);
      out << ',';
      if (it == row.end()) {
        out << '-';
      } else {
        out << it->second;
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string overlap_csv(const std::string& label_a, const std::string& label_b,
                        const std::map<std::string, std::map<GraphKind, OverlapRatios>>& by_model) {
  std::ostringstream out;
  out << "ratio";
  for (const auto& [model, row] : by_model) {
    for (const auto& [g, _] : row) out << ',' << csv_field(model + ":" + std::string(to_string(g)));
  }
  out << '\n';
  auto cell = [](const std::optional<double>& v) { return v ? format_fixed(*v, 4) : std::string("-"); };
  out << csv_field("r_" + label_a);
  for (const auto& [_, row] : by_model) {
    for (const auto& [g, r] : row) out << ',' << cell(r.r_a);
  }
  out << '\n' << csv_field("r_" + label_b);
  for (const auto& [_, row] : by_model) {
    for (const auto& [g, r] : row) out << ',' << cell(r.r_b);
  }
  out << '\n';
  return out.str();
}

}  // namespace codeprobe
