#include "codeprobe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace codeprobe {

std::string Task::name() const {
  switch (kind) {
    case TaskKind::AstPair: return "ast_pair";
    case TaskKind::Tagging: return "tagging";
    case TaskKind::Relation: return "relation_" + lowercase(to_string(graph));
    case TaskKind::InGraph: return "ingraph_" + lowercase(to_string(graph));
  }
  return "?";
}

std::string Task::graph_name() const { return has_graph() ? std::string(to_string(graph)) : "AST"; }

Task Task::parse(std::string_view name) {
  if (name == "ast_pair") return {TaskKind::AstPair, GraphKind::CFG};
  if (name == "tagging") return {TaskKind::Tagging, GraphKind::CFG};
  auto suffix = [&](std::string_view prefix) -> std::optional<GraphKind> {
    if (name.substr(0, prefix.size()) != prefix) return std::nullopt;
    return graph_kind_from_string(name.substr(prefix.size()));
  };
  if (auto g = suffix("relation_")) return {TaskKind::Relation, *g};
  if (auto g = suffix("ingraph_")) {
    if (*g == GraphKind::CFG) throw ConfigError("ingraph is defined for cdg and ddg only");
    return {TaskKind::InGraph, *g};
  }
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

std::vector<Task> Task::all() {
  return {{TaskKind::AstPair, GraphKind::CFG},  {TaskKind::Tagging, GraphKind::CFG},
          {TaskKind::Relation, GraphKind::CDG}, {TaskKind::Relation, GraphKind::DDG},
          {TaskKind::Relation, GraphKind::CFG}, {TaskKind::InGraph, GraphKind::CDG},
          {TaskKind::InGraph, GraphKind::DDG}};
}

namespace {

const char* reason_of(AlignStatus s) {
  return s == AlignStatus::OutOfWindow ? "out_of_window" : "unalignable";
}

// Counts skipped items per reason and flushes them as report rows.
class SkipCounter {
 public:
  SkipCounter(std::string source_id, std::string task) : source_id_(std::move(source_id)), task_(std::move(task)) {}
  void add(const std::string& reason, std::size_t n = 1) {
    if (n > 0) counts_[reason] += n;
  }
  std::vector<SkipEntry> entries() const {
    std::vector<SkipEntry> out;
    for (const auto& [reason, n] : counts_) out.push_back({source_id_, task_, reason, n});
    return out;
  }

 private:
  std::string source_id_;
  std::string task_;
  std::map<std::string, std::size_t> counts_;
};

bool span_before(const TokenSpan& a, const TokenSpan& b) {
  return std::tie(a.start, a.end, a.origin) < std::tie(b.start, b.end, b.origin);
}

std::vector<std::size_t> sorted_sample(Rng& rng, std::size_t n, std::size_t k) {
  auto idx = rng.sample_without_replacement(n, k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

using SpanPair = std::pair<TokenSpan, TokenSpan>;

// Emits positives and negatives at the requested ratio; when negatives are
// scarce the positives are down-sampled instead.
void emit_balanced(const Task& task, const std::string& source_id, std::vector<SpanPair> positives,
                   std::vector<SpanPair> negatives, double ratio, Rng& rng, SkipCounter& skips,
                   BuildResult& out) {
  if (positives.empty()) {
    skips.add("no_positives");
    return;
  }
  if (negatives.empty()) {
    skips.add("no_negatives", positives.size());
    return;
  }
  auto want_neg = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(positives.size())));
  want_neg = std::max<std::size_t>(want_neg, 1);
  if (negatives.size() < want_neg) {
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(negatives.size()) / ratio)));
    if (keep < positives.size()) {
      skips.add("positives_downsampled", positives.size() - keep);
      std::vector<SpanPair> kept;
      for (auto i : sorted_sample(rng, positives.size(), keep)) kept.push_back(positives[i]);
      positives = std::move(kept);
    }
    want_neg = negatives.size();
  }
  for (const auto& [a, b] : positives) out.examples.push_back({task, source_id, a, b, 1});
  for (auto i : sorted_sample(rng, negatives.size(), want_neg)) {
    out.examples.push_back({task, source_id, negatives[i].first, negatives[i].second, 0});
  }
}

}  // namespace

BuildResult build_ast_pairs(const AstTree& tree, const std::vector<SyntaxUnit>& units, const TokenizedSource& tok,
                            std::string_view source, std::uint64_t seed, double negative_ratio) {
  const Task task{TaskKind::AstPair, GraphKind::CFG};
  BuildResult out;
  SkipCounter skips(tree.source_id, task.name());

  std::map<NodeId, std::vector<std::size_t>> unit_of;
  for (const auto& u : units) {
    for (NodeId m : u.member_nodes) unit_of[m].push_back(u.unit_id);
  }
  std::vector<std::pair<NodeId, TokenSpan>> aligned;
  for (const auto& [id, _] : unit_of) {
    const auto r = try_align_span(tree.node(id).range, tok, source, id);
    if (r.status == AlignStatus::Ok) {
      aligned.emplace_back(id, r.span);
    } else {
      skips.add(std::string(reason_of(r.status)) + "_node");
    }
  }
  std::sort(aligned.begin(), aligned.end(), [](const auto& x, const auto& y) { return span_before(x.second, y.second); });

  auto share_unit = [&](NodeId x, NodeId y) {
    for (auto ux : unit_of[x]) {
      for (auto uy : unit_of[y]) {
        if (ux == uy) return true;
      }
    }
    return false;
  };
  std::vector<SpanPair> positives, negatives;
  std::size_t identical = 0;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    for (std::size_t j = i + 1; j < aligned.size(); ++j) {
      const auto& [x, sx] = aligned[i];
      const auto& [y, sy] = aligned[j];
      const bool together = share_unit(x, y);
      if (sx == sy) {
        identical += together ? 1 : 0;
        continue;
      }
      (together ? positives : negatives).emplace_back(sx, sy);
    }
  }
  skips.add("identical_span_pair", identical);
  Rng rng(derive_seed(seed, task.name() + "/" + tree.source_id));
  emit_balanced(task, tree.source_id, std::move(positives), std::move(negatives), negative_ratio, rng, skips, out);
  out.skips = skips.entries();
  return out;
}

BuildResult build_tagging(const AstTree& tree, const std::vector<std::pair<NodeId, TagLabel>>& tags,
                          const std::vector<std::string>& retained, const TokenizedSource& tok,
                          std::string_view source) {
  const Task task{TaskKind::Tagging, GraphKind::CFG};
  BuildResult out;
  SkipCounter skips(tree.source_id, task.name());
  for (const auto& [leaf, label] : tags) {
    if (label.is_other()) continue;
    auto it = std::find(retained.begin(), retained.end(), label.name);
    if (it == retained.end()) continue;
    const auto r = try_align_span(tree.node(leaf).range, tok, source, leaf);
    if (r.status != AlignStatus::Ok) {
      skips.add(std::string(reason_of(r.status)) + "_leaf");
      continue;
    }
    out.examples.push_back({task, tree.source_id, r.span, std::nullopt, static_cast<int>(it - retained.begin())});
  }
  out.skips = skips.entries();
  return out;
}

namespace {

std::map<SemNodeId, TokenSpan> align_nodes(const SemanticGraph& graph, const TokenizedSource& tok,
                                           std::string_view source, SkipCounter& skips) {
  std::map<SemNodeId, TokenSpan> spans;
  for (const auto& n : graph.nodes) {
    if (n.is_sentinel()) continue;
    const auto r = try_align_span(n.code_range, tok, source, n.id);
    if (r.status == AlignStatus::Ok) {
      spans[n.id] = r.span;
    } else {
      skips.add(std::string(reason_of(r.status)) + "_node");
    }
  }
  return spans;
}

}  // namespace

BuildResult build_relation(const SemanticGraph& graph, const TokenizedSource& tok, std::string_view source,
                           std::uint64_t seed, double negative_ratio) {
  const Task task{TaskKind::Relation, graph.kind};
  BuildResult out;
  SkipCounter skips(graph.source_id, task.name());
  const auto spans = align_nodes(graph, tok, source, skips);
  const auto edges = graph.edge_pairs();

  std::vector<SpanPair> positives, negatives;
  for (auto [s, d] : edges) {
    auto a = spans.find(s);
    auto b = spans.find(d);
    if (a == spans.end() || b == spans.end() || a->second == b->second) continue;
    positives.emplace_back(a->second, b->second);
  }
  for (const auto& [u, su] : spans) {
    for (const auto& [v, sv] : spans) {
      if (u == v || su == sv || edges.count({u, v}) || edges.count({v, u})) continue;
      negatives.emplace_back(su, sv);
    }
  }
  Rng rng(derive_seed(seed, task.name() + "/" + graph.source_id));
  emit_balanced(task, graph.source_id, std::move(positives), std::move(negatives), negative_ratio, rng, skips, out);
  out.skips = skips.entries();
  return out;
}

std::set<SemNodeId> graph_members(const SemanticGraph& graph) {
  std::set<SemNodeId> members;
  for (const auto& e : graph.edges) {
    const auto* s = graph.find(e.src);
    const auto* d = graph.find(e.dst);
    if (!s || !d || s->is_sentinel() || d->is_sentinel() || e.src == e.dst) continue;
    members.insert(e.src);
    members.insert(e.dst);
  }
  return members;
}

BuildResult build_ingraph(const SemanticGraph& graph, const std::vector<SemNode>& statements,
                          const TokenizedSource& tok, std::string_view source, std::uint64_t seed) {
  const Task task{TaskKind::InGraph, graph.kind};
  BuildResult out;
  SkipCounter skips(graph.source_id, task.name());
  const auto members = graph_members(graph);

  std::vector<TokenSpan> in, outside;
  for (const auto& s : statements) {
    if (s.is_sentinel()) continue;
    bool member = false;
    for (SemNodeId m : members) {
      if (graph.find(m)->code_range.overlaps(s.code_range)) member = true;
    }
    const auto r = try_align_span(s.code_range, tok, source, s.id);
    if (r.status != AlignStatus::Ok) {
      skips.add(std::string(reason_of(r.status)) + "_statement");
      continue;
    }
    (member ? in : outside).push_back(r.span);
  }
  std::sort(in.begin(), in.end(), span_before);
  std::sort(outside.begin(), outside.end(), span_before);

  std::vector<SpanPair> positives, negatives;
  for (std::size_t i = 0; i < in.size(); ++i) {
    for (std::size_t j = i + 1; j < in.size(); ++j) {
      if (!(in[i] == in[j])) positives.emplace_back(in[i], in[j]);
    }
    for (const auto& o : outside) {
      if (in[i] == o) continue;
      negatives.push_back(span_before(in[i], o) ? SpanPair{in[i], o} : SpanPair{o, in[i]});
    }
  }
  if (positives.empty()) {
    skips.add("no_positives");
  } else if (negatives.empty()) {
    skips.add("no_negatives", positives.size());
  } else {
    Rng rng(derive_seed(seed, task.name() + "/" + graph.source_id));
    const std::size_t k = std::min(positives.size(), negatives.size());
    skips.add("positives_downsampled", positives.size() - k);
    for (auto i : sorted_sample(rng, positives.size(), k)) {
      out.examples.push_back({task, graph.source_id, positives[i].first, positives[i].second, 1});
    }
    for (auto i : sorted_sample(rng, negatives.size(), k)) {
      out.examples.push_back({task, graph.source_id, negatives[i].first, negatives[i].second, 0});
    }
  }
  out.skips = skips.entries();
  return out;
}

std::map<std::string, SplitPart> assign_programs(std::vector<std::string> program_ids, const SplitRatios& ratios,
                                                 std::uint64_t seed) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-6) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  std::sort(program_ids.begin(), program_ids.end());
  program_ids.erase(std::unique(program_ids.begin(), program_ids.end()), program_ids.end());
  const std::size_t n = program_ids.size();
  if (n < 3) throw InsufficientData("need at least 3 programs to split, have " + std::to_string(n));
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(program_ids);
  const auto count = [n](double r) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(r * static_cast<double>(n))));
  };
  const std::size_t n_test = count(ratios.test);
  const std::size_t n_valid = count(ratios.valid);
  if (n_test + n_valid >= n) throw InsufficientData("split leaves no training programs");
  std::map<std::string, SplitPart> out;
  for (std::size_t i = 0; i < n; ++i) {
    out[program_ids[i]] = i < n_test ? SplitPart::Test : i < n_test + n_valid ? SplitPart::Valid : SplitPart::Train;
  }
  return out;
}

std::vector<ProbingExample>& DatasetSplit::part(SplitPart p) {
  return p == SplitPart::Train ? train : p == SplitPart::Valid ? valid : test;
}

const std::vector<ProbingExample>& DatasetSplit::part(SplitPart p) const {
  return p == SplitPart::Train ? train : p == SplitPart::Valid ? valid : test;
}

std::map<int, std::size_t> DatasetSplit::label_counts(SplitPart p) const {
  std::map<int, std::size_t> counts;
  for (const auto& e : part(p)) ++counts[e.label];
  return counts;
}

DatasetSplit split_dataset(const std::vector<ProbingExample>& examples,
                           const std::map<std::string, SplitPart>& assignment, std::uint64_t seed) {
  DatasetSplit split;
  split.seed = seed;
  for (const auto& e : examples) {
    auto it = assignment.find(e.source_id);
    if (it == assignment.end()) throw InsufficientData("program '" + e.source_id + "' has no split assignment");
    split.part(it->second).push_back(e);
  }
  static constexpr std::array<std::pair<SplitPart, const char*>, 3> parts{
      {{SplitPart::Train, "train"}, {SplitPart::Valid, "valid"}, {SplitPart::Test, "test"}}};
  for (auto [p, name] : parts) {
    auto& items = split.part(p);
    const bool binary = !items.empty() && items.front().task.is_binary();
    if (binary) {
      std::vector<std::size_t> pos, neg;
      for (std::size_t i = 0; i < items.size(); ++i) (items[i].label == 1 ? pos : neg).push_back(i);
      const std::size_t k = std::min(pos.size(), neg.size());
      Rng rng(derive_seed(seed, std::string("balance/") + name));
      std::vector<std::size_t> keep;
      for (auto* side : {&pos, &neg}) {
        if (side->size() == k) {
          keep.insert(keep.end(), side->begin(), side->end());
        } else {
          for (auto i : sorted_sample(rng, side->size(), k)) keep.push_back((*side)[i]);
        }
      }
      std::sort(keep.begin(), keep.end());
      std::vector<ProbingExample> balanced;
      balanced.reserve(keep.size());
      for (auto i : keep) balanced.push_back(std::move(items[i]));
      items = std::move(balanced);
    }
    if (items.empty()) throw InsufficientData(std::string("the ") + name + " split is empty after balancing");
  }
  return split;
}

DatasetSplit split_dataset(const std::vector<ProbingExample>& examples, const SplitRatios& ratios,
                           std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& e : examples) ids.push_back(e.source_id);
  return split_dataset(examples, assign_programs(std::move(ids), ratios, seed), seed);
}

std::string to_jsonl(const std::vector<ProbingExample>& examples, const std::vector<std::string>& class_names) {
  std::string out;
  for (const auto& e : examples) {
    nlohmann::ordered_json j;
    j["task"] = e.task.name();
    j["source_id"] = e.source_id;
    j["a"] = {e.a.start, e.a.end};
    if (e.b) {
      j["b"] = {e.b->start, e.b->end};
    } else if (e.label >= 0 && static_cast<std::size_t>(e.label) < class_names.size()) {
      j["b"] = class_names[static_cast<std::size_t>(e.label)];
    } else {
      j["b"] = std::to_string(e.label);
    }
    j["label"] = e.label;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<ProbingExample> from_jsonl(std::string_view text) {
  std::vector<ProbingExample> out;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ProbingExample e;
      e.task = Task::parse(j.at("task").get<std::string>());
      e.source_id = j.at("source_id").get<std::string>();
      e.a = {j.at("a").at(0).get<std::uint32_t>(), j.at("a").at(1).get<std::uint32_t>()};
      if (j.at("b").is_array()) e.b = TokenSpan{j["b"].at(0).get<std::uint32_t>(), j["b"].at(1).get<std::uint32_t>()};
      e.label = j.at("label").get<int>();
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("dataset line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

std::string skip_report_csv(const std::vector<SkipEntry>& skips) {
  std::ostringstream out;
  out << "source_id,task,reason,count\n";
  for (const auto& s : skips) {
    out << csv_field(s.source_id) << ',' << s.task << ',' << s.reason << ',' << s.count << '\n';
  }
  return out.str();
}

}  // namespace codeprobe
