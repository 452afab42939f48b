#include "planted.hpp"

#include <atomic>
#include <unistd.h>

namespace codeprobe::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("codeprobe-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

constexpr int kDim = 8;
constexpr std::size_t kPerSource = 10;
constexpr std::uint32_t kRegion = 8;  // tokens per example: a = [0,3), b = [4,7)

TokenizedSource linear_tokens(const std::string& id, std::size_t n) {
  TokenizedSource tok{id, {}};
  tok.tokens.push_back({{0, 0}, "<s>"});
  for (std::size_t j = 0; j < n; ++j) {
    tok.tokens.push_back({{static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(j + 1)}, "t"});
  }
  tok.tokens.push_back({{static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n)}, "</s>"});
  return tok;
}

Task task_for(TaskKind kind) {
  switch (kind) {
    case TaskKind::Relation:
      return {TaskKind::Relation, GraphKind::CDG};
    case TaskKind::InGraph:
      return {TaskKind::InGraph, GraphKind::DDG};
    default:
      return {kind, GraphKind::CFG};
  }
}

}  // namespace

PlantedTaskData write_planted_store(const fs::path& dir, TaskKind kind, bool planted, std::size_t n_train,
                                    std::size_t n_valid, std::size_t n_test, std::uint64_t seed) {
  PlantedTaskData data;
  data.task = task_for(kind);
  data.classes = kind == TaskKind::Tagging ? 4 : 2;
  const std::size_t total = n_train + n_valid + n_test;
  Rng rng(derive_seed(seed, "planted/" + data.task.name()));

  StoreWriter writer(dir, planted ? "planted" : "noise", 1, kDim, 1);
  std::size_t made = 0;
  for (std::size_t src = 0; made < total; ++src) {
    char id[16];
    std::snprintf(id, sizeof id, "s%04zu", src);
    const std::size_t count = std::min(kPerSource, total - made);
    const auto tok = linear_tokens(id, kRegion * count);
    const auto T = static_cast<Eigen::Index>(tok.size());
    RowMatrix<float> h0(T, kDim);
    for (Eigen::Index t = 0; t < T; ++t) {
      for (int d = 0; d < kDim; ++d) h0(t, d) = static_cast<float>(rng.normal());
    }
    for (std::size_t e = 0; e < count; ++e, ++made) {
      ProbingExample ex;
      ex.task = data.task;
      ex.source_id = id;
      const auto off = static_cast<std::uint32_t>(1 + kRegion * e);
      ex.a = {off, off + 3, -1};
      if (data.task.has_pair()) ex.b = TokenSpan{off + 4, off + 7, -1};
      ex.label = static_cast<int>(made % static_cast<std::size_t>(data.classes));
      if (planted) {
        auto plant = [&](const TokenSpan& s, int dim, float value) {
          for (auto t = s.start; t < s.end; ++t) h0(t, dim) += value;
        };
        const float sign = ex.label ? 2.0f : -2.0f;
        switch (kind) {
          case TaskKind::AstPair:
            plant(ex.a, 0, sign);
            plant(*ex.b, 0, sign);
            break;
          case TaskKind::Relation:
            plant(ex.a, 0, sign);
            break;
          case TaskKind::InGraph: {
            const bool first_in = ex.label || rng.uniform01() < 0.5;
            const bool second_in = ex.label || !first_in;
            plant(ex.a, 1, first_in ? 2.0f : -2.0f);
            plant(*ex.b, 1, second_in ? 2.0f : -2.0f);
            break;
          }
          case TaskKind::Tagging:
            plant(ex.a, 2 + ex.label, 3.0f);
            break;
        }
      }
      auto& part = made < n_train ? data.train : made < n_train + n_valid ? data.valid : data.test;
      part.push_back(ex);
    }
    RowMatrix<float> h1 = h0;
    for (Eigen::Index i = 0; i < h1.size(); ++i) h1.data()[i] += 0.1f * static_cast<float>(rng.normal());
    RowMatrix<float> uniform = RowMatrix<float>::Constant(T, T, 1.0f / static_cast<float>(T));
    writer.add_source(tok, {h0, h1}, {{uniform}});
  }
  writer.finish();
  return data;
}

CycleFixture write_cycle_attention_store(const fs::path& dir, std::size_t sources, int layers, int heads,
                                         const std::set<HeadId>& planted, bool uniform, std::uint64_t seed) {
  constexpr int kNodes = 5;
  // node k owns tokens "pk" and "qk" at bytes [6k, 6k+2) and [6k+3, 6k+5)
  std::string text;
  for (int k = 0; k < kNodes; ++k) text += "p" + std::to_string(k) + " q" + std::to_string(k) + " ";
  Rng rng(seed);
  CycleFixture fixture;
  StoreWriter writer(dir, uniform ? "uniform" : "planted", layers, 4, heads);
  for (std::size_t s = 0; s < sources; ++s) {
    const std::string id = "cycle" + std::to_string(s);
    TokenizedSource tok{id, {{{0, 0}, "<s>"}}};
    for (int k = 0; k < kNodes; ++k) {
      const auto b = static_cast<std::uint32_t>(6 * k);
      tok.tokens.push_back({{b, b + 2}, "p" + std::to_string(k)});
      tok.tokens.push_back({{b + 3, b + 5}, "q" + std::to_string(k)});
    }
    const auto n = static_cast<std::uint32_t>(text.size());
    tok.tokens.push_back({{n, n}, "</s>"});
    const auto T = static_cast<Eigen::Index>(tok.size());

    SemanticGraph g;
    g.kind = GraphKind::CFG;
    g.source_id = id;
    g.nodes.push_back({0, {0, 0}, "", SemNodeKind::Entry});
    g.nodes.push_back({1, {n, n}, "", SemNodeKind::Exit});
    for (int k = 0; k < kNodes; ++k) {
      const auto b = static_cast<std::uint32_t>(6 * k);
      g.nodes.push_back({2 + k, {b, b + 5}, text.substr(b, 5), SemNodeKind::Statement});
      g.edges.push_back({2 + k, 2 + (k + 1) % kNodes, ""});
    }
    g.edges.push_back({0, 2, ""});
    g.edges.push_back({2 + kNodes - 1, 1, ""});
    g.normalize();
    fixture.graphs.push_back(g);

    // token -> node index, -1 for sentinels
    auto node_of = [&](Eigen::Index t) { return t == 0 || t == T - 1 ? -1 : static_cast<int>((t - 1) / 2); };
    std::vector<RowMatrix<float>> hidden(static_cast<std::size_t>(layers + 1), RowMatrix<float>::Zero(T, 4));
    std::vector<std::vector<RowMatrix<float>>> attention;
    for (int l = 1; l <= layers; ++l) {
      std::vector<RowMatrix<float>> per_head;
      for (int h = 0; h < heads; ++h) {
        RowMatrix<float> a(T, T);
        const bool boost = planted.count({l, h}) > 0;
        for (Eigen::Index r = 0; r < T; ++r) {
          Eigen::VectorXd w(T);
          for (Eigen::Index c = 0; c < T; ++c) {
            if (uniform) {
              w(c) = 1.0;
              continue;
            }
            const int rn = node_of(r), cn = node_of(c);
            const bool neighbour = rn >= 0 && cn >= 0 && (cn == (rn + 1) % kNodes || rn == (cn + 1) % kNodes);
            w(c) = (boost && neighbour ? 3.0 : 1.0) * std::exp(0.3 * rng.normal());
          }
          a.row(r) = (w / w.sum()).cast<float>().transpose();
        }
        per_head.push_back(std::move(a));
      }
      attention.push_back(std::move(per_head));
    }
    writer.add_source(tok, hidden, attention);
  }
  writer.finish();
  return fixture;
}

}  // namespace codeprobe::testing
