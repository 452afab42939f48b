// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "codeprobe/attnstats.hpp"
#include "codeprobe/pipeline.hpp"
#include "codeprobe/probe.hpp"
#include "codeprobe/semgraph.hpp"
#include "codeprobe/synth.hpp"
#include "oracles.hpp"
#include "planted.hpp"
#include "program_gen.hpp"

using namespace codeprobe;
using namespace codeprobe::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void graph_oracles(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kPrograms = 250;
  int cfg_ok = 0, cdg_ok = 0, ddg_ok = 0, structural_ok = 0, jump_free = 0;
  std::string first_failure;
  Rng rng(20240601);
  for (int i = 0; i < kPrograms; ++i) {
    const auto prog = generate_program(rng);
    const auto tree = parse_source(prog.source, Language::Java);
    const auto cfg = build_cfg(tree, prog.source);
    const auto ids = oracle_to_graph_ids(prog, cfg);
    const auto ocfg = oracle_cfg(prog);
    const auto ocdg = oracle_cdg(ocfg);
    const bool c1 = graph_edges_as_oracle(cfg, ids) == ocfg;
    const bool c2 = graph_edges_as_oracle(build_cdg(tree, prog.source), ids) == ocdg;
    const bool c3 = graph_data_edges_as_oracle(build_ddg(tree, prog.source), ids) == oracle_ddg(prog, ocfg);
    cfg_ok += c1;
    cdg_ok += c2;
    ddg_ok += c3;
    if ((!c1 || !c2 || !c3) && first_failure.empty()) first_failure = prog.source;
  }
  // the syntax-directed CDG is compared on programs without jumps
  GenOptions no_jumps;
  no_jumps.allow_jumps = false;
  for (int i = 0; i < kPrograms; ++i) {
    const auto prog = generate_program(rng, no_jumps);
    const auto tree = parse_source(prog.source, Language::Java);
    const auto ids = oracle_to_graph_ids(prog, build_cfg(tree, prog.source));
    ++jump_free;
    const bool ok = graph_edges_as_oracle(build_structural_cdg(tree, prog.source), ids) == oracle_cdg(oracle_cfg(prog));
    structural_ok += ok;
    if (!ok && first_failure.empty()) first_failure = prog.source;
  }
  const double secs = seconds_since(t0);
  o.check(cfg_ok == kPrograms, "cfg");
  o.check(cdg_ok == kPrograms, "cdg");
  o.check(ddg_ok == kPrograms, "ddg");
  o.check(structural_ok == jump_free, "structural cdg");
  o.check(secs < 60.0, "runtime");
  o.detail << "programs=" << kPrograms << " cfg=" << cfg_ok << " cdg=" << cdg_ok << " ddg=" << ddg_ok
           << " structural_cdg=" << structural_ok << "/" << jump_free << " time=" << format_fixed(secs, 2) << "s";
  if (!first_failure.empty()) o.detail << "\nfirst mismatching program:\n" << first_failure;
}

void metric_goldens(Outcome& o) {
  set_warnings_enabled(false);
  const double m1 = binary_mcc(50, 50, 0, 0);
  const double m2 = binary_mcc(25, 25, 25, 25);
  const double m3 = binary_mcc(90, 80, 20, 10);
  set_warnings_enabled(true);
  o.check(std::abs(m1 - 1.0) < 1e-12, "MCC(50,50,0,0)");
  o.check(std::abs(m2) < 1e-12, "MCC(25,25,25,25)");
  o.check(std::abs(m3 - 0.70353) <= 1e-5, "MCC(90,80,20,10)");

  const std::vector<int> truth{0, 1, 2, 3, 4, 2, 1, 0, 4, 3};
  const auto perfect = ConfusionMatrix::from_predictions(truth, truth, 5);
  const double f1 = macro_f1(perfect);
  o.check(std::abs(f1 - 1.0) < 1e-12, "macro-F1 perfect");
  // relabel predictions through a permutation and map them back: identity confusion
  const std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<int> predicted;
  for (int t : truth) predicted.push_back(perm[static_cast<std::size_t>(t)]);
  std::vector<int> back(5);
  for (int c = 0; c < 5; ++c) back[static_cast<std::size_t>(perm[static_cast<std::size_t>(c)])] = c;
  for (auto& p : predicted) p = back[static_cast<std::size_t>(p)];
  const double mk = mcc(ConfusionMatrix::from_predictions(truth, predicted, 5));
  o.check(std::abs(mk - 1.0) < 1e-12, "multi-class MCC identity");
  o.detail << "mcc=" << format_fixed(m1, 5) << "," << format_fixed(m2, 5) << "," << format_fixed(m3, 5)
           << " macro_f1=" << format_fixed(f1, 5) << " multiclass_mcc=" << format_fixed(mk, 5);
}

double gradient_check() {
  Rng rng(7);
  ProbeModel<double> model(5, 2, 6, 3);
  model.initialize(rng);
  std::vector<ProbeInput<double>> inputs(8);
  for (auto& in : inputs) {
    for (int s = 0; s < 2; ++s) {
      Matrix<double> r(2 + static_cast<int>(rng.uniform_index(3)), 5);
      for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal();
      in.spans.push_back(r);
    }
    in.label = static_cast<int>(rng.uniform_index(3));
  }
  std::vector<const ProbeInput<double>*> batch;
  for (const auto& in : inputs) batch.push_back(&in);
  Vector<double> grad = Vector<double>::Zero(model.theta().size());
  probe_loss(model, batch, &grad);
  Vector<double> numeric(model.theta().size());
  constexpr double h = 1e-4;
  for (Eigen::Index i = 0; i < model.theta().size(); ++i) {
    const double keep = model.theta()(i);
    model.theta()(i) = keep + h;
    const double up = probe_loss<double>(model, batch, nullptr);
    model.theta()(i) = keep - h;
    const double down = probe_loss<double>(model, batch, nullptr);
    model.theta()(i) = keep;
    numeric(i) = (up - down) / (2 * h);
  }
  return (grad - numeric).norm() / std::max(1e-12, grad.norm() + numeric.norm());
}

void probe_sanity(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  set_warnings_enabled(false);
  for (TaskKind kind : {TaskKind::AstPair, TaskKind::Tagging, TaskKind::Relation, TaskKind::InGraph}) {
    for (bool planted : {true, false}) {
      TempDir dir("accept-probe");
      const auto store_dir = dir / "store";
      const auto data = planted ? write_planted_store(store_dir, kind, true, 1000, 200, 400, 11)
                                : write_planted_store(store_dir, kind, false, 1000, 200, 1000, 11);
      const auto store = RepresentationStore::open(store_dir);
      const auto train = gather_inputs(data.train, store, 1);
      const auto valid = gather_inputs(data.valid, store, 1);
      const auto test = gather_inputs(data.test, store, 1);
      const auto probe = train_probe(train, valid, data.classes, 1);
      const auto report = evaluate(probe, test, data.task.graph_name());
      const std::string label = data.task.name() + (planted ? ":planted" : ":noise");
      o.check(planted ? report.mcc >= 0.95 : std::abs(report.mcc) <= 0.2, label);
      o.detail << label << "=" << format_fixed(report.mcc, 3) << " ";
    }
  }
  set_warnings_enabled(true);
  const double rel = gradient_check();
  o.check(rel <= 1e-3, "gradient check");
  const double secs = seconds_since(t0);
  o.check(secs < 180.0, "runtime");
  o.detail << "grad_rel_err=" << rel << " time=" << format_fixed(secs, 2) << "s";
}

std::size_t count_for_store(const fs::path& dir, const CycleFixture& fixture, double alpha) {
  const auto store = RepresentationStore::open(dir);
  std::vector<HeadSample> samples;
  for (const auto& g : fixture.graphs) {
    const auto s = collect_head_samples(store, g);
    samples.insert(samples.end(), s.begin(), s.end());
  }
  const auto results = test_heads(samples, GraphKind::CFG, {alpha, false, false});
  const auto counts = count_semantic_heads({{"store", results}});
  return counts.at("store").count(GraphKind::CFG) ? counts.at("store").at(GraphKind::CFG) : 0;
}

void attention_statistics(Outcome& o) {
  const auto t = paired_t_test({1, 2, 3}, 0.01);
  o.check(std::abs(t.t - 2 * std::sqrt(3.0)) <= 1e-3, "t statistic");
  o.check(std::abs(t.p - 0.0371) <= 1e-3, "p value");
  o.detail << "t=" << format_fixed(t.t, 4) << " p=" << format_fixed(t.p, 4);

  TempDir dir("accept-attn");
  const std::set<HeadId> planted{{1, 2}, {2, 0}, {2, 3}};
  const auto fixture = write_cycle_attention_store(dir / "planted", 100, 2, 4, planted, false, 3);
  std::size_t samples = 0;
  {
    const auto store = RepresentationStore::open(dir / "planted");
    for (const auto& g : fixture.graphs) samples += partition_nodes(g, store.tokens(g.source_id)).size();
  }
  const auto planted_count = count_for_store(dir / "planted", fixture, 0.01);
  const auto control = write_cycle_attention_store(dir / "uniform", 100, 2, 4, {}, true, 3);
  const auto control_count = count_for_store(dir / "uniform", control, 0.01);
  o.check(samples == 500, "500 samples per head");
  o.check(planted_count == 3, "3 planted heads");
  o.check(control_count == 0, "uniform control");
  o.detail << " samples=" << samples << " planted_heads=" << planted_count << " control_heads=" << control_count;

  const std::set<HeadId> a{{1, 0}, {1, 1}, {1, 2}, {1, 3}};
  const std::set<HeadId> b{{1, 0}, {1, 1}, {1, 2}, {2, 0}, {2, 1}, {2, 2}};
  const auto r = overlap_ratios(a, b);
  o.check(r.r_a && std::abs(*r.r_a - 0.75) < 1e-12, "r_a");
  o.check(r.r_b && std::abs(*r.r_b - 0.5) < 1e-12, "r_b");
  o.detail << " overlap=(" << (r.r_a ? format_fixed(*r.r_a, 2) : "-") << ", "
           << (r.r_b ? format_fixed(*r.r_b, 2) : "-") << ")";
}

void merging(Outcome& o) {
  SemanticGraph chain;
  chain.kind = GraphKind::CFG;
  chain.nodes = {{0, {0, 0}, "", SemNodeKind::Entry},
                 {1, {30, 30}, "", SemNodeKind::Exit},
                 {2, {4, 6}, "a", SemNodeKind::Statement},
                 {3, {2, 8}, "b", SemNodeKind::Statement},
                 {4, {0, 20}, "c", SemNodeKind::Statement}};
  chain.edges = {{0, 4, ""}, {4, 3, ""}, {3, 2, ""}, {2, 1, ""}};
  chain.normalize();
  const auto merged = merge_redundant_nodes(chain);
  std::size_t statements = 0;
  for (const auto& n : merged.nodes) statements += n.is_sentinel() ? 0 : 1;
  o.check(statements == 1, "chain collapses");
  o.detail << "chain_nodes_after=" << statements;

  Rng rng(99);
  int idempotent = 0;
  for (int i = 0; i < 100; ++i) {
    const auto once = merge_redundant_nodes(random_range_graph(rng));
    const auto twice = merge_redundant_nodes(once);
    idempotent += export_graph(once) == export_graph(twice);
  }
  o.check(idempotent == 100, "idempotence");
  o.detail << " idempotent=" << idempotent << "/100";
}

void determinism(Outcome& o) {
  TempDir dir("accept-pipeline");
  const fs::path corpus = fs::path(CODEPROBE_SOURCE_DIR) / "data" / "minilang";
  synthesize_store(dir / "store", read_corpus(corpus, Language::Java), SynthStoreOptions{});
  auto run = [&](const std::string& out) {
    PipelineConfig c = PipelineConfig::from_json(read_file(fs::path(CODEPROBE_SOURCE_DIR) / "configs" / "minilang.json"),
                                                 fs::path(CODEPROBE_SOURCE_DIR) / "configs");
    c.store = dir / "store";
    c.output = dir / out;
    c.seeds = {1, 2, 3};
    set_warnings_enabled(false);
    run_extract_graphs(c);
    run_build_dataset(c);
    run_train(c);
    run_report(c);
    set_warnings_enabled(true);
  };
  run("first");
  run("second");
  std::size_t compared = 0, identical = 0;
  auto compare = [&](const fs::path& rel) {
    ++compared;
    const auto a = dir / "first" / rel, b = dir / "second" / rel;
    if (fs::exists(a) && fs::exists(b) && read_file(a) == read_file(b)) {
      ++identical;
    } else {
      o.detail << "differs: " << rel.generic_string() << " ";
    }
  };
  for (const auto& entry : fs::directory_iterator(dir / "first" / "datasets")) {
    compare(fs::path("datasets") / entry.path().filename());
  }
  compare("reports/aggregate.csv");
  compare("reports/eval.csv");
  o.check(compared > 3 && identical == compared, "byte-identical outputs");
  o.detail << "files=" << compared << " identical=" << identical;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"graph builders match oracles", graph_oracles},
      {"metric golden values", metric_goldens},
      {"probe sanity", probe_sanity},
      {"attention statistics", attention_statistics},
      {"node merging", merging},
      {"pipeline determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail << "exception: " << ex.what();
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " :: " << o.detail.str() << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << (failed ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED") << " (" << criteria.size() - failed << "/"
            << criteria.size() << ")" << std::endl;
  return failed ? 1 : 0;
}
