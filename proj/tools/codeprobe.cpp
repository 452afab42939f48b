// codeprobe: command line front end for the probing pipeline.

#include <algorithm>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "codeprobe/pipeline.hpp"
#include "codeprobe/synth.hpp"

namespace fs = std::filesystem;
using namespace codeprobe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitValidation = 2;
constexpr int kExitPartial = 3;

struct Overrides {
  std::string config_file;
  std::optional<std::string> corpus, language, graph_source, import_dir, store, output, store_label, compare_heads,
      compare_label;
  std::vector<std::string> tasks, layers;
  std::vector<std::uint64_t> seeds;
  std::optional<double> alpha;
  std::optional<int> workers;
  std::optional<std::uint64_t> dataset_seed;
  std::optional<std::size_t> tag_min_count;
  bool normalized = false;
  bool bonferroni = false;
};

void add_config_options(CLI::App& app, Overrides& o) {
  app.add_option("-c,--config", o.config_file, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--corpus", o.corpus, "Directory of source files");
  app.add_option("--language", o.language, "java or c");
  app.add_option("--graph-source", o.graph_source, "native or import");
  app.add_option("--import-dir", o.import_dir, "Directory of exported trees and graphs");
  app.add_option("--store", o.store, "Representation store directory");
  app.add_option("--output", o.output, "Output directory");
  app.add_option("--tasks", o.tasks, "Task names")->delimiter(',');
  app.add_option("--layers", o.layers, "Layer indices or 'all'")->delimiter(',');
  app.add_option("--seeds", o.seeds, "Training seeds")->delimiter(',');
  app.add_option("--alpha", o.alpha, "Significance level");
  app.add_option("-j,--workers", o.workers, "Worker threads (default: CODEPROBE_WORKERS or config)");
  app.add_option("--dataset-seed", o.dataset_seed, "Seed for sampling and splitting");
  app.add_option("--tag-min-count", o.tag_min_count, "Minimum corpus count for a tagging label");
  app.add_option("--store-label", o.store_label, "Name of the store in reports");
  app.add_option("--compare-heads", o.compare_heads, "heads.csv of another run for the overlap table");
  app.add_option("--compare-label", o.compare_label, "Name of the compared run");
  app.add_flag("--normalized", o.normalized, "Compare per-token attention means");
  app.add_flag("--bonferroni", o.bonferroni, "Bonferroni-correct alpha over heads");
}

PipelineConfig resolve_config(const Overrides& o) {
  PipelineConfig c;
  if (!o.config_file.empty()) {
    const fs::path file = fs::absolute(o.config_file);
    c = PipelineConfig::from_json(read_file(file), file.parent_path());
  }
  if (o.corpus) c.corpus = *o.corpus;
  if (o.language) c.language = language_from_string(*o.language);
  if (o.graph_source) c.graph_source = *o.graph_source;
  if (o.import_dir) c.import_dir = *o.import_dir;
  if (o.store) c.store = *o.store;
  if (o.output) c.output = *o.output;
  if (!o.tasks.empty()) c.tasks = o.tasks;
  if (!o.layers.empty()) {
    c.layers.clear();
    if (!(o.layers.size() == 1 && o.layers[0] == "all")) {
      for (const auto& l : o.layers) {
        try {
          c.layers.push_back(std::stoi(l));
        } catch (const std::exception&) {
          throw ConfigError("bad layer '" + l + "'");
        }
      }
    }
  }
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.alpha) c.alpha = *o.alpha;
  c.workers = o.workers ? *o.workers : workers_from_env(c.workers);
  if (o.dataset_seed) c.dataset_seed = *o.dataset_seed;
  if (o.tag_min_count) c.tag_min_count = *o.tag_min_count;
  if (o.store_label) c.store_label = *o.store_label;
  if (o.compare_heads) c.compare_heads = *o.compare_heads;
  if (o.compare_label) c.compare_label = *o.compare_label;
  if (o.normalized) c.attention_normalized = true;
  if (o.bonferroni) c.attention_bonferroni = true;
  c.validate();
  return c;
}

int report(const std::string& stage, const StageResult& r, bool all_fail_only) {
  if (r.skipped_unchanged) {
    std::cerr << stage << ": inputs unchanged, skipped\n";
    return kExitOk;
  }
  for (const auto& m : r.messages) std::cerr << stage << ": " << m << '\n';
  std::cerr << stage << ": " << r.succeeded << " succeeded, " << r.failures << " failed\n";
  if (r.failures == 0) return kExitOk;
  if (r.succeeded == 0) return kExitError;
  return all_fail_only ? kExitOk : kExitPartial;
}

using Stage = StageResult (*)(const PipelineConfig&);

struct StageDef {
  const char* name;
  const char* help;
  Stage fn;
  bool all_fail_only;
};

const StageDef kStages[] = {
    {"extract-graphs", "Parse the corpus and write trees and semantic graphs", run_extract_graphs, true},
    {"build-dataset", "Build probing datasets from graphs and store tokens", run_build_dataset, false},
    {"train", "Train and evaluate probes per task, layer and seed", run_train, false},
    {"report", "Aggregate evaluations into CSV and SVG layer curves", run_report, false},
    {"attention", "Test attention heads against semantic graphs", run_attention, false},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probe code models for syntax and semantics"};
  app.require_subcommand(1);

  Overrides overrides;
  std::vector<std::pair<CLI::App*, const StageDef*>> stage_apps;
  for (const auto& def : kStages) {
    auto* sub = app.add_subcommand(def.name, def.help);
    add_config_options(*sub, overrides);
    stage_apps.emplace_back(sub, &def);
  }
  auto* run_all = app.add_subcommand("run", "Run every stage in order");
  add_config_options(*run_all, overrides);

  SynthStoreOptions synth;
  std::string synth_corpus, synth_out, synth_language = "java";
  auto* synth_app = app.add_subcommand("synth-store", "Write a synthetic representation store for a corpus");
  synth_app->add_option("--corpus", synth_corpus, "Directory of source files")->required();
  synth_app->add_option("--out", synth_out, "Store directory to create")->required();
  synth_app->add_option("--language", synth_language, "java or c");
  synth_app->add_option("--model", synth.model, "Model name in the manifest");
  synth_app->add_option("--layers", synth.layers, "Encoder layers");
  synth_app->add_option("--hidden", synth.hidden_dim, "Hidden size");
  synth_app->add_option("--heads", synth.heads, "Attention heads");
  synth_app->add_option("--seed", synth.seed, "Seed");
  synth_app->add_option("--max-piece", synth.max_piece, "Longest subword piece in bytes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (synth_app->parsed()) {
      synthesize_store(synth_out, read_corpus(synth_corpus, language_from_string(synth_language)), synth);
      return kExitOk;
    }
    const PipelineConfig config = resolve_config(overrides);
    if (run_all->parsed()) {
      int worst = kExitOk;
      for (const auto& def : kStages) {
        const int code = report(def.name, def.fn(config), def.all_fail_only);
        if (code == kExitError) return code;
        worst = std::max(worst, code);
      }
      return worst;
    }
    for (const auto& [sub, def] : stage_apps) {
      if (sub->parsed()) return report(def->name, def->fn(config), def->all_fail_only);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
