#include "codeprobe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "codeprobe/attnstats.hpp"

namespace codeprobe {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------- config

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

namespace {

void check_keys(const json& j, const std::string& prefix, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError("config section '" + prefix + "' must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + prefix + key + "'");
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(std::string_view text, const fs::path& base) {
  PipelineConfig c;
  static const std::set<std::string> known = {
      "corpus",       "language",      "graph_source",        "import_dir",       "store",
      "tasks",        "layers",        "seeds",               "alpha",            "output",
      "dataset_seed", "negative_ratio", "split",              "tag_min_count",    "probe",
      "workers",      "verify_frozen_store", "attention",     "store_label"};
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    check_keys(j, "", known);
    if (j.contains("split")) check_keys(j["split"], "split.", {"train", "valid", "test"});
    if (j.contains("probe")) {
      check_keys(j["probe"], "probe.",
                 {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs", "patience", "hidden"});
    }
    if (j.contains("attention")) {
      check_keys(j["attention"], "attention.",
                 {"normalized", "bonferroni", "cap", "seed", "compare_heads", "compare_label"});
    }
    if (j.contains("corpus")) c.corpus = resolve(j["corpus"].get<std::string>(), base);
    if (j.contains("language")) c.language = language_from_string(j["language"].get<std::string>());
    read_opt(j, "graph_source", c.graph_source);
    if (j.contains("import_dir")) c.import_dir = resolve(j["import_dir"].get<std::string>(), base);
    if (j.contains("store")) c.store = resolve(j["store"].get<std::string>(), base);
    read_opt(j, "tasks", c.tasks);
    if (j.contains("layers")) {
      if (j["layers"].is_string()) {
        if (j["layers"].get<std::string>() != "all") throw ConfigError("layers must be \"all\" or a list");
        c.layers.clear();
      } else {
        c.layers = j["layers"].get<std::vector<int>>();
      }
    }
    read_opt(j, "seeds", c.seeds);
    read_opt(j, "alpha", c.alpha);
    if (j.contains("output")) c.output = resolve(j["output"].get<std::string>(), base);
    read_opt(j, "dataset_seed", c.dataset_seed);
    read_opt(j, "negative_ratio", c.negative_ratio);
    if (j.contains("split")) {
      const auto& s = j["split"];
      read_opt(s, "train", c.split.train);
      read_opt(s, "valid", c.split.valid);
      read_opt(s, "test", c.split.test);
    }
    read_opt(j, "tag_min_count", c.tag_min_count);
    if (j.contains("probe")) {
      const auto& p = j["probe"];
      read_opt(p, "learning_rate", c.probe.learning_rate);
      read_opt(p, "beta1", c.probe.beta1);
      read_opt(p, "beta2", c.probe.beta2);
      read_opt(p, "epsilon", c.probe.epsilon);
      read_opt(p, "batch_size", c.probe.batch_size);
      read_opt(p, "max_epochs", c.probe.max_epochs);
      read_opt(p, "patience", c.probe.patience);
      read_opt(p, "hidden", c.probe.hidden);
    }
    read_opt(j, "workers", c.workers);
    read_opt(j, "verify_frozen_store", c.verify_frozen_store);
    read_opt(j, "store_label", c.store_label);
    if (j.contains("attention")) {
      const auto& a = j["attention"];
      read_opt(a, "normalized", c.attention_normalized);
      read_opt(a, "bonferroni", c.attention_bonferroni);
      read_opt(a, "cap", c.attention_cap);
      read_opt(a, "seed", c.attention_seed);
      if (a.contains("compare_heads")) c.compare_heads = resolve(a["compare_heads"].get<std::string>(), base);
      read_opt(a, "compare_label", c.compare_label);
    }
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  return c;
}

std::string PipelineConfig::to_json() const {
  ordered_json j;
  j["corpus"] = corpus.generic_string();
  j["language"] = std::string(codeprobe::to_string(language));
  j["graph_source"] = graph_source;
  j["import_dir"] = import_dir.generic_string();
  j["store"] = store.generic_string();
  std::vector<std::string> names;
  for (const auto& t : task_list()) names.push_back(t.name());
  j["tasks"] = names;
  if (layers.empty()) {
    j["layers"] = "all";
  } else {
    j["layers"] = layers;
  }
  j["seeds"] = seeds;
  j["alpha"] = alpha;
  j["output"] = output.generic_string();
  j["dataset_seed"] = dataset_seed;
  j["negative_ratio"] = negative_ratio;
  j["split"] = {{"train", split.train}, {"valid", split.valid}, {"test", split.test}};
  j["tag_min_count"] = tag_min_count;
  j["probe"] = {{"learning_rate", probe.learning_rate}, {"beta1", probe.beta1},           {"beta2", probe.beta2},
                {"epsilon", probe.epsilon},             {"batch_size", probe.batch_size}, {"max_epochs", probe.max_epochs},
                {"patience", probe.patience},           {"hidden", probe.hidden}};
  j["workers"] = workers;
  j["verify_frozen_store"] = verify_frozen_store;
  j["store_label"] = store_label;
  j["attention"] = {{"normalized", attention_normalized},
                    {"bonferroni", attention_bonferroni},
                    {"cap", attention_cap},
                    {"seed", attention_seed},
                    {"compare_heads", compare_heads.generic_string()},
                    {"compare_label", compare_label}};
  return j.dump(2) + "\n";
}

std::vector<Task> PipelineConfig::task_list() const {
  if (tasks.empty()) return Task::all();
  std::vector<Task> out;
  for (const auto& name : tasks) out.push_back(Task::parse(name));
  return out;
}

void PipelineConfig::validate() const {
  if (graph_source != "native" && graph_source != "import") throw ConfigError("graph_source must be native or import");
  if (graph_source == "import" && import_dir.empty()) throw ConfigError("graph_source import needs import_dir");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must be in (0, 1)");
  if (!(negative_ratio > 0)) throw ConfigError("negative_ratio must be positive");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (probe.batch_size < 1 || probe.max_epochs < 1 || probe.patience < 1 || probe.hidden < 1) {
    throw ConfigError("probe settings must be positive");
  }
  for (int l : layers) {
    if (l < 0) throw ConfigError("layers must be non-negative");
  }
  if (!fs::is_directory(corpus)) throw ConfigError("corpus directory not found: " + corpus.string());
  if (graph_source == "import" && !fs::is_directory(import_dir)) {
    throw ConfigError("import directory not found: " + import_dir.string());
  }
  if (!compare_heads.empty() && !fs::exists(compare_heads)) throw ConfigError("compare_heads not found: " + compare_heads.string());
  task_list();
}

namespace {

void require_store(const PipelineConfig& config) {
  if (config.store.empty()) throw ConfigError("this stage needs a representation store");
  if (!fs::exists(config.store / kManifestName)) throw ConfigError("no store manifest under " + config.store.string());
}

}  // namespace

// ---------------------------------------------------------------- helpers

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

int workers_from_env(int fallback) {
  if (const char* v = std::getenv("CODEPROBE_WORKERS")) {
    try {
      const int n = std::stoi(v);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("CODEPROBE_WORKERS must be a positive integer, got '") + v + "'");
  }
  return fallback;
}

std::vector<std::pair<std::string, std::string>> read_corpus(const fs::path& dir, Language language) {
  if (!fs::is_directory(dir)) throw ConfigError("corpus directory not found: " + dir.string());
  const std::string ext = language == Language::Java ? ".java" : ".c";
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ext) continue;
    out.emplace_back(entry.path().stem().string(), read_file(entry.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct Layout {
  fs::path root, artifacts, datasets, runs, reports, stamps;
  explicit Layout(const fs::path& out)
      : root(out), artifacts(out / "artifacts"), datasets(out / "datasets"), runs(out / "runs"),
        reports(out / "reports"), stamps(out / "stamps") {}
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Content-addressed stage stamps: a stage is skipped when the hash of its
// inputs matches the stamp and every expected output still exists.
class Stamp {
 public:
  Stamp(const Layout& layout, std::string stage) : file_(layout.stamps / (stage + ".stamp")) {}
  void add(std::string_view part) {
    hash_ = fnv1a64(part, hash_);
    hash_ = fnv1a64("\x1f", hash_);
  }
  void add_dir(const fs::path& dir) { add(fs::exists(dir) ? directory_content_hash(dir) : "missing"); }
  void add_file(const fs::path& file) { add(fs::exists(file) ? read_file(file) : "missing"); }
  bool fresh(const std::vector<fs::path>& outputs) const {
    if (!fs::exists(file_) || read_file(file_) != hex64(hash_) + "\n") return false;
    return std::all_of(outputs.begin(), outputs.end(), [](const fs::path& p) { return fs::exists(p); });
  }
  void write() const { write_file(file_, hex64(hash_) + "\n"); }

 private:
  fs::path file_;
  std::uint64_t hash_ = fnv1a64("");
};

void write_snapshot(const PipelineConfig& config) {
  write_file(config.output / "config.resolved.json", config.to_json());
}

std::string reason_for(const std::exception& ex) {
  if (dynamic_cast<const ParseError*>(&ex)) return "parse_error";
  if (dynamic_cast<const UnsupportedConstruct*>(&ex)) return "unsupported_construct";
  if (dynamic_cast<const ImportError*>(&ex)) return "import_error";
  if (dynamic_cast<const AlignmentError*>(&ex)) return "alignment_error";
  if (dynamic_cast<const StoreError*>(&ex)) return "store_error";
  return "error";
}

const std::array<GraphKind, 3> kGraphKinds{GraphKind::CFG, GraphKind::CDG, GraphKind::DDG};

std::string artifact_name(const std::string& id, std::string_view what) { return id + "." + std::string(what) + ".tsv"; }

std::string store_label_of(const PipelineConfig& config, const RepresentationStore* store) {
  if (!config.store_label.empty()) return config.store_label;
  if (store) return store->manifest().model;
  return "model";
}

struct ProgramArtifacts {
  std::string id;
  std::string source;
  AstTree tree;
  std::map<GraphKind, SemanticGraph> graphs;
};

std::optional<ProgramArtifacts> load_program(const Layout& layout, const PipelineConfig& config, const std::string& id,
                                             const std::string& source) {
  const fs::path ast = layout.artifacts / artifact_name(id, "ast");
  if (!fs::exists(ast)) return std::nullopt;
  ProgramArtifacts p{id, source, read_tree_document(read_file(ast), source.size(), config.language, id), {}};
  for (GraphKind g : kGraphKinds) {
    const fs::path file = layout.artifacts / artifact_name(id, lowercase(to_string(g)));
    if (!fs::exists(file)) return std::nullopt;
    p.graphs[g] = import_graph(read_file(file), g, source, id);
  }
  return p;
}

}  // namespace

// ---------------------------------------------------------------- extract

StageResult run_extract_graphs(const PipelineConfig& config) {
  config.validate();
  const Layout layout(config.output);
  const auto corpus = read_corpus(config.corpus, config.language);
  if (corpus.empty()) throw ConfigError("corpus " + config.corpus.string() + " has no source files");
  write_snapshot(config);

  Stamp stamp(layout, "extract-graphs");
  stamp.add(to_string(config.language));
  stamp.add(config.graph_source);
  for (const auto& [id, text] : corpus) {
    stamp.add(id);
    stamp.add(text);
  }
  if (config.graph_source == "import") stamp.add_dir(config.import_dir);
  StageResult result;
  if (stamp.fresh({layout.artifacts / "extract_skips.csv"})) {
    result.skipped_unchanged = true;
    return result;
  }
  fs::remove_all(layout.artifacts);
  fs::create_directories(layout.artifacts);

  struct Outcome {
    bool ok = false;
    std::string reason, message;
  };
  std::vector<Outcome> outcomes(corpus.size());
  parallel_for(corpus.size(), config.workers, [&](std::size_t i) {
    const auto& [id, text] = corpus[i];
    try {
      AstProvider provider = EmbeddedProvider{};
      const fs::path imported_ast = config.import_dir / artifact_name(id, "ast");
      if (config.graph_source == "import" && fs::exists(imported_ast)) provider = ImportProvider{read_file(imported_ast)};
      const AstTree tree = parse_source(text, config.language, provider, id);
      std::map<GraphKind, SemanticGraph> graphs;
      for (GraphKind g : kGraphKinds) {
        const fs::path imported = config.import_dir / artifact_name(id, lowercase(to_string(g)));
        SemanticGraph graph;
        if (config.graph_source == "import" && fs::exists(imported)) {
          graph = import_graph(read_file(imported), g, text, id);
        } else {
          graph = g == GraphKind::CFG ? build_cfg(tree, text) : g == GraphKind::CDG ? build_cdg(tree, text)
                                                                                     : build_ddg(tree, text);
        }
        graphs[g] = merge_redundant_nodes(graph);
        validate_graph(graphs[g]);
      }
      write_file(layout.artifacts / artifact_name(id, "ast"), write_tree_document(tree));
      for (const auto& [g, graph] : graphs) {
        write_file(layout.artifacts / artifact_name(id, lowercase(to_string(g))), export_graph(graph));
      }
      outcomes[i].ok = true;
    } catch (const Error& ex) {
      outcomes[i] = {false, reason_for(ex), ex.what()};
    }
  });

  std::vector<SkipEntry> skips;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (outcomes[i].ok) {
      ++result.succeeded;
    } else {
      ++result.failures;
      skips.push_back({corpus[i].first, "extract", outcomes[i].reason, 1});
      result.messages.push_back(corpus[i].first + ": " + outcomes[i].message);
    }
  }
  write_file(layout.artifacts / "extract_skips.csv", skip_report_csv(skips));
  stamp.write();
  return result;
}

// ---------------------------------------------------------------- dataset

StageResult run_build_dataset(const PipelineConfig& config) {
  config.validate();
  require_store(config);
  const Layout layout(config.output);
  write_snapshot(config);
  const auto store = RepresentationStore::open(config.store);
  const auto corpus = read_corpus(config.corpus, config.language);
  const auto tasks = config.task_list();

  Stamp stamp(layout, "build-dataset");
  stamp.add_dir(layout.artifacts);
  stamp.add_file(config.store / kManifestName);
  for (const auto& [id, text] : corpus) stamp.add(id + "\n" + text);
  for (const auto& t : tasks) stamp.add(t.name());
  stamp.add(std::to_string(config.dataset_seed) + "/" + format_fixed(config.negative_ratio, 9) + "/" +
            format_fixed(config.split.train, 9) + "/" + format_fixed(config.split.valid, 9) + "/" +
            format_fixed(config.split.test, 9) + "/" + std::to_string(config.tag_min_count));
  StageResult result;
  if (stamp.fresh({layout.datasets / "dataset_skips.csv"})) {
    result.skipped_unchanged = true;
    return result;
  }
  fs::remove_all(layout.datasets);
  fs::create_directories(layout.datasets);

  std::vector<std::optional<ProgramArtifacts>> loaded(corpus.size());
  parallel_for(corpus.size(), config.workers, [&](std::size_t i) {
    if (store.has_source(corpus[i].first)) loaded[i] = load_program(layout, config, corpus[i].first, corpus[i].second);
  });
  std::vector<ProgramArtifacts> programs;
  std::vector<SkipEntry> skips;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (loaded[i]) {
      programs.push_back(std::move(*loaded[i]));
    } else {
      skips.push_back({corpus[i].first, "dataset", store.has_source(corpus[i].first) ? "no_artifacts" : "not_in_store", 1});
    }
  }
  std::vector<std::string> ids;
  for (const auto& p : programs) ids.push_back(p.id);
  const auto assignment = assign_programs(ids, config.split, config.dataset_seed);

  // Tagging vocabulary: Table-1 labels that occur often enough corpus-wide.
  std::vector<std::vector<std::pair<NodeId, TagLabel>>> tags(programs.size());
  std::map<std::string, std::size_t> histogram;
  for (std::size_t i = 0; i < programs.size(); ++i) {
    tags[i] = tag_tokens(programs[i].tree);
    for (const auto& [_, label] : tags[i]) {
      if (!label.is_other()) ++histogram[label.name];
    }
  }
  const auto kept = filter_rare_labels(histogram, config.tag_min_count);
  std::vector<std::string> retained;
  for (const auto& name : tag_vocabulary(config.language)) {
    if (kept.count(name)) retained.push_back(name);
  }
  {
    std::string labels;
    for (const auto& name : retained) labels += name + "\n";
    write_file(layout.datasets / "tagging.labels.txt", labels);
  }

  for (const auto& task : tasks) {
    std::vector<BuildResult> per(programs.size());
    parallel_for(programs.size(), config.workers, [&](std::size_t i) {
      const auto& p = programs[i];
      const auto& tok = store.tokens(p.id);
      switch (task.kind) {
        case TaskKind::AstPair:
          per[i] = build_ast_pairs(p.tree, split_syntax_units(p.tree), tok, p.source, config.dataset_seed,
                                   config.negative_ratio);
          break;
        case TaskKind::Tagging:
          per[i] = build_tagging(p.tree, tags[i], retained, tok, p.source);
          break;
        case TaskKind::Relation:
          per[i] = build_relation(p.graphs.at(task.graph), tok, p.source, config.dataset_seed, config.negative_ratio);
          break;
        case TaskKind::InGraph:
          per[i] = build_ingraph(p.graphs.at(task.graph), p.graphs.at(GraphKind::CFG).nodes, tok, p.source,
                                 config.dataset_seed);
          break;
      }
    });
    std::vector<ProbingExample> examples;
    for (auto& r : per) {
      examples.insert(examples.end(), r.examples.begin(), r.examples.end());
      skips.insert(skips.end(), r.skips.begin(), r.skips.end());
    }
    try {
      if (task.kind == TaskKind::Tagging && retained.size() < 2) {
        throw InsufficientData("fewer than two tagging labels reach tag_min_count");
      }
      const auto split = split_dataset(examples, assignment, derive_seed(config.dataset_seed, task.name()));
      const auto& names = task.kind == TaskKind::Tagging ? retained : std::vector<std::string>{};
      write_file(layout.datasets / (task.name() + ".train.jsonl"), to_jsonl(split.train, names));
      write_file(layout.datasets / (task.name() + ".valid.jsonl"), to_jsonl(split.valid, names));
      write_file(layout.datasets / (task.name() + ".test.jsonl"), to_jsonl(split.test, names));
      ++result.succeeded;
    } catch (const InsufficientData& ex) {
      ++result.failures;
      result.messages.push_back(task.name() + ": " + ex.what());
      skips.push_back({"*", task.name(), "insufficient_data", examples.size()});
    }
  }
  write_file(layout.datasets / "dataset_skips.csv", skip_report_csv(skips));
  stamp.write();
  return result;
}

// ---------------------------------------------------------------- train

StageResult run_train(const PipelineConfig& config) {
  config.validate();
  require_store(config);
  const Layout layout(config.output);
  write_snapshot(config);
  const auto store = RepresentationStore::open(config.store);
  const int L = store.manifest().layers;
  std::vector<int> layers = config.layers;
  if (layers.empty()) {
    for (int l = 0; l <= L; ++l) layers.push_back(l);
  }
  for (int l : layers) {
    if (l > L) throw ConfigError("layer " + std::to_string(l) + " exceeds the store's " + std::to_string(L) + " layers");
  }

  Stamp stamp(layout, "train");
  stamp.add_dir(layout.datasets);
  stamp.add_file(config.store / kManifestName);
  for (int l : layers) stamp.add(std::to_string(l));
  for (auto s : config.seeds) stamp.add(std::to_string(s));
  stamp.add(format_fixed(config.probe.learning_rate, 12) + "/" + format_fixed(config.probe.beta1, 12) + "/" +
            format_fixed(config.probe.beta2, 12) + "/" + format_fixed(config.probe.epsilon, 15) + "/" +
            std::to_string(config.probe.batch_size) + "/" + std::to_string(config.probe.max_epochs) + "/" +
            std::to_string(config.probe.patience) + "/" + std::to_string(config.probe.hidden));
  StageResult result;
  if (stamp.fresh({layout.reports / "eval.csv"})) {
    result.skipped_unchanged = true;
    return result;
  }
  const std::string hash_before = config.verify_frozen_store ? directory_content_hash(config.store) : "";
  fs::remove_all(layout.runs);
  fs::create_directories(layout.runs);

  struct Group {
    Task task;
    int layer;
  };
  std::vector<Group> groups;
  std::map<std::string, std::array<std::vector<ProbingExample>, 3>> data;
  for (const auto& task : config.task_list()) {
    const fs::path train_file = layout.datasets / (task.name() + ".train.jsonl");
    if (!fs::exists(train_file)) {
      ++result.failures;
      result.messages.push_back(task.name() + ": no dataset");
      continue;
    }
    auto& parts = data[task.name()];
    parts[0] = from_jsonl(read_file(train_file));
    parts[1] = from_jsonl(read_file(layout.datasets / (task.name() + ".valid.jsonl")));
    parts[2] = from_jsonl(read_file(layout.datasets / (task.name() + ".test.jsonl")));
    for (int l : layers) groups.push_back({task, l});
  }
  int tagging_classes = 0;
  if (fs::exists(layout.datasets / "tagging.labels.txt")) {
    const auto labels = read_file(layout.datasets / "tagging.labels.txt");
    for (auto line : split(labels, '\n')) {
      if (!trim(line).empty()) ++tagging_classes;
    }
  }

  std::vector<std::vector<EvalReport>> reports(groups.size());
  std::vector<std::string> errors(groups.size());
  parallel_for(groups.size(), config.workers, [&](std::size_t gi) {
    const auto& [task, layer] = groups[gi];
    try {
      const auto& parts = data.at(task.name());
      const auto train = gather_inputs(parts[0], store, layer);
      const auto valid = gather_inputs(parts[1], store, layer);
      const auto test = gather_inputs(parts[2], store, layer);
      const int classes = task.kind == TaskKind::Tagging ? tagging_classes : 2;
      for (auto seed : config.seeds) {
        auto probe = train_probe(train, valid, classes, seed, config.probe);
        probe.task = task.name();
        probe.layer = layer;
        write_file(layout.runs / (task.name() + "_L" + std::to_string(layer) + "_s" + std::to_string(seed) + ".params.json"),
                   probe.to_json());
        reports[gi].push_back(evaluate(probe, test, task.graph_name()));
      }
    } catch (const Error& ex) {
      errors[gi] = task.name() + " layer " + std::to_string(layer) + ": " + ex.what();
    }
  });
  std::vector<EvalReport> all;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    if (!errors[gi].empty()) {
      ++result.failures;
      result.messages.push_back(errors[gi]);
      continue;
    }
    result.succeeded += reports[gi].size();
    all.insert(all.end(), reports[gi].begin(), reports[gi].end());
  }
  write_file(layout.reports / "eval.csv", eval_csv(all));
  if (config.verify_frozen_store && directory_content_hash(config.store) != hash_before) {
    throw StoreError("representation store changed during training");
  }
  if (result.failures == 0) stamp.write();
  return result;
}

// ---------------------------------------------------------------- report

std::vector<EvalReport> read_eval_csv(std::string_view text) {
  std::vector<EvalReport> out;
  bool header = true;
  for (auto line : split(text, '\n')) {
    if (trim(line).empty()) continue;
    if (header) {
      if (line != "task,graph_kind,layer,seed,mcc,macro_f1,n_test") throw ConfigError("unexpected eval.csv header");
      header = false;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 7) throw ConfigError("malformed eval.csv row: " + std::string(line));
    EvalReport r;
    r.task = std::string(f[0]);
    r.graph_kind = std::string(f[1]);
    r.layer = std::stoi(std::string(f[2]));
    r.seed = std::stoull(std::string(f[3]));
    r.mcc = std::stod(std::string(f[4]));
    r.macro_f1 = std::stod(std::string(f[5]));
    r.n_test = std::stoull(std::string(f[6]));
    out.push_back(std::move(r));
  }
  return out;
}

StageResult run_report(const PipelineConfig& config) {
  const Layout layout(config.output);
  write_snapshot(config);
  const fs::path eval_file = layout.reports / "eval.csv";
  if (!fs::exists(eval_file)) throw ConfigError("no eval.csv under " + layout.reports.string() + "; run train first");
  std::optional<RepresentationStore> store;
  if (!config.store.empty() && fs::exists(config.store / kManifestName)) store = RepresentationStore::open(config.store);
  const std::string label = store_label_of(config, store ? &*store : nullptr);

  Stamp stamp(layout, "report");
  stamp.add(read_file(eval_file));
  stamp.add(label);
  StageResult result;
  if (stamp.fresh({layout.reports / "aggregate.csv"})) {
    result.skipped_unchanged = true;
    return result;
  }
  const auto rows = aggregate_runs(read_eval_csv(read_file(eval_file)));
  write_file(layout.reports / "aggregate.csv", aggregate_csv(rows));
  std::map<std::string, std::vector<AggregateRow>> by_task;
  for (const auto& r : rows) by_task[r.task].push_back(r);
  for (const auto& [task, task_rows] : by_task) {
    write_file(layout.reports / (task + ".svg"), layer_chart_svg(task, {{label, task_rows}}));
    ++result.succeeded;
  }
  stamp.write();
  return result;
}

// ---------------------------------------------------------------- attention

namespace {

std::vector<HeadTestResult> read_heads_csv(std::string_view text) {
  std::vector<HeadTestResult> out;
  bool header = true;
  for (auto line : split(text, '\n')) {
    if (trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 8) throw ConfigError("malformed heads.csv row: " + std::string(line));
    HeadTestResult r;
    r.head = {std::stoi(std::string(f[0])), std::stoi(std::string(f[1]))};
    r.graph = graph_kind_from_string(f[2]);
    r.test.n = std::stoull(std::string(f[3]));
    r.test.mean_diff = std::stod(std::string(f[4]));
    r.test.t = std::stod(std::string(f[5]));
    r.test.p = std::stod(std::string(f[6]));
    r.test.significant = f[7] == "1";
    out.push_back(r);
  }
  return out;
}

}  // namespace

StageResult run_attention(const PipelineConfig& config) {
  config.validate();
  require_store(config);
  const Layout layout(config.output);
  write_snapshot(config);
  const auto store = RepresentationStore::open(config.store);
  const auto corpus = read_corpus(config.corpus, config.language);
  const std::string label = store_label_of(config, &store);
  StageResult result;

  Stamp stamp(layout, "attention");
  stamp.add_dir(layout.artifacts);
  stamp.add_file(config.store / kManifestName);
  for (const auto& [id, text] : corpus) stamp.add(id + "\n" + text);
  stamp.add(label + "/" + config.compare_label + "/" + format_fixed(config.alpha, 12) + "/" +
            std::to_string(config.attention_normalized) + std::to_string(config.attention_bonferroni) + "/" +
            std::to_string(config.attention_cap) + "/" + std::to_string(config.attention_seed));
  if (!config.compare_heads.empty()) stamp.add_file(config.compare_heads);
  std::vector<fs::path> expected{layout.reports / "heads.csv", layout.reports / "counts.csv"};
  if (!config.compare_heads.empty()) expected.push_back(layout.reports / "overlap.csv");
  if (stamp.fresh(expected)) {
    result.skipped_unchanged = true;
    return result;
  }

  std::vector<HeadTestResult> results;
  for (GraphKind g : {GraphKind::CDG, GraphKind::CFG, GraphKind::DDG}) {
    std::vector<NodePartition> partitions;
    for (const auto& [id, text] : corpus) {
      const fs::path file = layout.artifacts / artifact_name(id, lowercase(to_string(g)));
      if (!fs::exists(file) || !store.has_source(id)) continue;
      try {
        const auto graph = import_graph(read_file(file), g, text, id);
        auto parts = partition_nodes(graph, store.tokens(id));
        partitions.insert(partitions.end(), parts.begin(), parts.end());
      } catch (const AlignmentError& ex) {
        ++result.failures;
        result.messages.push_back(id + " " + std::string(to_string(g)) + ": " + ex.what());
      }
    }
    partitions = cap_partitions(std::move(partitions), config.attention_cap,
                                derive_seed(config.attention_seed, to_string(g)));
    std::vector<std::vector<NodePartition>> by_source;
    for (auto& p : partitions) {
      if (by_source.empty() || by_source.back().front().source_id != p.source_id) by_source.emplace_back();
      by_source.back().push_back(std::move(p));
    }
    std::vector<std::vector<HeadSample>> samples(by_source.size());
    parallel_for(by_source.size(), config.workers,
                 [&](std::size_t i) { samples[i] = collect_head_samples(store, by_source[i]); });
    std::vector<HeadSample> all;
    for (auto& s : samples) all.insert(all.end(), s.begin(), s.end());
    const auto tested = test_heads(all, g, {config.alpha, config.attention_normalized, config.attention_bonferroni});
    results.insert(results.end(), tested.begin(), tested.end());
    ++result.succeeded;
  }
  write_file(layout.reports / "heads.csv", heads_csv(results));

  std::map<std::string, std::vector<HeadTestResult>> by_store{{label, results}};
  if (!config.compare_heads.empty()) {
    const auto other = read_heads_csv(read_file(config.compare_heads));
    by_store[config.compare_label] = other;
    std::map<std::string, std::map<GraphKind, OverlapRatios>> overlap;
    for (GraphKind g : {GraphKind::CDG, GraphKind::CFG, GraphKind::DDG}) {
      std::vector<HeadTestResult> mine, theirs;
      for (const auto& r : results) {
        if (r.graph == g) mine.push_back(r);
      }
      for (const auto& r : other) {
        if (r.graph == g) theirs.push_back(r);
      }
      overlap[label][g] = overlap_ratios(significant_heads(mine), significant_heads(theirs));
    }
    write_file(layout.reports / "overlap.csv", overlap_csv(label, config.compare_label, overlap));
  }
  write_file(layout.reports / "counts.csv", counts_csv(count_semantic_heads(by_store)));
  if (result.failures == 0) stamp.write();
  return result;
}

}  // namespace codeprobe
